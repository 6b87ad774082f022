#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "layerforge/adam.hpp"
#include "layerforge/graph.hpp"
#include "layerforge/tensor.hpp"

namespace layerforge::vae {

enum class ArchKind { fc, conv, laplacian_conv };

// One encoder trunk stage; decoders mirror the list in reverse with
// transposed convolutions, ending in a linear layer.
struct StageSpec {
  enum class Op { conv_same, conv_valid, fc };
  Op op = Op::conv_same;
  int k = 0;       // conv kernel
  int stride = 1;  // conv stride
  int width = 0;   // output channels, or fc units
};

struct ArchSpec {
  std::string name;
  ArchKind kind = ArchKind::conv;
  int patch = 64;         // training crop size
  int levels = 1;         // pyramid depth; 1 for non-Laplacian kinds
  int code_channels = 0;  // conv kinds: latent width per code pixel
  int code_dims = 0;      // fc kinds: global latent width
  std::vector<StageSpec> stages;
};

// Named presets: vae1, vae2, cvae, lcvae, authored (alias paper) at full
// scale; desk-vae1, desk-vae2, desk-cvae, desk-lcvae (alias desk) at 32x32.
ArchSpec preset(const std::string& name);
const std::vector<std::string>& preset_names();

// Spherical Gaussian over concatenated per-pixel codes; d == 0 means unfitted.
struct GaussianCodePrior {
  std::vector<real> mean;
  real variance = real(1);
  int d = 0;
  std::int64_t sample_count = 0;
};

struct LayerModel {
  ArchSpec arch;
  std::map<std::string, Tensor> params;
  GaussianCodePrior prior;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  std::string dataset_id;
};

struct ParamDef {
  std::string name;
  std::vector<int> shape;
  int fan_in = 0;  // 0 marks a zero-initialized bias
};

// Deterministic walk: per level, encoder stages, encoder head, decoder stages.
std::vector<ParamDef> param_defs(const ArchSpec& arch);
std::size_t param_count(const ArchSpec& arch);

// Fan-in scaled uniform weights, zero biases.
LayerModel init_model(const ArchSpec& arch, std::uint64_t seed);

// Per-stage trunk output shapes plus the code-field shape, one list per
// pyramid level, for a given square input size.
std::vector<std::vector<std::array<int, 3>>> shape_table(const ArchSpec& arch, int input);

struct CodeField {
  Tensor mean;
  Tensor log_variance;
};

struct TrainConfig {
  real lr0 = real(1e-3);
  real decay = real(0.9);
  int decay_every = 500;
  real kl_base = real(20);  // kl weight = kl_base * sigmoid(.02 t - .5)
  real residual_weight = real(1000);
  real image_prior_weight = real(0.1);
  int epochs = 25;
  int batch = 16;
  int patch = 0;  // 0: use arch.patch
  std::uint64_t seed = 0;
};

real kl_weight(std::int64_t t, real kl_base = real(20));

// Differentiable builders. pv maps parameter names to tape nodes; x and z are
// log-domain image / code nodes. Encoders emit (mean, log_variance).
std::map<std::string, Var> param_vars(Graph& g, const LayerModel& model, bool trainable);
std::pair<Var, Var> build_encoder(Graph& g, const ArchSpec& arch,
                                  const std::map<std::string, Var>& pv, int level, Var x);
Var build_decoder(Graph& g, const ArchSpec& arch, const std::map<std::string, Var>& pv, int level,
                  Var z, int out_h, int out_w);

struct ElboTerms {
  Var total;
  Var residual;
  Var kl;
  Var image_prior;
};

// Single-patch loss at iteration t; eps_seed drives the reparameterization
// noise (pass the same seed to reproduce a draw).
ElboTerms build_elbo(Graph& g, const ArchSpec& arch, const std::map<std::string, Var>& pv,
                     const Tensor& log_image, std::int64_t t, std::uint64_t eps_seed,
                     const TrainConfig& cfg);

// Inference on mean codes (no sampling).
std::vector<CodeField> encode(const LayerModel& model, const Tensor& log_image);
Tensor decode(const LayerModel& model, const std::vector<Tensor>& code_means, int out_h,
              int out_w);
// Assumes every stride halved an even extent when inverting the chain.
Tensor decode(const LayerModel& model, const std::vector<Tensor>& code_means);
// D(E(I).mean); optionally reports mean squared log-domain error.
Tensor reconstruct_patch(const LayerModel& model, const Tensor& log_image,
                         real* l2_error = nullptr);

struct TrainState {
  LayerModel model;
  std::map<std::string, AdamState> adam;
  TrainConfig config;
  std::vector<real> loss_history;
};

TrainState init_training(const ArchSpec& arch, const TrainConfig& cfg);

// Runs `epochs` passes of ceil(n / batch) iterations; images are linear-domain
// [0, 1], cropped and mapped to the log domain internally. masks may be empty
// or hold one (H, W, 1) mask per image for in-mask crop sampling. Every random
// draw is keyed on (seed, iteration), so resuming from a checkpoint replays
// the identical trajectory.
void train_epochs(TrainState& st, const std::vector<Tensor>& images,
                  const std::vector<Tensor>& masks, int epochs);

}  // namespace layerforge::vae
