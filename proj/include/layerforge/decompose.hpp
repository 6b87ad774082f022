#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "layerforge/graph.hpp"
#include "layerforge/tensor.hpp"
#include "layerforge/vae.hpp"

namespace layerforge::decompose {

enum class InitMode {
  smoothed_split,      // shading = blurred log image, albedo = the residual
  shading_from_image,  // shading = log image, albedo = constant material
};

struct LayerSlot {
  std::string name;  // albedo | shading | detail
  vae::LayerModel model;
};

struct DecompositionSpec {
  std::vector<LayerSlot> layers;
  real lambda_r = real(100);  // residual weight; see default_lambda_r
  real lambda_p = real(1e-4);  // code NLL weight
  real lambda_c = real(1e4);   // pairwise decorrelation weight
  int corr_patch = 8;          // non-overlapping covariance patches per level
  int steps = 2000;
  real lr = real(0.01);
  real detail_dc = 0;          // weight on coarsest-level detail constancy
  bool exact_sum = false;      // absorb the final residual into shading
  bool negate_prior = false;   // flip the code NLL term to enter negatively
  InitMode init = InitMode::smoothed_split;
  std::uint64_t seed = 0;
};

// 100 for two layers, 1e4 once a third joins.
real default_lambda_r(std::size_t layer_count);

// Two or more uniquely named layers, nonnegative weights, image extents the
// correlation pyramid can split.
void validate(const DecompositionSpec& spec, int image_h, int image_w);

// Separable reflect-101 Gaussian, radius = ceil(3 sigma).
Tensor gaussian_blur(const Tensor& image, double sigma);

// mean over pixels of (a - mean(a)) (b - mean(b))^T across channels: (C, C).
Tensor patch_cov(const Tensor& a, const Tensor& b);

// Mean over Laplacian levels and non-overlapping patches of the Frobenius
// norm of patch_cov; trailing partial patches are dropped.
real correlation(const Tensor& a, const Tensor& b, int levels, int patch);
Var correlation(Graph& g, Var a, Var b, int levels, int patch);

// Weighted terms; they sum to total. Unused terms are zero constants.
struct ObjectiveTerms {
  Var total;
  Var residual;
  Var code_nll;
  Var correlation;
  Var detail_dc;
  std::vector<Var> decoded;  // per-layer full log-domain images
};

// codes[i][l] is layer i's level-l mean field, already on g's tape. Throws
// NumericError with a per-term dump when the total is not finite.
ObjectiveTerms build_objective(Graph& g, const DecompositionSpec& spec,
                               const std::vector<std::vector<Var>>& codes,
                               const Tensor& log_image);

// Heuristic per-layer starting images in the log domain; they sum to the
// input exactly. The codes follow by encoding each with its layer's model.
std::vector<Tensor> initial_log_layers(const DecompositionSpec& spec, const Tensor& log_image);
std::vector<std::vector<Tensor>> initialize(const DecompositionSpec& spec,
                                            const Tensor& log_image);

struct TraceRow {
  real total = 0;
  real residual = 0;
  real code_nll = 0;
  real correlation = 0;
  real detail_dc = 0;
};

struct DecompositionResult {
  std::vector<std::string> names;
  std::vector<Tensor> log_layers;
  std::vector<Tensor> linear_layers;
  std::vector<std::vector<Tensor>> codes;  // best-iterate code means
  std::vector<TraceRow> trace;             // one row per evaluated iterate
  long best_step = 0;
  double seconds = 0;
  bool converged = false;
};

// Adam over the code means only; returns the best iterate seen, never a
// worse-than-initial state. A non-finite step stops early with converged
// false. The image arrives in the linear domain.
DecompositionResult optimize(const DecompositionSpec& spec, const Tensor& image);
DecompositionResult optimize(const DecompositionSpec& spec, const Tensor& image,
                             const std::vector<std::vector<Tensor>>& init_codes);

}  // namespace layerforge::decompose
