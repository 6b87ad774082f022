#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "layerforge/tensor.hpp"
#include "layerforge/vae.hpp"

namespace layerforge::metrics {

// One relative-reflectance judgment: which of two pixels has the darker
// surface color, or E when they look equal. Coordinates are (x, y).
struct Judgment {
  int x1 = 0, y1 = 0;
  int x2 = 0, y2 = 0;
  char darker = 'E';  // '1', '2', or 'E'
  real weight = real(1);
};

struct JudgmentFile {
  int width = 0, height = 0;
  std::vector<Judgment> judgments;
};

// Scale-invariant MSE: mean squared error at the least-squares scale
// alpha = <pred,gt>/<pred,pred>. A pixel counts when mask > 0.5 (null mask
// means all). An identically zero prediction scores mean(gt^2).
real scaled_mse(const Tensor& pred, const Tensor& gt, const Tensor* mask = nullptr);

// Mean of scaled_mse over square windows placed at stride offsets; windows
// with under 50% mask coverage are skipped. Throws when the image is smaller
// than one window or every window is skipped.
real local_scaled_mse(const Tensor& pred, const Tensor& gt, int window = 20, int stride = 10,
                      const Tensor* mask = nullptr);

struct MseTriple {
  real s_mse = 0;   // scaled_mse on shading
  real r_mse = 0;   // scaled_mse on albedo
  real rs_mse = 0;  // mean of local_scaled_mse on both
};

MseTriple smse_rmse_rsmse(const Tensor& pred_albedo, const Tensor& pred_shading,
                          const Tensor& gt_albedo, const Tensor& gt_shading,
                          const Tensor* mask = nullptr, int window = 20, int stride = 10);

// Constant shading at the mean luminance; albedo = image / shading, so the
// pair composes back to the input.
std::pair<Tensor, Tensor> naive_baseline(const Tensor& image);  // (albedo, shading)

enum class Transfer { linear, srgb };

// Weighted human disagreement rate: predict "1 darker" when l2/l1 > 1+delta,
// "2 darker" when l1/l2 > 1+delta, else E; a zero-luminance point is darker
// than any positive one. Luminance is the channel mean, optionally pushed
// through the sRGB transfer first.
real whdr(const Tensor& albedo, const JudgmentFile& judgments, real delta,
          Transfer transfer = Transfer::linear);

// Mean over patches of the mean squared reconstruction error in the model's
// log training domain; patches arrive in the linear domain.
real recon_l2(const vae::LayerModel& model, const std::vector<Tensor>& linear_patches);

JudgmentFile load_judgments(const std::string& path);
void save_judgments(const JudgmentFile& file, const std::string& path);

// Judgments consistent with the given albedo under the same delta rule;
// point pairs are seeded uniform draws.
JudgmentFile synth_judgments(const Tensor& albedo, int count, real delta, std::uint64_t seed,
                             Transfer transfer = Transfer::linear);

}  // namespace layerforge::metrics
