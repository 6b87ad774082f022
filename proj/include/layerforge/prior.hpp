#pragma once

#include <vector>

#include "layerforge/graph.hpp"
#include "layerforge/tensor.hpp"
#include "layerforge/vae.hpp"

namespace layerforge::prior {

using vae::GaussianCodePrior;
using vae::LayerModel;

constexpr real variance_floor = real(1e-4);

// Encodes each linear-domain image, resizes every level's mean code field to
// the largest level, concatenates channelwise, and emits one row per spatial
// position: (total positions, total code width).
Tensor collect_codes(const LayerModel& model, const std::vector<Tensor>& linear_images);

// mean = sample mean; variance = per-dimension (N-1) variances pooled by
// averaging over dimensions, floored at variance_floor. Needs >= 2 rows.
GaussianCodePrior fit_prior(const Tensor& samples);

// Mean over code pixels of -log N(z; mean, variance I), with code_means
// concatenated exactly like collect_codes.
real code_nll(const GaussianCodePrior& prior, const std::vector<Tensor>& code_means);
Var code_nll(Graph& g, const GaussianCodePrior& prior, const std::vector<Var>& code_means);

// (sum |forward dx| + sum |forward dy|) / element count; offset-invariant.
real image_l1_gradient(const Tensor& image);
Var image_l1_gradient(Var image);

}  // namespace layerforge::prior
