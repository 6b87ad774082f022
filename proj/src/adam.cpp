#include "layerforge/adam.hpp"

#include <cmath>

namespace layerforge {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr) {
  if (!param.same_shape(grad)) {
    throw DimensionError("adam_step: param " + shape_str(param.shape()) + " vs grad " +
                         shape_str(grad.shape()));
  }
  if (state.exp_avg.empty()) {
    state.exp_avg = Tensor(param.shape());
    state.exp_avg_sq = Tensor(param.shape());
  } else if (!state.exp_avg.same_shape(param)) {
    throw DimensionError("adam_step: state shape does not match param");
  }
  require_finite(grad, "adam_step gradient");
  state.step_count += 1;
  const real b1 = static_cast<real>(state.beta1);
  const real b2 = static_cast<real>(state.beta2);
  const real corr1 = real(1) - static_cast<real>(std::pow(state.beta1, state.step_count));
  const real corr2 = real(1) - static_cast<real>(std::pow(state.beta2, state.step_count));
  const real eps = static_cast<real>(state.epsilon);
  const real step = static_cast<real>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    real g = grad[i];
    real m = state.exp_avg[i] = b1 * state.exp_avg[i] + (real(1) - b1) * g;
    real v = state.exp_avg_sq[i] = b2 * state.exp_avg_sq[i] + (real(1) - b2) * g * g;
    real m_hat = m / corr1;
    real v_hat = v / corr2;
    param[i] -= step * m_hat / (std::sqrt(v_hat) + eps);
  }
}

double lr_schedule(double lr0, long iteration, double decay, long every) {
  if (every <= 0) return lr0;
  return lr0 * std::pow(decay, static_cast<double>(iteration / every));
}

}  // namespace layerforge
