#pragma once

#include "layerforge/tensor.hpp"

namespace layerforge {

// Adam with bias correction: m and v track first and second gradient moments;
// the update is lr * m_hat / (sqrt(v_hat) + epsilon).
struct AdamState {
  Tensor exp_avg;     // first moment
  Tensor exp_avg_sq;  // second moment
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(Tensor& param, const Tensor& grad, AdamState& state, double lr);

// lr0 * decay^floor(iteration / every)
double lr_schedule(double lr0, long iteration, double decay = 0.9, long every = 500);

}  // namespace layerforge
