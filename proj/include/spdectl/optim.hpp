#pragma once

#include <vector>

#include "spdectl/tensor.hpp"

namespace spdectl {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators shaped like the parameters they track.
struct AdamState {
  AdamOptions options;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const std::vector<Tensor>& params, AdamOptions options);

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// Parameters that were never reached by `backward` are treated as having a
/// zero gradient.
void adam_step(std::vector<Tensor>& params, AdamState& state);

void zero_grads(std::vector<Tensor>& params);

}  // namespace spdectl
