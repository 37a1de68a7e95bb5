#pragma once

#include <cstdint>

#include "dvta/alignment/params.hpp"

namespace dvta {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  ///< L2 added to the gradient; off by default
  double grad_clip = 0.0;     ///< global-norm clip; 0 disables
};

/// Moment estimates for every parameter tensor.
struct AdamState {
  std::int64_t step = 0;
  ModelParams first_moment;
  ModelParams second_moment;

  static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update at learning rate `lr`:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// Throws NumericError naming the first parameter with a non-finite gradient.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const AdamConfig& config = {});

/// lr_0 * (1 + cos(pi * step / total_steps)) / 2, i.e. annealed to 0 at total_steps.
double cosine_annealed_lr(double base_lr, std::int64_t step, std::int64_t total_steps);

}  // namespace dvta
