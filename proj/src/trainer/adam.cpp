#include "dvta/trainer/adam.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "dvta/errors.hpp"

namespace dvta {

AdamState AdamState::for_params(const ModelParams& params) {
  return AdamState{0, ModelParams::zeros_like(params), ModelParams::zeros_like(params)};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (grads.count() != params.count() || state.first_moment.count() != params.count()) {
    throw ShapeError("adam_step: gradient/state layout does not match parameters");
  }
  double sq_norm = 0.0;
  for (std::size_t i = 0; i < params.count(); ++i) {
    const Matrix& g = grads.tensor(i);
    if (g.rows() != params.tensor(i).rows() || g.cols() != params.tensor(i).cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + params.name(i));
    }
    for (double x : g.data()) {
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in parameter " + params.name(i));
      sq_norm += x * x;
    }
  }
  const double clip_scale = config.grad_clip > 0.0 && std::sqrt(sq_norm) > config.grad_clip
                                ? config.grad_clip / std::sqrt(sq_norm)
                                : 1.0;

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.count(); ++i) {
    auto theta = params.tensor(i).data();
    auto g = grads.tensor(i).data();
    auto m = state.first_moment.tensor(i).data();
    auto v = state.second_moment.tensor(i).data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k] * clip_scale + config.weight_decay * theta[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * gk;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * gk * gk;
      theta[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config.epsilon);
    }
  }
}

double cosine_annealed_lr(double base_lr, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 0) return base_lr;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, base_lr * (1.0 + std::cos(std::numbers::pi * frac)) / 2.0);
}

}  // namespace dvta
