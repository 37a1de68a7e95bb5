#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace dvta {

/// Squashing applied to the metric network output before the softmax.
enum class ScoreActivation { kNone, kSigmoid, kLeakySigmoid };

/// Training objective. kKld uses multi-positive targets; the other two use
/// one-hot diagonal targets (symmetric and single-direction respectively).
enum class LossKind { kKld, kInfoNce, kSoftmaxCe };

struct ModelConfig {
  std::size_t visual_dim = 256;
  std::size_t text_dim = 768;
  std::size_t embed_dim = 768;
  std::size_t visual_hidden = 512;
  std::vector<std::size_t> metric_hidden{768, 384};
  double metric_slope = 0.01;
  double tau = 0.1;
  bool learnable_tau = false;
  double gamma = 0.01;
  ScoreActivation activation = ScoreActivation::kLeakySigmoid;
  LossKind loss = LossKind::kKld;
  bool use_sde = true;
  bool use_da = true;
  bool use_aa = true;
  /// false swaps the two-layer visual projector for a single linear layer.
  bool deep_visual_projector = true;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kTauMin = 0.01;
inline constexpr double kTauMax = 1.0;

/// Every violated invariant, each prefixed with its JSON path under `prefix`.
std::vector<std::string> validate(const ModelConfig& config, const std::string& prefix = "/model");

nlohmann::json to_json(const ModelConfig& config);

/// Applies keys present in `doc` on top of `base`. Unknown keys and type
/// errors are appended to `problems`.
ModelConfig model_config_from_json(const nlohmann::json& doc, std::vector<std::string>& problems,
                                   ModelConfig base = {}, const std::string& prefix = "/model");

std::string to_string(ScoreActivation a);
std::string to_string(LossKind k);

}  // namespace dvta
