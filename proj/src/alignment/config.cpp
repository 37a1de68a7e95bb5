#include "dvta/alignment/config.hpp"

#include <cmath>
#include <set>

namespace dvta {
namespace {

using nlohmann::json;

template <typename T>
void read(const json& doc, const char* key, T& out, std::vector<std::string>& problems,
          const std::string& prefix, const char* expected) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    problems.push_back(prefix + "/" + key + ": expected " + expected);
  }
}

void read_size(const json& doc, const char* key, std::size_t& out,
               std::vector<std::string>& problems, const std::string& prefix) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  if (!it->is_number_integer() || it->get<long long>() < 0) {
    problems.push_back(prefix + "/" + key + ": expected a non-negative integer");
    return;
  }
  out = it->get<std::size_t>();
}

}  // namespace

std::string to_string(ScoreActivation a) {
  switch (a) {
    case ScoreActivation::kNone: return "none";
    case ScoreActivation::kSigmoid: return "sigmoid";
    case ScoreActivation::kLeakySigmoid: return "leaky_sigmoid";
  }
  return "?";
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kKld: return "kld";
    case LossKind::kInfoNce: return "infonce";
    case LossKind::kSoftmaxCe: return "softmax_ce";
  }
  return "?";
}

std::vector<std::string> validate(const ModelConfig& c, const std::string& prefix) {
  std::vector<std::string> problems;
  auto need_dim = [&](std::size_t v, const char* key) {
    if (v < 1) problems.push_back(prefix + "/" + key + ": must be >= 1");
  };
  need_dim(c.visual_dim, "visual_dim");
  need_dim(c.text_dim, "text_dim");
  need_dim(c.embed_dim, "embed_dim");
  if (c.deep_visual_projector) need_dim(c.visual_hidden, "visual_hidden");
  if (c.use_aa && c.metric_hidden.empty()) {
    problems.push_back(prefix + "/metric_hidden: at least one hidden layer is required");
  }
  for (std::size_t i = 0; i < c.metric_hidden.size(); ++i) {
    if (c.metric_hidden[i] < 1) {
      problems.push_back(prefix + "/metric_hidden/" + std::to_string(i) + ": must be >= 1");
    }
  }
  if (!(c.tau > 0.0) || !std::isfinite(c.tau)) problems.push_back(prefix + "/tau: tau must be positive");
  if (c.learnable_tau && (c.tau < kTauMin || c.tau > kTauMax)) {
    problems.push_back(prefix + "/tau: learnable tau must start inside [0.01, 1]");
  }
  if (!(c.gamma > 0.0) || !std::isfinite(c.gamma)) {
    problems.push_back(prefix + "/gamma: gamma must be positive");
  }
  if (!(c.metric_slope >= 0.0)) problems.push_back(prefix + "/metric_slope: must be >= 0");
  if (!c.use_da && !c.use_aa) {
    problems.push_back(prefix + "/use_da: at least one of use_da and use_aa must be true");
  }
  return problems;
}

json to_json(const ModelConfig& c) {
  return json{{"visual_dim", c.visual_dim},
              {"text_dim", c.text_dim},
              {"embed_dim", c.embed_dim},
              {"visual_hidden", c.visual_hidden},
              {"metric_hidden", c.metric_hidden},
              {"metric_slope", c.metric_slope},
              {"tau", c.tau},
              {"learnable_tau", c.learnable_tau},
              {"gamma", c.gamma},
              {"activation", to_string(c.activation)},
              {"loss", to_string(c.loss)},
              {"use_sde", c.use_sde},
              {"use_da", c.use_da},
              {"use_aa", c.use_aa},
              {"deep_visual_projector", c.deep_visual_projector}};
}

ModelConfig model_config_from_json(const json& doc, std::vector<std::string>& problems,
                                   ModelConfig base, const std::string& prefix) {
  if (!doc.is_object()) {
    problems.push_back(prefix + ": expected an object");
    return base;
  }
  static const std::set<std::string> known{
      "visual_dim", "text_dim", "embed_dim", "visual_hidden", "metric_hidden", "metric_slope",
      "tau", "learnable_tau", "gamma", "activation", "loss", "use_sde", "use_da", "use_aa",
      "deep_visual_projector"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) problems.push_back(prefix + "/" + key + ": unknown key");
  }
  ModelConfig c = base;
  read_size(doc, "visual_dim", c.visual_dim, problems, prefix);
  read_size(doc, "text_dim", c.text_dim, problems, prefix);
  read_size(doc, "embed_dim", c.embed_dim, problems, prefix);
  read_size(doc, "visual_hidden", c.visual_hidden, problems, prefix);
  if (auto it = doc.find("metric_hidden"); it != doc.end()) {
    if (!it->is_array()) {
      problems.push_back(prefix + "/metric_hidden: expected an array of integers");
    } else {
      c.metric_hidden.clear();
      for (std::size_t i = 0; i < it->size(); ++i) {
        const auto& v = (*it)[i];
        if (!v.is_number_integer() || v.get<long long>() < 0) {
          problems.push_back(prefix + "/metric_hidden/" + std::to_string(i) +
                             ": expected a non-negative integer");
        } else {
          c.metric_hidden.push_back(v.get<std::size_t>());
        }
      }
    }
  }
  read(doc, "metric_slope", c.metric_slope, problems, prefix, "a number");
  read(doc, "tau", c.tau, problems, prefix, "a number");
  read(doc, "learnable_tau", c.learnable_tau, problems, prefix, "a boolean");
  read(doc, "gamma", c.gamma, problems, prefix, "a number");
  read(doc, "use_sde", c.use_sde, problems, prefix, "a boolean");
  read(doc, "use_da", c.use_da, problems, prefix, "a boolean");
  read(doc, "use_aa", c.use_aa, problems, prefix, "a boolean");
  read(doc, "deep_visual_projector", c.deep_visual_projector, problems, prefix, "a boolean");

  std::string name;
  if (doc.contains("activation")) {
    read(doc, "activation", name, problems, prefix, "a string");
    if (name == "none") c.activation = ScoreActivation::kNone;
    else if (name == "sigmoid") c.activation = ScoreActivation::kSigmoid;
    else if (name == "leaky_sigmoid") c.activation = ScoreActivation::kLeakySigmoid;
    else problems.push_back(prefix + "/activation: expected none, sigmoid or leaky_sigmoid");
  }
  if (doc.contains("loss")) {
    name.clear();
    read(doc, "loss", name, problems, prefix, "a string");
    if (name == "kld") c.loss = LossKind::kKld;
    else if (name == "infonce") c.loss = LossKind::kInfoNce;
    else if (name == "softmax_ce") c.loss = LossKind::kSoftmaxCe;
    else problems.push_back(prefix + "/loss: expected kld, infonce or softmax_ce");
  }
  return c;
}

}  // namespace dvta
