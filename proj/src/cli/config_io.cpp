#include "dvta/cli/config_io.hpp"

#include <fstream>
#include <sstream>

#include "dvta/errors.hpp"

namespace dvta {

RunConfig parse_run_config(const nlohmann::json& doc, std::vector<std::string>& problems) {
  RunConfig out;
  if (!doc.is_object()) {
    problems.push_back(": expected a JSON object");
    return out;
  }
  for (const auto& [key, _] : doc.items()) {
    if (key != "model" && key != "train") problems.push_back("/" + key + ": unknown key");
  }
  if (auto it = doc.find("model"); it != doc.end()) {
    out.model = model_config_from_json(*it, problems, out.model, "/model");
    if (it->is_object()) {
      out.visual_dim_given = it->contains("visual_dim");
      out.text_dim_given = it->contains("text_dim");
      out.embed_dim_given = it->contains("embed_dim");
    }
  }
  if (auto it = doc.find("train"); it != doc.end()) {
    out.train = train_config_from_json(*it, problems, out.train, "/train");
  }
  auto m = validate(out.model, "/model");
  auto t = validate(out.train, "/train");
  problems.insert(problems.end(), m.begin(), m.end());
  problems.insert(problems.end(), t.begin(), t.end());
  return out;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({path.string() + ": cannot read file"});
  std::stringstream text;
  text << in.rdbuf();
  try {
    return nlohmann::json::parse(text.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError({path.string() + ": invalid JSON: " + e.what()});
  }
}

RunConfig validate_config(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json_file(path);
  std::vector<std::string> problems;
  RunConfig config = parse_run_config(doc, problems);
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return config;
}

void resolve_against_data(RunConfig& config, const Dataset& data) {
  std::vector<std::string> problems;
  const std::size_t dv = data.samples.visual.cols();
  const std::size_t dt = data.classes.text_dim();
  if (!config.visual_dim_given) config.model.visual_dim = dv;
  if (!config.text_dim_given) config.model.text_dim = dt;
  if (!config.embed_dim_given) config.model.embed_dim = config.model.text_dim;
  if (config.model.visual_dim != dv) {
    problems.push_back("/model/visual_dim: " + std::to_string(config.model.visual_dim) +
                       " does not match the data width " + std::to_string(dv));
  }
  if (config.model.text_dim != dt) {
    problems.push_back("/model/text_dim: " + std::to_string(config.model.text_dim) +
                       " does not match the data width " + std::to_string(dt));
  }
  auto more = validate(config.model, "/model");
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc, std::vector<std::string>& problems,
                                       SyntheticSpec base) {
  if (!doc.is_object()) {
    problems.push_back(": expected a JSON object");
    return base;
  }
  auto count = [&](const std::string& key, std::size_t& out) {
    const auto& v = doc[key];
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      problems.push_back("/" + key + ": expected a non-negative integer");
    } else {
      out = v.get<std::size_t>();
    }
  };
  auto real = [&](const std::string& key, double& out) {
    const auto& v = doc[key];
    if (!v.is_number()) problems.push_back("/" + key + ": expected a number");
    else out = v.get<double>();
  };
  for (const auto& [key, value] : doc.items()) {
    if (key == "classes") count(key, base.classes);
    else if (key == "seen") count(key, base.seen);
    else if (key == "unseen") count(key, base.unseen);
    else if (key == "visual_dim") count(key, base.visual_dim);
    else if (key == "text_dim") count(key, base.text_dim);
    else if (key == "samples_per_class") count(key, base.samples_per_class);
    else if (key == "visual_noise") real(key, base.visual_noise);
    else if (key == "context_noise") real(key, base.context_noise);
    else if (key == "seed") {
      if (!value.is_number_integer() || value.get<long long>() < 0) {
        problems.push_back("/seed: expected a non-negative integer");
      } else {
        base.seed = value.get<std::uint64_t>();
      }
    } else {
      problems.push_back("/" + key + ": unknown key");
    }
  }
  return base;
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"classes", s.classes},
          {"seen", s.seen},
          {"unseen", s.unseen},
          {"visual_dim", s.visual_dim},
          {"text_dim", s.text_dim},
          {"samples_per_class", s.samples_per_class},
          {"visual_noise", s.visual_noise},
          {"context_noise", s.context_noise},
          {"seed", s.seed}};
}

nlohmann::json to_json(const RunConfig& config) {
  return {{"model", to_json(config.model)}, {"train", to_json(config.train)}};
}

}  // namespace dvta
