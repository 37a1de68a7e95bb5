#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvta/alignment/config.hpp"
#include "dvta/dataio/bank.hpp"
#include "dvta/dataio/synthetic.hpp"
#include "dvta/trainer/trainer.hpp"

namespace dvta {

/// A run configuration: {"model": {...}, "train": {...}}. Missing keys take
/// their defaults. Dimensions absent from the file are filled from the data.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  bool visual_dim_given = false;
  bool text_dim_given = false;
  bool embed_dim_given = false;
};

/// Parses a document without the data-dependent checks. Problems carry JSON
/// paths, e.g. "/model/gamma: gamma must be positive".
RunConfig parse_run_config(const nlohmann::json& doc, std::vector<std::string>& problems);

/// Reads and parses a config file; throws ValidationError listing every
/// problem, including unreadable files and JSON syntax errors.
RunConfig validate_config(const std::filesystem::path& path);

/// Fills missing dimensions from the data (embed_dim defaults to the text
/// width), then checks the config against it. Throws ValidationError.
void resolve_against_data(RunConfig& config, const Dataset& data);

nlohmann::json to_json(const RunConfig& config);

/// Keys: classes, seen, unseen, visual_dim, text_dim, samples_per_class,
/// visual_noise, context_noise, seed. Missing keys keep `base`.
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc, std::vector<std::string>& problems,
                                       SyntheticSpec base = {});
nlohmann::json to_json(const SyntheticSpec& spec);

/// Reads a JSON file; throws ValidationError naming the path on failure.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace dvta
