#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"
#include "dvta/dataio/bank.hpp"

namespace dvta {

struct ClassAccuracy {
  int id = 0;
  std::string name;
  std::size_t samples = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;  // 0 when the class has no samples
};

struct EvalReport {
  double accuracy = 0.0;
  std::size_t total = 0;
  std::vector<ClassAccuracy> per_class;  // ascending class id
  /// confusion[i][j]: samples of per_class[i] predicted as per_class[j].
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<int> predictions;  // one per input row, in input order
  std::uint32_t config_fingerprint = 0;
  std::uint32_t params_checksum = 0;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  std::size_t threads = 1;
  std::size_t chunk = 64;  // samples scored per work item
  std::uint64_t seed = 0;  // recorded in the report; evaluation itself draws no randomness
};

/// CRC-32 of the compact JSON form of a config.
std::uint32_t config_fingerprint(const ModelConfig& config);

/// Top-1 accuracy over the unseen classes of `classes`. Work items are
/// spread over options.threads workers and reduced in input order, so the
/// report does not depend on the thread count.
EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const UnseenBank& bank,
                    const ClassBank& classes, const EvalOptions& options = {});

/// Same, for an unchecked bank. Throws ContractViolation when a label is not
/// an unseen class.
EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const FeatureBank& bank,
                    const ClassBank& classes, const EvalOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
/// class_id,name,samples,correct,accuracy
std::string per_class_csv(const EvalReport& report);
/// Header row of predicted ids, then one row per true class.
std::string confusion_csv(const EvalReport& report);

/// %.17g, so a double survives a text round trip.
std::string format_double(double v);

}  // namespace dvta
