#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvta/alignment/config.hpp"
#include "dvta/dataio/bank.hpp"
#include "dvta/trainer/trainer.hpp"
#include "dvta/zeroshot/evaluate.hpp"

namespace dvta {

enum class AblationPreset { kModules, kGamma, kLoss, kCustom };

std::string to_string(AblationPreset preset);

struct AblationVariant {
  std::string name;
  ModelConfig config;
  // Table coordinates, filled by the preset builders.
  int row = 0;                 // modules: 1..5
  bool sde = false, da = false, aa = false;
  std::string loss_label;      // loss preset
  double tau = 0.0;            // loss preset
};

struct AblationPlan {
  AblationPreset preset = AblationPreset::kCustom;
  std::vector<AblationVariant> variants;
  std::vector<std::uint64_t> seeds{0};
};

/// Module lattice (sde, da, aa):
///   (1) baseline 000, (2) SDE 100, (3) SDE+DA 110, (4) SDE+AA 101, (5) DVTA 111.
/// "da" selects the deep visual projector; the direct objective stays on
/// whenever AA is off so every variant has a training signal.
ModelConfig module_variant(const ModelConfig& base, bool sde, bool da, bool aa);
AblationPlan modules_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds);

/// None, Sigmoid, then LeakySigmoid at each gamma.
inline const std::vector<double> kDefaultGammas{0.005, 0.01, 0.1, 0.5};
AblationPlan gamma_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds,
                        const std::vector<double>& gammas = kDefaultGammas);

/// InfoNCE, SoftmaxCE and KLD at every tau (base.tau when `taus` is empty).
AblationPlan loss_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds,
                       const std::vector<double>& taus = {});

/// Empty when the plan is runnable; otherwise one message per problem.
std::vector<std::string> validate(const AblationPlan& plan);

/// {"preset": "modules"|"gamma"|"loss"|"custom", "seeds": [..], "gammas": [..],
///  "taus": [..], "variants": [{"name": str, "model": {...}}]}
/// Model overrides in custom variants are applied on top of `base`.
AblationPlan ablation_plan_from_json(const nlohmann::json& doc, const ModelConfig& base,
                                     std::vector<std::string>& problems, const std::string& prefix = "");

struct AblationRun {
  std::size_t variant = 0;
  std::uint64_t seed = 0;
  EvalReport report;
  std::uint32_t data_order_digest = 0;
  double final_loss = 0.0;
};

struct AblationTable {
  AblationPlan plan;
  std::vector<AblationRun> runs;  // variant-major, then seed order

  const AblationRun& run(std::size_t variant, std::size_t seed_index) const;
  double mean_accuracy(std::size_t variant) const;
};

struct AblationOptions {
  std::size_t threads = 1;
  std::function<void(const AblationVariant&, std::uint64_t seed, const EvalReport&)> on_run;
};

/// Trains and evaluates every variant under every seed. The train config's
/// seed is replaced by each plan seed, so all variants under one seed share
/// initialization stream and batch order. Throws ValidationError for an
/// invalid plan.
AblationTable run_ablation(const AblationPlan& plan, const Dataset& data, const TrainConfig& train,
                           const AblationOptions& options = {});

/// Preset-specific layouts:
///   modules  row,name,sde,da,aa,seed_<s>...,average
///   gamma    activation,seed_<s>...,average
///   loss     loss,tau_<t>...   (cells are means over seeds)
///   custom   name,seed_<s>...,average
std::string ablation_csv(const AblationTable& table);

/// variant,seed,accuracy,final_loss,data_order_digest
std::string ablation_runs_csv(const AblationTable& table);

}  // namespace dvta
