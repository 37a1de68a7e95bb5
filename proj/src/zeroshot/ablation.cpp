#include "dvta/zeroshot/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "dvta/errors.hpp"

namespace dvta {
namespace {

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void seed_columns(std::ostringstream& out, const AblationPlan& plan) {
  for (auto s : plan.seeds) out << ",seed_" << s;
  out << ",average";
}

void seed_cells(std::ostringstream& out, const AblationTable& table, std::size_t v) {
  for (std::size_t s = 0; s < table.plan.seeds.size(); ++s) {
    out << ',' << format_double(table.run(v, s).report.accuracy);
  }
  out << ',' << format_double(table.mean_accuracy(v));
}

AblationVariant named(std::string name, const ModelConfig& config) {
  AblationVariant v;
  v.name = std::move(name);
  v.config = config;
  return v;
}

}  // namespace

std::string to_string(AblationPreset preset) {
  switch (preset) {
    case AblationPreset::kModules: return "modules";
    case AblationPreset::kGamma: return "gamma";
    case AblationPreset::kLoss: return "loss";
    case AblationPreset::kCustom: return "custom";
  }
  return "?";
}

ModelConfig module_variant(const ModelConfig& base, bool sde, bool da, bool aa) {
  ModelConfig c = base;
  c.use_sde = sde;
  c.deep_visual_projector = da;
  c.use_aa = aa;
  c.use_da = da || !aa;
  return c;
}

AblationPlan modules_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds) {
  struct Row {
    const char* name;
    bool sde, da, aa;
  };
  static constexpr Row rows[] = {{"baseline", false, false, false},
                                 {"SDE", true, false, false},
                                 {"SDE+DA", true, true, false},
                                 {"SDE+AA", true, false, true},
                                 {"DVTA", true, true, true}};
  AblationPlan plan;
  plan.preset = AblationPreset::kModules;
  plan.seeds = std::move(seeds);
  int index = 1;
  for (const auto& r : rows) {
    AblationVariant v;
    v.name = r.name;
    v.config = module_variant(base, r.sde, r.da, r.aa);
    v.row = index++;
    v.sde = r.sde;
    v.da = r.da;
    v.aa = r.aa;
    plan.variants.push_back(std::move(v));
  }
  return plan;
}

AblationPlan gamma_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds,
                        const std::vector<double>& gammas) {
  AblationPlan plan;
  plan.preset = AblationPreset::kGamma;
  plan.seeds = std::move(seeds);
  AblationVariant none = named("None", base);
  none.config.activation = ScoreActivation::kNone;
  AblationVariant sigmoid = named("Sigmoid", base);
  sigmoid.config.activation = ScoreActivation::kSigmoid;
  plan.variants.push_back(std::move(none));
  plan.variants.push_back(std::move(sigmoid));
  for (double g : gammas) {
    AblationVariant v = named(short_number(g), base);
    v.config.activation = ScoreActivation::kLeakySigmoid;
    v.config.gamma = g;
    plan.variants.push_back(std::move(v));
  }
  return plan;
}

AblationPlan loss_plan(const ModelConfig& base, std::vector<std::uint64_t> seeds,
                       const std::vector<double>& taus) {
  AblationPlan plan;
  plan.preset = AblationPreset::kLoss;
  plan.seeds = std::move(seeds);
  const std::vector<double> tau_list = taus.empty() ? std::vector<double>{base.tau} : taus;
  const std::pair<LossKind, const char*> losses[] = {
      {LossKind::kInfoNce, "InfoNCE"}, {LossKind::kSoftmaxCe, "SoftmaxCE"}, {LossKind::kKld, "KLD"}};
  for (const auto& [kind, label] : losses) {
    for (double tau : tau_list) {
      AblationVariant v = named(std::string(label) + "@" + short_number(tau), base);
      v.config.loss = kind;
      v.config.tau = tau;
      v.loss_label = label;
      v.tau = tau;
      plan.variants.push_back(std::move(v));
    }
  }
  return plan;
}

std::vector<std::string> validate(const AblationPlan& plan) {
  std::vector<std::string> problems;
  if (plan.variants.empty()) problems.push_back("/variants: plan has no variants");
  if (plan.seeds.empty()) problems.push_back("/seeds: plan has no seeds");
  for (std::size_t i = 0; i < plan.variants.size(); ++i) {
    auto p = validate(plan.variants[i].config, "/variants/" + std::to_string(i) + "/model");
    problems.insert(problems.end(), p.begin(), p.end());
  }
  return problems;
}

AblationPlan ablation_plan_from_json(const nlohmann::json& doc, const ModelConfig& base,
                                     std::vector<std::string>& problems, const std::string& prefix) {
  AblationPlan plan;
  if (!doc.is_object()) {
    problems.push_back(prefix + ": expected an object");
    return plan;
  }
  auto numbers = [&](const char* key, std::vector<double>& out) {
    auto it = doc.find(key);
    if (it == doc.end()) return;
    if (!it->is_array()) {
      problems.push_back(prefix + "/" + key + ": expected an array of numbers");
      return;
    }
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_number()) {
        problems.push_back(prefix + "/" + key + "/" + std::to_string(i) + ": expected a number");
      } else {
        out.push_back((*it)[i].get<double>());
      }
    }
  };

  std::vector<std::uint64_t> seeds{0};
  if (auto it = doc.find("seeds"); it != doc.end()) {
    seeds.clear();
    if (!it->is_array()) {
      problems.push_back(prefix + "/seeds: expected an array of non-negative integers");
    } else {
      for (std::size_t i = 0; i < it->size(); ++i) {
        const auto& s = (*it)[i];
        if (!s.is_number_integer() || s.get<long long>() < 0) {
          problems.push_back(prefix + "/seeds/" + std::to_string(i) + ": expected a non-negative integer");
        } else {
          seeds.push_back(s.get<std::uint64_t>());
        }
      }
    }
  }
  std::vector<double> gammas, taus;
  numbers("gammas", gammas);
  numbers("taus", taus);

  std::string preset = "custom";
  if (auto it = doc.find("preset"); it != doc.end()) {
    if (!it->is_string()) problems.push_back(prefix + "/preset: expected a string");
    else preset = it->get<std::string>();
  } else if (!doc.contains("variants")) {
    problems.push_back(prefix + ": expected \"preset\" or \"variants\"");
  }

  if (preset == "modules") {
    plan = modules_plan(base, seeds);
  } else if (preset == "gamma") {
    plan = gamma_plan(base, seeds, gammas.empty() ? kDefaultGammas : gammas);
  } else if (preset == "loss") {
    plan = loss_plan(base, seeds, taus);
  } else if (preset == "custom") {
    plan.preset = AblationPreset::kCustom;
    plan.seeds = seeds;
    auto it = doc.find("variants");
    if (it != doc.end() && !it->is_array()) {
      problems.push_back(prefix + "/variants: expected an array");
    } else if (it != doc.end()) {
      for (std::size_t i = 0; i < it->size(); ++i) {
        const auto& entry = (*it)[i];
        const std::string where = prefix + "/variants/" + std::to_string(i);
        AblationVariant v;
        v.name = "variant_" + std::to_string(i);
        if (!entry.is_object()) {
          problems.push_back(where + ": expected an object");
          continue;
        }
        if (auto n = entry.find("name"); n != entry.end()) {
          if (n->is_string()) v.name = n->get<std::string>();
          else problems.push_back(where + "/name: expected a string");
        }
        v.config = entry.contains("model")
                       ? model_config_from_json(entry["model"], problems, base, where + "/model")
                       : base;
        plan.variants.push_back(std::move(v));
      }
    }
  } else {
    problems.push_back(prefix + "/preset: expected modules, gamma, loss or custom");
  }
  return plan;
}

const AblationRun& AblationTable::run(std::size_t variant, std::size_t seed_index) const {
  return runs.at(variant * plan.seeds.size() + seed_index);
}

double AblationTable::mean_accuracy(std::size_t variant) const {
  double sum = 0.0;
  for (std::size_t s = 0; s < plan.seeds.size(); ++s) sum += run(variant, s).report.accuracy;
  return plan.seeds.empty() ? 0.0 : sum / static_cast<double>(plan.seeds.size());
}

AblationTable run_ablation(const AblationPlan& plan, const Dataset& data, const TrainConfig& train_config,
                           const AblationOptions& options) {
  if (auto problems = validate(plan); !problems.empty()) throw ValidationError(std::move(problems));
  const SeenBank seen = restrict_to_split<Split::kSeen>(data.samples, data.classes);
  const UnseenBank unseen = restrict_to_split<Split::kUnseen>(data.samples, data.classes);

  AblationTable table;
  table.plan = plan;
  std::map<std::uint64_t, std::uint32_t> digest_by_seed;
  for (std::size_t v = 0; v < plan.variants.size(); ++v) {
    const auto& variant = plan.variants[v];
    for (std::uint64_t seed : plan.seeds) {
      TrainConfig cfg = train_config;
      cfg.seed = seed;
      TrainResult trained = train(cfg, variant.config, seen, data.classes);

      auto [it, inserted] = digest_by_seed.emplace(seed, trained.data_order_digest);
      if (!inserted && it->second != trained.data_order_digest) {
        throw ContractViolation("run_ablation: variant " + variant.name + " saw a different batch order for seed " +
                                std::to_string(seed));
      }

      AblationRun run;
      run.variant = v;
      run.seed = seed;
      run.data_order_digest = trained.data_order_digest;
      run.final_loss = trained.history.empty() ? 0.0 : trained.history.back().loss;
      run.report = evaluate(trained.params, variant.config, unseen, data.classes,
                            EvalOptions{.threads = options.threads, .seed = seed});
      if (options.on_run) options.on_run(variant, seed, run.report);
      table.runs.push_back(std::move(run));
    }
  }
  return table;
}

std::string ablation_csv(const AblationTable& table) {
  const auto& plan = table.plan;
  std::ostringstream out;
  switch (plan.preset) {
    case AblationPreset::kModules:
      out << "row,name,sde,da,aa";
      seed_columns(out, plan);
      out << '\n';
      for (std::size_t v = 0; v < plan.variants.size(); ++v) {
        const auto& var = plan.variants[v];
        out << '(' << var.row << ")," << var.name << ',' << var.sde << ',' << var.da << ',' << var.aa;
        seed_cells(out, table, v);
        out << '\n';
      }
      break;
    case AblationPreset::kGamma:
    case AblationPreset::kCustom:
      out << (plan.preset == AblationPreset::kGamma ? "activation" : "name");
      seed_columns(out, plan);
      out << '\n';
      for (std::size_t v = 0; v < plan.variants.size(); ++v) {
        out << plan.variants[v].name;
        seed_cells(out, table, v);
        out << '\n';
      }
      break;
    case AblationPreset::kLoss: {
      std::vector<double> taus;
      std::vector<std::string> losses;
      for (const auto& var : plan.variants) {
        if (std::find(taus.begin(), taus.end(), var.tau) == taus.end()) taus.push_back(var.tau);
        if (std::find(losses.begin(), losses.end(), var.loss_label) == losses.end()) {
          losses.push_back(var.loss_label);
        }
      }
      out << "loss";
      for (double t : taus) out << ",tau_" << short_number(t);
      out << '\n';
      for (const auto& loss : losses) {
        out << loss;
        for (double t : taus) {
          out << ',';
          for (std::size_t v = 0; v < plan.variants.size(); ++v) {
            if (plan.variants[v].loss_label == loss && plan.variants[v].tau == t) {
              out << format_double(table.mean_accuracy(v));
            }
          }
        }
        out << '\n';
      }
      break;
    }
  }
  return out.str();
}

std::string ablation_runs_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "variant,seed,accuracy,final_loss,data_order_digest\n";
  for (const auto& run : table.runs) {
    out << table.plan.variants[run.variant].name << ',' << run.seed << ',' << format_double(run.report.accuracy)
        << ',' << format_double(run.final_loss) << ',' << run.data_order_digest << '\n';
  }
  return out.str();
}

}  // namespace dvta
