#include "dvta/cli/dispatch.hpp"

#include <CLI11.hpp>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "dvta/alignment/model.hpp"
#include "dvta/cli/config_io.hpp"
#include "dvta/cli/run_manifest.hpp"
#include "dvta/dataio/feature_file.hpp"
#include "dvta/dataio/synthetic.hpp"
#include "dvta/errors.hpp"
#include "dvta/trainer/checkpoint.hpp"
#include "dvta/trainer/gradcheck.hpp"
#include "dvta/zeroshot/ablation.hpp"
#include "dvta/zeroshot/evaluate.hpp"
#include "dvta/zeroshot/export.hpp"

namespace fs = std::filesystem;

namespace dvta {
namespace {

void log(const std::string& message) { std::fprintf(stderr, "[dvta] %s\n", message.c_str()); }

std::string command_line(int argc, const char* const* argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ValidationError({what + " does not exist: " + path.string()});
}

Dataset load_data(const fs::path& path, RunManifest& manifest) {
  require_exists(path, "data path");
  Dataset data = load_manifest(path);
  if (fs::is_directory(path)) {
    manifest.add_input(path / kManifestName);
    for (const char* name : {"visual.dvta", "labels.dvta", "label_emb.dvta", "context_emb.dvta"}) {
      if (fs::exists(path / name)) manifest.add_input(path / name);
    }
  } else {
    manifest.add_input(path);
  }
  return data;
}

Checkpoint load_ckpt(const fs::path& path, RunManifest& manifest) {
  require_exists(path, "checkpoint");
  manifest.add_input(path);
  return load_checkpoint(path);
}

void check_dims(const ModelConfig& config, const Dataset& data) {
  std::vector<std::string> problems;
  if (config.visual_dim != data.samples.visual.cols()) {
    problems.push_back("checkpoint visual_dim " + std::to_string(config.visual_dim) +
                       " does not match the data width " + std::to_string(data.samples.visual.cols()));
  }
  if (config.text_dim != data.classes.text_dim()) {
    problems.push_back("checkpoint text_dim " + std::to_string(config.text_dim) +
                       " does not match the data width " + std::to_string(data.classes.text_dim()));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

FeatureBank select_split(const Dataset& data, const std::string& split) {
  if (split == "seen") return restrict_to_split<Split::kSeen>(data.samples, data.classes).samples();
  if (split == "unseen") return restrict_to_split<Split::kUnseen>(data.samples, data.classes).samples();
  return data.samples;
}

void finish(RunManifest& manifest, const fs::path& artifact) {
  manifest.outputs.push_back(artifact.string());
  const fs::path path = manifest_path_for(artifact);
  write_run_manifest(path, manifest);
  log("wrote " + path.string());
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out, spec_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> classes, seen, unseen, visual_dim, text_dim, samples_per_class;
  std::optional<double> visual_noise, context_noise;
};

int run_gen(const GenArgs& a, RunManifest& manifest) {
  SyntheticSpec spec;
  if (!a.spec_file.empty()) {
    require_exists(a.spec_file, "spec file");
    manifest.add_input(a.spec_file);
    std::vector<std::string> problems;
    spec = synthetic_spec_from_json(read_json_file(a.spec_file), problems);
    if (!problems.empty()) throw ValidationError(std::move(problems));
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.classes) spec.classes = *a.classes;
  if (a.seen) spec.seen = *a.seen;
  if (a.unseen) spec.unseen = *a.unseen;
  if (a.visual_dim) spec.visual_dim = *a.visual_dim;
  if (a.text_dim) spec.text_dim = *a.text_dim;
  if (a.samples_per_class) spec.samples_per_class = *a.samples_per_class;
  if (a.visual_noise) spec.visual_noise = *a.visual_noise;
  if (a.context_noise) spec.context_noise = *a.context_noise;
  manifest.config = to_json(spec);
  SyntheticBenchmark bench;
  {
    PhaseTimer t(manifest.timings, "generate");
    bench = generate_synthetic(spec);
  }
  {
    PhaseTimer t(manifest.timings, "write");
    save_dataset(a.out, bench.data);
  }
  log("wrote " + std::to_string(bench.data.samples.labels.size()) + " samples to " + a.out);
  finish(manifest, a.out);
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out, history;
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& a, RunManifest& manifest) {
  RunConfig cfg;
  if (!a.config.empty()) {
    require_exists(a.config, "config file");
    cfg = validate_config(a.config);
    manifest.add_input(a.config);
  }
  if (a.seed) cfg.train.seed = *a.seed;
  Dataset data;
  {
    PhaseTimer t(manifest.timings, "load");
    data = load_data(a.data, manifest);
  }
  resolve_against_data(cfg, data);
  manifest.config = to_json(cfg);
  const SeenBank seen = restrict_to_split<Split::kSeen>(data.samples, data.classes);
  log("training on " + std::to_string(seen.size()) + " seen samples, " + std::to_string(cfg.train.epochs) +
      " epochs, seed " + std::to_string(cfg.train.seed));

  TrainResult result;
  {
    PhaseTimer t(manifest.timings, "train");
    auto periodic = [&](std::size_t epoch, const ModelParams& params) {
      const fs::path path = a.out + ".epoch" + std::to_string(epoch);
      save_checkpoint(path, cfg.model, params);
      manifest.outputs.push_back(path.string());
      log("checkpoint " + path.string());
    };
    result = train(cfg.train, cfg.model, seen, data.classes, periodic);
  }
  {
    PhaseTimer t(manifest.timings, "write");
    save_checkpoint(a.out, cfg.model, result.params);
    const std::string history = a.history.empty() ? a.out + ".history.csv" : a.history;
    write_text_atomic(history, loss_history_csv(result.history));
    manifest.outputs.push_back(history);
  }
  if (!result.history.empty()) {
    char line[96];
    std::snprintf(line, sizeof line, "final loss %.9g after %lld steps", result.history.back().loss,
                  static_cast<long long>(result.state.step));
    log(line);
  }
  finish(manifest, a.out);
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, data, out;
  int threads = 0;
};

int run_eval(const EvalArgs& a, RunManifest& manifest) {
  const std::size_t threads = resolve_threads(a.threads);
  Checkpoint ck;
  Dataset data;
  {
    PhaseTimer t(manifest.timings, "load");
    ck = load_ckpt(a.ckpt, manifest);
    data = load_data(a.data, manifest);
  }
  check_dims(ck.config, data);
  manifest.config = {{"model", to_json(ck.config)}, {"threads", threads}};
  const UnseenBank unseen = restrict_to_split<Split::kUnseen>(data.samples, data.classes);
  EvalReport report;
  {
    PhaseTimer t(manifest.timings, "evaluate");
    report = evaluate(ck.params, ck.config, unseen, data.classes, EvalOptions{.threads = threads});
  }
  const fs::path out(a.out);
  const std::string stem = (out.parent_path() / out.stem()).string();
  write_text_atomic(out, to_json(report).dump(2) + "\n");
  write_text_atomic(stem + ".per_class.csv", per_class_csv(report));
  write_text_atomic(stem + ".confusion.csv", confusion_csv(report));
  manifest.outputs.push_back(stem + ".per_class.csv");
  manifest.outputs.push_back(stem + ".confusion.csv");
  std::printf("accuracy %s (%zu samples)\n", format_double(report.accuracy).c_str(), report.total);
  finish(manifest, out);
  return kExitOk;
}

struct AblateArgs {
  std::string plan, data, out;
  int threads = 0;
};

int run_ablate(const AblateArgs& a, RunManifest& manifest) {
  const std::size_t threads = resolve_threads(a.threads);
  require_exists(a.plan, "plan file");
  manifest.add_input(a.plan);
  nlohmann::json doc;
  {
    std::ifstream in(a.plan);
    std::stringstream text;
    text << in.rdbuf();
    try {
      doc = nlohmann::json::parse(text.str());
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError({a.plan + ": invalid JSON: " + e.what()});
    }
  }
  std::vector<std::string> problems;
  if (!doc.is_object()) throw ValidationError({a.plan + ": expected a JSON object"});
  nlohmann::json run_part = nlohmann::json::object();
  nlohmann::json plan_part = nlohmann::json::object();
  for (const auto& [key, value] : doc.items()) {
    if (key == "model" || key == "train") {
      run_part[key] = value;
    } else if (key == "preset" || key == "seeds" || key == "gammas" || key == "taus" || key == "variants") {
      plan_part[key] = value;
    } else {
      problems.push_back("/" + key + ": unknown key");
    }
  }
  RunConfig cfg = parse_run_config(run_part, problems);
  if (!problems.empty()) throw ValidationError(std::move(problems));

  Dataset data;
  {
    PhaseTimer t(manifest.timings, "load");
    data = load_data(a.data, manifest);
  }
  resolve_against_data(cfg, data);
  AblationPlan plan = ablation_plan_from_json(plan_part, cfg.model, problems);
  if (!problems.empty()) throw ValidationError(std::move(problems));
  if (auto p = validate(plan); !p.empty()) throw ValidationError(std::move(p));

  manifest.config = to_json(cfg);
  manifest.config["plan"] = plan_part;
  manifest.config["threads"] = threads;
  log("ablation " + to_string(plan.preset) + ": " + std::to_string(plan.variants.size()) + " variants x " +
      std::to_string(plan.seeds.size()) + " seeds");

  AblationOptions options;
  options.threads = threads;
  options.on_run = [](const AblationVariant& v, std::uint64_t seed, const EvalReport& r) {
    log(v.name + " seed " + std::to_string(seed) + ": accuracy " + format_double(r.accuracy));
  };
  AblationTable table;
  {
    PhaseTimer t(manifest.timings, "ablate");
    table = run_ablation(plan, data, cfg.train, options);
  }
  const fs::path out(a.out);
  const std::string runs = (out.parent_path() / out.stem()).string() + ".runs.csv";
  write_text_atomic(out, ablation_csv(table));
  write_text_atomic(runs, ablation_runs_csv(table));
  manifest.outputs.push_back(runs);
  finish(manifest, out);
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  bool da_only = false;
  bool plain = false;
  double tolerance = 1e-5;
};

int run_gradcheck(const GradcheckArgs& a) {
  const ModelConfig config = gradcheck_config(a.da_only);
  GradcheckOptions options = a.plain ? plain_gradcheck_options() : GradcheckOptions{};
  options.tolerance = a.tolerance;
  bool pass = true;
  for (std::size_t i = 0; i < a.seeds; ++i) {
    const GradcheckReport report = gradcheck(config, a.seed + i, options);
    std::fputs(format_report(report).c_str(), stdout);
    pass = pass && report.pass;
  }
  return pass ? kExitOk : kExitRuntime;
}

struct ExportSimArgs {
  std::string ckpt, data, out, split = "seen";
  std::size_t batch = 16;
  std::uint64_t seed = 0;
};

int run_export_sim(const ExportSimArgs& a, RunManifest& manifest) {
  Checkpoint ck = load_ckpt(a.ckpt, manifest);
  Dataset data = load_data(a.data, manifest);
  check_dims(ck.config, data);
  const FeatureBank pool = select_split(data, a.split);
  if (pool.labels.empty()) throw ValidationError({"split " + a.split + " has no samples"});
  BatchSampler sampler(pool.labels.size(), std::min(a.batch, pool.labels.size()), a.seed);
  const Batch batch = gather_batch(pool, sampler.next_indices());
  const SimilarityExport sim = export_similarity_matrix(ck.params, ck.config, batch, data.classes);
  write_similarity_csvs(a.out, sim);
  std::string labels = "label\n";
  for (int l : batch.labels) labels += std::to_string(l) + "\n";
  write_text_atomic(fs::path(a.out) / "labels.csv", labels);
  manifest.config = {{"model", to_json(ck.config)}, {"split", a.split}, {"batch", a.batch}, {"seed", a.seed}};
  finish(manifest, a.out);
  return kExitOk;
}

struct ExportEmbArgs {
  std::string ckpt, data, out, split = "all";
};

int run_export_emb(const ExportEmbArgs& a, RunManifest& manifest) {
  Checkpoint ck = load_ckpt(a.ckpt, manifest);
  Dataset data = load_data(a.data, manifest);
  check_dims(ck.config, data);
  const FeatureBank bank = select_split(data, a.split);
  if (bank.labels.empty()) throw ValidationError({"split " + a.split + " has no samples"});
  const EmbeddingExport e = export_embeddings(ck.params, ck.config, bank);
  write_text_atomic(a.out, embeddings_csv(e));
  manifest.config = {{"model", to_json(ck.config)}, {"split", a.split}};
  finish(manifest, a.out);
  return kExitOk;
}

}  // namespace

std::size_t resolve_threads(int flag) {
  if (flag > 0) return static_cast<std::size_t>(flag);
  if (const char* env = std::getenv("DVTA_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ValidationError({"DVTA_THREADS must be a positive integer, got '" +
                                                      std::string(env) + "'"});
    return static_cast<std::size_t>(v);
  }
  return 1;
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"Dual visual-text alignment for zero-shot skeleton action recognition", "dvta"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Write a synthetic zero-shot benchmark");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--spec", gen.spec_file, "Spec JSON; flags below override its keys");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed (default 0)");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes (default 10)");
  gen_cmd->add_option("--seen", gen.seen, "Seen classes, ids 0..seen-1 (default 8)");
  gen_cmd->add_option("--unseen", gen.unseen, "Unseen classes (default 2)");
  gen_cmd->add_option("--visual-dim", gen.visual_dim, "Visual feature width (default 32)");
  gen_cmd->add_option("--text-dim", gen.text_dim, "Text embedding width (default 64)");
  gen_cmd->add_option("--samples-per-class", gen.samples_per_class, "Samples per class (default 50)");
  gen_cmd->add_option("--visual-noise", gen.visual_noise, "Visual noise sigma (default 0.05)");
  gen_cmd->add_option("--context-noise", gen.context_noise, "Context noise sigma (default 0.1)");

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train on the seen classes of a dataset");
  train_cmd->add_option("--data", tr.data, "Dataset directory or manifest file")->required();
  train_cmd->add_option("--config", tr.config, "Run config JSON ({\"model\":{},\"train\":{}})");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", tr.history, "Loss history CSV (default <out>.history.csv)");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Override train.seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Zero-shot accuracy on the unseen classes");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory or manifest file")->required();
  eval_cmd->add_option("--out", ev.out, "Report JSON; CSV tables are written beside it")->required();
  eval_cmd->add_option("--threads", ev.threads, "Worker threads (fallback DVTA_THREADS, default 1)");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Paired-seed ablation table");
  ablate_cmd->add_option("--plan", ab.plan, "Plan JSON")->required();
  ablate_cmd->add_option("--data", ab.data, "Dataset directory or manifest file")->required();
  ablate_cmd->add_option("--out", ab.out, "Table CSV; per-run CSV is written beside it")->required();
  ablate_cmd->add_option("--threads", ab.threads, "Worker threads (fallback DVTA_THREADS, default 1)");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients at toy size");
  gc_cmd->add_option("--seed", gc.seed, "First seed")->capture_default_str();
  gc_cmd->add_option("--seeds", gc.seeds, "Number of consecutive seeds")->capture_default_str()
      ->check(CLI::PositiveNumber);
  gc_cmd->add_flag("--da-only", gc.da_only, "Check the direct-alignment objective alone");
  gc_cmd->add_flag("--plain", gc.plain,
                   "Single central difference at step 1e-4, no extrapolation or step refinement");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

  ExportSimArgs es;
  auto* es_cmd = app.add_subcommand("export-sim", "Write p1, p2, p and y of one batch as CSV");
  es_cmd->add_option("--ckpt", es.ckpt, "Checkpoint path")->required();
  es_cmd->add_option("--data", es.data, "Dataset directory or manifest file")->required();
  es_cmd->add_option("--out", es.out, "Output directory")->required();
  es_cmd->add_option("--split", es.split, "seen, unseen or all")->capture_default_str()
      ->check(CLI::IsMember({"seen", "unseen", "all"}));
  es_cmd->add_option("--batch-size", es.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  es_cmd->add_option("--seed", es.seed, "Batch selection seed")->capture_default_str();

  ExportEmbArgs ee;
  auto* ee_cmd = app.add_subcommand("export-emb", "Write visual embeddings and PCA coordinates as CSV");
  ee_cmd->add_option("--ckpt", ee.ckpt, "Checkpoint path")->required();
  ee_cmd->add_option("--data", ee.data, "Dataset directory or manifest file")->required();
  ee_cmd->add_option("--out", ee.out, "Output CSV")->required();
  ee_cmd->add_option("--split", ee.split, "seen, unseen or all")->capture_default_str()
      ->check(CLI::IsMember({"seen", "unseen", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  RunManifest manifest;
  manifest.command = command_line(argc, argv);
  try {
    if (*gen_cmd) return run_gen(gen, manifest);
    if (*train_cmd) {
      if (*seed_opt) tr.seed = train_seed;
      return run_train(tr, manifest);
    }
    if (*eval_cmd) return run_eval(ev, manifest);
    if (*ablate_cmd) return run_ablate(ab, manifest);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*es_cmd) return run_export_sim(es, manifest);
    if (*ee_cmd) return run_export_emb(ee, manifest);
  } catch (const ValidationError& e) {
    for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
    return kExitValidation;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitValidation;
}

}  // namespace dvta
