#include "dvta/trainer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <random>

#include "dvta/alignment/model.hpp"
#include "dvta/numkernel/finite_difference.hpp"

namespace dvta {

std::string GradcheckReport::first_failure() const {
  for (const auto& e : entries) {
    if (!e.pass) return e.name;
  }
  return {};
}

ModelConfig gradcheck_config(bool da_only) {
  ModelConfig c;
  c.visual_dim = 6;
  c.text_dim = 10;
  c.embed_dim = 8;
  c.visual_hidden = 12;
  c.metric_hidden = {10, 6};
  c.use_aa = !da_only;
  return c;
}

GradcheckOptions plain_gradcheck_options() {
  GradcheckOptions o;
  o.step = 1e-4;
  o.min_step = 1e-4;
  o.extrapolate = false;
  o.magnitude_floor = 1e-8;
  o.exclude_below_floor = true;
  return o;
}

GradcheckReport gradcheck(const ModelConfig& config, std::uint64_t seed,
                          const GradcheckOptions& options) {
  if (options.batch == 0 || options.batch > 8) {
    throw std::invalid_argument("gradcheck: batch must be in [1, 8]");
  }
  if (config.embed_dim > 16) throw std::invalid_argument("gradcheck: embed_dim must be <= 16");
  if (options.classes == 0 || options.classes > options.batch) {
    throw std::invalid_argument("gradcheck: need 1 <= classes <= batch");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_matrix = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (double& x : m.data()) x = normal(rng);
    return m;
  };

  // Classes 0..C-1 are seen; one extra unseen class keeps the split realistic.
  const std::size_t n_classes = options.classes + 1;
  std::vector<ClassInfo> infos;
  std::set<int> seen;
  for (std::size_t c = 0; c < n_classes; ++c) {
    infos.push_back({static_cast<int>(c), "c" + std::to_string(c)});
    if (c < options.classes) seen.insert(static_cast<int>(c));
  }
  ClassBank classes(std::move(infos), random_matrix(n_classes, config.text_dim),
                    random_matrix(n_classes, config.text_dim), seen,
                    {static_cast<int>(options.classes)});
  // Labels 0, 0, 1, 2, ... so the batch always has a multi-positive row.
  Batch batch;
  batch.visual = random_matrix(options.batch, config.visual_dim);
  for (std::size_t i = 0; i < options.batch; ++i) {
    batch.labels.push_back(static_cast<int>((i == 0 ? 0 : i - 1) % options.classes));
  }

  const ModelParams params = ModelParams::initialize(config, seed);
  LossResult analytic_pass = total_loss(config, params, batch, classes);
  ModelParams analytic = gradients(analytic_pass.cache, params);
  if (options.tamper) options.tamper(analytic);

  GradcheckReport report;
  report.seed = seed;
  report.tolerance = options.tolerance;
  const std::uint64_t base_signature = analytic_pass.cache.tape.branch_signature();
  ModelParams probe = params;
  auto probe_at = [&](std::size_t tensor, std::size_t k, double value, std::uint64_t& signature) {
    double& slot = probe.tensor(tensor).data()[k];
    const double saved = slot;
    slot = value;
    LossResult r = total_loss(config, probe, batch, classes);
    slot = saved;
    signature = r.cache.tape.branch_signature();
    return r.value;
  };

  for (std::size_t i = 0; i < params.count(); ++i) {
    GradcheckEntry e;
    e.name = params.name(i);
    const auto x = params.tensor(i).data();
    const auto a = analytic.tensor(i).data();
    e.size = x.size();
    for (std::size_t k = 0; k < x.size(); ++k) {
      std::optional<double> numeric;
      double used_step = options.step;
      for (double h = options.step; h >= options.min_step * (1.0 - 1e-9); h /= 10.0) {
        // Richardson extrapolation of two central differences cancels the
        // h^2 truncation term.
        double f[4] = {0.0, 0.0, 0.0, 0.0};
        bool smooth = true;
        const double offsets[4] = {h, -h, h / 2, -h / 2};
        const int probes = options.extrapolate ? 4 : 2;
        for (int j = 0; j < probes && smooth; ++j) {
          std::uint64_t sig = 0;
          f[j] = probe_at(i, k, x[k] + offsets[j], sig);
          smooth = sig == base_signature;
        }
        if (smooth) {
          const double wide = (f[0] - f[1]) / (2.0 * h);
          numeric = options.extrapolate ? (4.0 * (f[2] - f[3]) / h - wide) / 3.0 : wide;
          used_step = h;
          if (h < options.step) ++e.refined;
          break;
        }
      }
      if (!numeric) {
        ++e.skipped;
        continue;
      }
      const double floor = options.magnitude_floor * options.step / used_step;
      if (options.exclude_below_floor && std::abs(a[k]) + std::abs(*numeric) < floor) continue;
      e.max_relative_error = std::max(e.max_relative_error, relative_error(a[k], *numeric, floor));
      e.max_abs_error = std::max(e.max_abs_error, std::abs(a[k] - *numeric));
    }
    e.pass = e.max_relative_error < options.tolerance && e.skipped == 0;
    report.pass = report.pass && e.pass;
    report.entries.push_back(std::move(e));
  }
  return report;
}

std::string format_report(const GradcheckReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "gradcheck seed=%llu tolerance=%.1e\n",
                static_cast<unsigned long long>(report.seed), report.tolerance);
  out += line;
  std::snprintf(line, sizeof(line), "%-12s %6s %14s %14s %8s %8s  %s\n", "parameter", "size",
                "max_rel_err", "max_abs_err", "refined", "skipped", "status");
  out += line;
  for (const auto& e : report.entries) {
    std::snprintf(line, sizeof(line), "%-12s %6zu %14.3e %14.3e %8zu %8zu  %s\n", e.name.c_str(), e.size,
                  e.max_relative_error, e.max_abs_error, e.refined, e.skipped, e.pass ? "PASS" : "FAIL");
    out += line;
  }
  out += report.pass ? "overall: PASS\n" : "overall: FAIL\n";
  return out;
}

}  // namespace dvta
