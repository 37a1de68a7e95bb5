#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"

namespace dvta {

struct GradcheckEntry {
  std::string name;
  std::size_t size = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  /// Coordinates re-probed with a smaller step because the first probe
  /// crossed a kink, and coordinates where no kink-free step was found.
  std::size_t refined = 0;
  std::size_t skipped = 0;
  bool pass = true;
};

struct GradcheckReport {
  std::uint64_t seed = 0;
  double tolerance = 0.0;
  std::vector<GradcheckEntry> entries;
  bool pass = true;

  /// First failing parameter name, or empty.
  std::string first_failure() const;
};

struct GradcheckOptions {
  std::size_t batch = 4;
  std::size_t classes = 3;
  double step = 1e-3;
  double min_step = 1e-6;
  /// Combine steps h and h/2 (Richardson); false gives plain central
  /// differences at step h.
  bool extrapolate = true;
  double tolerance = 1e-5;
  /// Denominator floor of the relative error. The extrapolated difference at
  /// step 1e-3 carries round-off near 1e-12 on an O(1) loss, so entries much
  /// smaller than this cannot be resolved to the tolerance. Scaled by
  /// step / h when a coordinate had to be probed at a smaller h.
  double magnitude_floor = 1e-6;
  /// Drop elements below the floor instead of using it as the denominator.
  bool exclude_below_floor = false;
  /// Test hook applied to the analytic gradients before comparison.
  std::function<void(ModelParams& grads)> tamper;
};

/// Toy-sized model config (h = 8) for gradient checks. `da_only` switches off
/// the augmented branch, leaving the direct-alignment objective.
ModelConfig gradcheck_config(bool da_only = false);

/// Plain central differences at step 1e-4, no refinement, elements with
/// |analytic| + |numeric| < 1e-8 excluded.
GradcheckOptions plain_gradcheck_options();

/// Compares analytic gradients of the joint loss on a random toy batch with
/// Richardson-extrapolated central differences (steps h and h/2), per
/// parameter tensor. A probe whose branch signature differs from the base
/// point's is retried at a tenth of the step, down to min_step. Requires batch <= 8 and
/// embed_dim <= 16.
GradcheckReport gradcheck(const ModelConfig& config, std::uint64_t seed,
                          const GradcheckOptions& options = {});

std::string format_report(const GradcheckReport& report);

}  // namespace dvta
