#include "dvta/dataio/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"

namespace dvta {
namespace {

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t n, double sigma) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = sigma * dist(rng);
  return v;
}

void check_spec(const SyntheticSpec& spec) {
  std::vector<std::string> problems;
  if (spec.seen + spec.unseen != spec.classes) problems.push_back("seen + unseen must equal classes");
  if (spec.seen == 0) problems.push_back("at least one seen class is required");
  if (spec.unseen == 0) problems.push_back("at least one unseen class is required");
  if (spec.visual_dim == 0 || spec.text_dim == 0) problems.push_back("dimensions must be >= 1");
  if (spec.samples_per_class == 0) problems.push_back("samples_per_class must be >= 1");
  if (!(spec.visual_noise >= 0.0)) problems.push_back("visual_noise must be >= 0");
  if (!(spec.context_noise >= 0.0)) problems.push_back("context_noise must be >= 0");
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

}  // namespace

SyntheticBenchmark generate_synthetic(const SyntheticSpec& spec) {
  check_spec(spec);
  std::mt19937_64 rng(spec.seed);
  const std::size_t C = spec.classes;
  const std::size_t dt = spec.text_dim;
  const std::size_t dv = spec.visual_dim;

  Matrix labels(C, dt);
  for (std::size_t c = 0; c < C; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kPrototypeMaxTries && !placed; ++attempt) {
      Matrix candidate = l2_normalize_rows(Matrix(1, dt, gaussian_vector(rng, dt, 1.0)));
      placed = true;
      for (std::size_t prev = 0; prev < c && placed; ++prev) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dt; ++k) dot += candidate(0, k) * labels(prev, k);
        placed = dot < kPrototypeMaxCosine;
      }
      if (placed) std::ranges::copy(candidate.row(0), labels.row(c).begin());
    }
    if (!placed) {
      throw CapacityError("could not place class " + std::to_string(c) + " of " + std::to_string(C) +
                          " with pairwise cosine < 0.5 in " + std::to_string(dt) +
                          " dimensions after " + std::to_string(kPrototypeMaxTries) + " tries");
    }
  }

  Matrix context(C, dt);
  for (std::size_t c = 0; c < C; ++c) {
    auto noise = gaussian_vector(rng, dt, spec.context_noise);
    for (std::size_t k = 0; k < dt; ++k) context(c, k) = labels(c, k) + noise[k];
  }
  context = l2_normalize_rows(context);

  // Entries ~ N(0, 1/dv) keep mapped prototypes near unit length.
  Matrix mixing(dt, dv, gaussian_vector(rng, dt * dv, 1.0 / std::sqrt(static_cast<double>(dv))));
  const Matrix prototypes = matmul(labels, mixing);

  const std::size_t n = C * spec.samples_per_class;
  Matrix visual(n, dv);
  std::vector<int> sample_labels(n);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const std::size_t row = c * spec.samples_per_class + s;
      auto noise = gaussian_vector(rng, dv, spec.visual_noise);
      for (std::size_t k = 0; k < dv; ++k) visual(row, k) = prototypes(c, k) + noise[k];
      sample_labels[row] = static_cast<int>(c);
    }
  }

  std::vector<ClassInfo> infos;
  std::set<int> seen;
  std::set<int> unseen;
  for (std::size_t c = 0; c < C; ++c) {
    const int id = static_cast<int>(c);
    infos.push_back({id, "class_" + std::to_string(c)});
    (c < spec.seen ? seen : unseen).insert(id);
  }
  ClassBank bank(std::move(infos), labels, context, std::move(seen), std::move(unseen));
  return SyntheticBenchmark{Dataset{std::move(bank), FeatureBank{std::move(visual), std::move(sample_labels)}},
                            std::move(mixing)};
}

}  // namespace dvta
