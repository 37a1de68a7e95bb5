#pragma once

#include <cstddef>
#include <cstdint>

#include "dvta/dataio/bank.hpp"

namespace dvta {

/// Parameters of a synthetic zero-shot benchmark. Classes 0..seen-1 form the
/// seen split and seen..classes-1 the unseen split.
struct SyntheticSpec {
  std::size_t classes = 10;
  std::size_t seen = 8;
  std::size_t unseen = 2;
  std::size_t visual_dim = 32;
  std::size_t text_dim = 64;
  std::size_t samples_per_class = 50;
  double visual_noise = 0.05;
  double context_noise = 0.1;
  std::uint64_t seed = 0;
};

inline constexpr double kPrototypeMaxCosine = 0.5;
inline constexpr int kPrototypeMaxTries = 10000;

struct SyntheticBenchmark {
  Dataset data;
  /// The text-to-visual map A (text_dim x visual_dim, applied as label * A).
  Matrix mixing;
};

/// Label embeddings are random unit vectors with pairwise cosine below
/// kPrototypeMaxCosine; context = normalize(label + context_noise * N(0, I));
/// visual sample = label * A + visual_noise * N(0, I). Deterministic in seed.
/// Throws ValidationError for inconsistent specs, CapacityError when the
/// separation constraint cannot be met.
SyntheticBenchmark generate_synthetic(const SyntheticSpec& spec);

}  // namespace dvta
