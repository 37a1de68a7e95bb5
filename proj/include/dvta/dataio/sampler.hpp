#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "dvta/dataio/bank.hpp"

namespace dvta {

/// Epoch-wise sampling without replacement. Each epoch is a fresh
/// permutation drawn from one seeded stream; the last batch of an epoch may
/// be short. Single consumer.
class BatchSampler {
 public:
  BatchSampler(std::size_t population, std::size_t batch_size, std::uint64_t seed);

  /// Row indices of the next batch; rolls into a new epoch when exhausted.
  std::vector<std::size_t> next_indices();

  std::size_t batches_per_epoch() const noexcept;
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  void reshuffle();

  std::size_t population_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

struct Batch {
  Matrix visual;
  std::vector<int> labels;
};

Batch next_batch(BatchSampler& sampler, const SeenBank& bank);

/// Rows of `samples` at `index`, in order.
Batch gather_batch(const FeatureBank& samples, const std::vector<std::size_t>& index);

}  // namespace dvta
