#include "dvta/dataio/sampler.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dvta {

BatchSampler::BatchSampler(std::size_t population, std::size_t batch_size, std::uint64_t seed)
    : population_(population), batch_size_(batch_size), rng_(seed), order_(population) {
  if (population == 0) throw std::invalid_argument("BatchSampler: empty population");
  if (batch_size == 0) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = population_; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng_() % i);
    std::swap(order_[i - 1], order_[j]);
  }
  cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_indices() {
  if (cursor_ >= population_) {
    ++epoch_;
    reshuffle();
  }
  const std::size_t end = std::min(population_, cursor_ + batch_size_);
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

std::size_t BatchSampler::batches_per_epoch() const noexcept {
  return (population_ + batch_size_ - 1) / batch_size_;
}

Batch gather_batch(const FeatureBank& samples, const std::vector<std::size_t>& index) {
  Batch b;
  b.visual = Matrix(index.size(), samples.visual.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::ranges::copy(samples.visual.row(index[i]), b.visual.row(i).begin());
    b.labels.push_back(samples.labels[index[i]]);
  }
  return b;
}

Batch next_batch(BatchSampler& sampler, const SeenBank& bank) {
  return gather_batch(bank.samples(), sampler.next_indices());
}

}  // namespace dvta
