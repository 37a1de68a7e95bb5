#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dvta/alignment/config.hpp"
#include "dvta/numkernel/matrix.hpp"

namespace dvta {

struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Tensor names and shapes for a config, in checkpoint order:
///   visual.w1 visual.b1 visual.w2 visual.b2   (or visual.w visual.b when linear)
///   text.w text.b
///   metric.w1 metric.b1 ... metric.wK metric.bK   (only when use_aa)
///   log_tau                                        (only when learnable_tau)
/// Weights are fan_in x fan_out and act on row vectors.
std::vector<TensorSpec> parameter_layout(const ModelConfig& config);

/// Named learnable tensors of one model, in parameter_layout() order.
class ModelParams {
 public:
  ModelParams() = default;

  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); log_tau = log(tau).
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& config);
  static ModelParams zeros_like(const ModelParams& other);

  void add(std::string name, Matrix value);

  std::size_t count() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& tensor(std::size_t i) { return tensors_[i]; }
  const Matrix& tensor(std::size_t i) const { return tensors_[i]; }

  bool has(std::string_view name) const;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  std::size_t total_size() const noexcept;
  bool all_finite() const noexcept;

  /// CRC-32 over the raw bytes of every tensor.
  std::uint32_t checksum() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> tensors_;
};

}  // namespace dvta
