#include "dvta/alignment/params.hpp"

#include <cmath>
#include <random>

#include "dvta/dataio/crc32.hpp"
#include "dvta/errors.hpp"

namespace dvta {

std::vector<TensorSpec> parameter_layout(const ModelConfig& c) {
  std::vector<TensorSpec> out;
  const std::size_t h = c.embed_dim;
  if (c.deep_visual_projector) {
    out.push_back({"visual.w1", c.visual_dim, c.visual_hidden});
    out.push_back({"visual.b1", 1, c.visual_hidden});
    out.push_back({"visual.w2", c.visual_hidden, h});
    out.push_back({"visual.b2", 1, h});
  } else {
    out.push_back({"visual.w", c.visual_dim, h});
    out.push_back({"visual.b", 1, h});
  }
  out.push_back({"text.w", c.text_dim, h});
  out.push_back({"text.b", 1, h});
  if (c.use_aa) {
    std::size_t fan_in = 2 * h;
    std::size_t k = 1;
    for (std::size_t width : c.metric_hidden) {
      out.push_back({"metric.w" + std::to_string(k), fan_in, width});
      out.push_back({"metric.b" + std::to_string(k), 1, width});
      fan_in = width;
      ++k;
    }
    out.push_back({"metric.w" + std::to_string(k), fan_in, 1});
    out.push_back({"metric.b" + std::to_string(k), 1, 1});
  }
  if (c.learnable_tau) out.push_back({"log_tau", 1, 1});
  return out;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams p;
  const auto layout = parameter_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& spec = layout[i];
    Matrix m(spec.rows, spec.cols);
    if (spec.name == "log_tau") {
      m(0, 0) = std::log(config.tau);
    } else {
      // A bias shares the fan_in of the weight immediately before it.
      const std::size_t fan_in = spec.rows == 1 && i > 0 ? layout[i - 1].rows : spec.rows;
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& x : m.data()) x = dist(rng);
    }
    p.add(spec.name, std::move(m));
  }
  return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  ModelParams p;
  for (const auto& spec : parameter_layout(config)) p.add(spec.name, Matrix(spec.rows, spec.cols));
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p;
  for (std::size_t i = 0; i < other.count(); ++i) {
    p.add(other.name(i), Matrix(other.tensor(i).rows(), other.tensor(i).cols()));
  }
  return p;
}

void ModelParams::add(std::string name, Matrix value) {
  if (has(name)) throw std::invalid_argument("duplicate parameter " + name);
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

bool ModelParams::has(std::string_view name) const {
  for (const auto& n : names_) {
    if (n == name) return true;
  }
  return false;
}

Matrix& ModelParams::at(std::string_view name) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return tensors_[i];
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

const Matrix& ModelParams::at(std::string_view name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

std::size_t ModelParams::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ModelParams::all_finite() const noexcept {
  for (const auto& t : tensors_) {
    if (!t.all_finite()) return false;
  }
  return true;
}

std::uint32_t ModelParams::checksum() const {
  std::uint32_t crc = 0;
  for (const auto& t : tensors_) crc = crc32(std::as_bytes(t.data()), crc);
  return crc;
}

}  // namespace dvta
