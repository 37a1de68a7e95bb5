#include "dvta/numkernel/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "dvta/errors.hpp"

namespace dvta {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
  return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape " + shape(a) + " vs " + shape(b));
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_a, bool transpose_b) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t k = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  if (k != kb) {
    throw ShapeError("matmul: inner dimensions differ (" + shape(a) + (transpose_a ? "^T" : "") +
                     " * " + shape(b) + (transpose_b ? "^T" : "") + ")");
  }
  Matrix out(m, n);
  if (m == 0 || n == 0) return out;
  auto o = view(out);
  if (k == 0) return out;
  if (!transpose_a && !transpose_b) {
    o.noalias() = view(a) * view(b);
  } else if (transpose_a && !transpose_b) {
    o.noalias() = view(a).transpose() * view(b);
  } else if (!transpose_a && transpose_b) {
    o.noalias() = view(a) * view(b).transpose();
  } else {
    o.noalias() = view(a).transpose() * view(b).transpose();
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

Matrix add_bias(const Matrix& m, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != m.cols()) {
    throw ShapeError("add_bias: bias " + shape(bias) + " does not fit " + shape(m));
  }
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) r[j] += bias(0, j);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& x : out.data()) x *= factor;
  return out;
}

Matrix relu(const Matrix& m) { return leaky_relu(m, 0.0); }

Matrix leaky_relu(const Matrix& m, double slope) {
  Matrix out = m;
  for (double& x : out.data()) {
    if (x <= 0.0) x *= slope;
  }
  return out;
}

Matrix concat_cols(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows()) {
    throw ShapeError("concat_cols: row counts " + shape(left) + " vs " + shape(right));
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t i = 0; i < left.rows(); ++i) {
    auto o = out.row(i);
    std::ranges::copy(left.row(i), o.begin());
    std::ranges::copy(right.row(i), o.begin() + static_cast<std::ptrdiff_t>(left.cols()));
  }
  return out;
}

Matrix row_softmax(const Matrix& m, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("row_softmax: temperature must be positive");
  }
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const double mx = *std::ranges::max_element(in);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp((in[j] - mx) / temperature);
      total += o[j];
    }
    for (double& x : o) x /= total;
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = out.row(i);
    double sq = 0.0;
    for (double x : r) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm <= kNormEpsilon) continue;
    for (double& x : r) x /= norm;
  }
  return out;
}

Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("cosine_similarity_matrix: " + shape(a) + " vs " + shape(b));
  }
  // Degenerate rows stay zero after normalization, so their dot products are 0.
  Matrix out = matmul(l2_normalize_rows(a), l2_normalize_rows(b), false, true);
  for (double& x : out.data()) x = std::clamp(x, -1.0, 1.0);
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double leaky_sigmoid(double x, double gamma) {
  if (x > 0.0) return sigmoid(x);
  return gamma * std::exp(gamma * x);
}

double leaky_sigmoid_derivative(double x, double gamma) {
  if (x > 0.0) {
    const double s = sigmoid(x);
    return s * (1.0 - s);
  }
  return gamma * gamma * std::exp(gamma * x);
}

bool is_row_stochastic(const Matrix& m, double tol) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double total = 0.0;
    for (double x : m.row(i)) {
      if (!(x >= 0.0)) return false;
      total += x;
    }
    if (std::abs(total - 1.0) > tol) return false;
  }
  return true;
}

double kl_rows(const Matrix& target, const Matrix& pred) {
  require_same_shape(target, pred, "kl_rows");
  if (target.rows() == 0) throw std::invalid_argument("kl_rows: no rows");
  if (!is_row_stochastic(target, kDistributionTolerance)) {
    throw std::invalid_argument("kl_rows: target rows must be probability distributions");
  }
  if (!is_row_stochastic(pred, kDistributionTolerance)) {
    throw std::invalid_argument("kl_rows: prediction rows must be probability distributions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < target.rows(); ++i) {
    for (std::size_t j = 0; j < target.cols(); ++j) {
      const double t = target(i, j);
      if (t == 0.0) continue;
      total += t * std::log(t / std::max(pred(i, j), kProbabilityFloor));
    }
  }
  return total / static_cast<double>(target.rows());
}

}  // namespace dvta
