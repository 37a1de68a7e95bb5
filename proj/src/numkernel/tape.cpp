#include "dvta/numkernel/tape.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"

namespace dvta {

Var GradTape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix{}, false, nullptr});
  return Var{nodes_.size() - 1};
}

Var GradTape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix{}, true, nullptr});
  return Var{nodes_.size() - 1};
}

Var GradTape::record(Matrix value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix{}, needs, needs ? std::move(backward) : nullptr});
  return Var{nodes_.size() - 1};
}

void GradTape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw ShapeError("gradient shape does not match node " + std::to_string(v.id));
  }
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = g;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void GradTape::backward(Var output) {
  Node& out = nodes_[output.id];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw ShapeError("backward: output must be a 1x1 scalar");
  }
  for (Node& n : nodes_) n.grad = Matrix{};
  if (!out.requires_grad) return;
  out.grad = Matrix(1, 1, 1.0);
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    // Copy: the callback may append to nodes_ in principle, never in practice.
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
  // Parameters that received nothing still report an explicit zero gradient.
  for (Node& n : nodes_) {
    if (n.requires_grad && n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  }
}

void GradTape::note_branch(bool side) {
  signature_ = (signature_ ^ (side ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL)) * 0x100000001b3ULL;
}

namespace ad {
namespace {

template <std::size_t N>
Var rec(GradTape& t, Matrix value, std::array<Var, N> inputs, GradTape::BackwardFn fn) {
  return t.record(std::move(value), inputs, std::move(fn));
}

}  // namespace

Var matmul(GradTape& t, Var a, Var b) {
  Matrix out = dvta::matmul(t.value(a), t.value(b));
  return rec<2>(t, std::move(out), {a, b}, [a, b](GradTape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, dvta::matmul(g, tp.value(b), false, true));
    if (tp.requires_grad(b)) tp.accumulate(b, dvta::matmul(tp.value(a), g, true, false));
  });
}

Var add_bias(GradTape& t, Var m, Var bias) {
  Matrix out = dvta::add_bias(t.value(m), t.value(bias));
  return rec<2>(t, std::move(out), {m, bias}, [m, bias](GradTape& tp, const Matrix& g) {
    tp.accumulate(m, g);
    if (tp.requires_grad(bias)) {
      Matrix gb(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
      tp.accumulate(bias, gb);
    }
  });
}

Var add(GradTape& t, Var a, Var b) {
  Matrix out = dvta::add(t.value(a), t.value(b));
  return rec<2>(t, std::move(out), {a, b}, [a, b](GradTape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var scale(GradTape& t, Var m, double factor) {
  Matrix out = dvta::scale(t.value(m), factor);
  return rec<1>(t, std::move(out), {m}, [m, factor](GradTape& tp, const Matrix& g) {
    tp.accumulate(m, dvta::scale(g, factor));
  });
}

Var relu(GradTape& t, Var m) { return leaky_relu(t, m, 0.0); }

Var leaky_relu(GradTape& t, Var m, double slope) {
  for (double x : t.value(m).data()) t.note_branch(x > 0.0);
  Matrix out = dvta::leaky_relu(t.value(m), slope);
  return rec<1>(t, std::move(out), {m}, [m, slope](GradTape& tp, const Matrix& g) {
    Matrix gi = g;
    auto x = tp.value(m).data();
    auto d = gi.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (x[i] <= 0.0) d[i] *= slope;
    }
    tp.accumulate(m, gi);
  });
}

Var concat_cols(GradTape& t, Var left, Var right) {
  Matrix out = dvta::concat_cols(t.value(left), t.value(right));
  return rec<2>(t, std::move(out), {left, right}, [left, right](GradTape& tp, const Matrix& g) {
    const std::size_t lc = tp.value(left).cols();
    const std::size_t rc = tp.value(right).cols();
    Matrix gl(g.rows(), lc);
    Matrix gr(g.rows(), rc);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < lc; ++j) gl(i, j) = g(i, j);
      for (std::size_t j = 0; j < rc; ++j) gr(i, j) = g(i, lc + j);
    }
    tp.accumulate(left, gl);
    tp.accumulate(right, gr);
  });
}

Var transpose(GradTape& t, Var m) {
  Matrix out = dvta::transpose(t.value(m));
  return rec<1>(t, std::move(out), {m}, [m](GradTape& tp, const Matrix& g) {
    tp.accumulate(m, dvta::transpose(g));
  });
}

Var reshape(GradTape& t, Var m, std::size_t rows, std::size_t cols) {
  const Matrix& in = t.value(m);
  if (rows * cols != in.size()) {
    throw ShapeError("reshape: cannot view " + std::to_string(in.size()) + " values as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out(rows, cols, in.values());
  return rec<1>(t, std::move(out), {m}, [m](GradTape& tp, const Matrix& g) {
    const Matrix& src = tp.value(m);
    tp.accumulate(m, Matrix(src.rows(), src.cols(), g.values()));
  });
}

Var gather_rows(GradTape& t, Var m, std::span<const std::size_t> index) {
  const Matrix& in = t.value(m);
  Matrix out(index.size(), in.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= in.rows()) throw ShapeError("gather_rows: index out of range");
    std::ranges::copy(in.row(index[i]), out.row(i).begin());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return rec<1>(t, std::move(out), {m}, [m, idx = std::move(idx)](GradTape& tp, const Matrix& g) {
    const Matrix& src = tp.value(m);
    Matrix gi(src.rows(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto dst = gi.row(idx[i]);
      auto from = g.row(i);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += from[j];
    }
    tp.accumulate(m, gi);
  });
}

Var pair_concat(GradTape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  const std::size_t na = av.rows();
  const std::size_t nb = bv.rows();
  Matrix out(na * nb, av.cols() + bv.cols());
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      auto o = out.row(i * nb + j);
      std::ranges::copy(av.row(i), o.begin());
      std::ranges::copy(bv.row(j), o.begin() + static_cast<std::ptrdiff_t>(av.cols()));
    }
  }
  return rec<2>(t, std::move(out), {a, b}, [a, b](GradTape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    const Matrix& bv = tp.value(b);
    const std::size_t nb = bv.rows();
    const std::size_t ac = av.cols();
    Matrix ga(av.rows(), ac);
    Matrix gb(nb, bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < nb; ++j) {
        auto src = g.row(i * nb + j);
        auto da = ga.row(i);
        auto db = gb.row(j);
        for (std::size_t k = 0; k < ac; ++k) da[k] += src[k];
        for (std::size_t k = 0; k < db.size(); ++k) db[k] += src[ac + k];
      }
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var rowwise_dot(GradTape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) throw ShapeError("rowwise_dot: shapes");
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < av.cols(); ++k) s += av(i, k) * bv(i, k);
    out(i, 0) = s;
  }
  return rec<2>(t, std::move(out), {a, b}, [a, b](GradTape& tp, const Matrix& g) {
    const Matrix& av = tp.value(a);
    const Matrix& bv = tp.value(b);
    Matrix ga(av.rows(), av.cols());
    Matrix gb(bv.rows(), bv.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t k = 0; k < av.cols(); ++k) {
        ga(i, k) = g(i, 0) * bv(i, k);
        gb(i, k) = g(i, 0) * av(i, k);
      }
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

Var l2_normalize_rows(GradTape& t, Var m) {
  const Matrix& in = t.value(m);
  std::vector<double> norms(in.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    double sq = 0.0;
    for (double x : in.row(i)) sq += x * x;
    norms[i] = std::sqrt(sq);
    t.note_branch(norms[i] > kNormEpsilon);
  }
  Matrix out = dvta::l2_normalize_rows(in);
  return rec<1>(t, std::move(out), {m},
                  [m, norms = std::move(norms)](GradTape& tp, const Matrix& g) {
                    const Matrix& x = tp.value(m);
                    Matrix gi(x.rows(), x.cols());
                    for (std::size_t i = 0; i < x.rows(); ++i) {
                      const double n = norms[i];
                      auto gr = g.row(i);
                      auto dst = gi.row(i);
                      if (n <= kNormEpsilon) {
                        std::ranges::copy(gr, dst.begin());
                        continue;
                      }
                      // d(x/|x|) = (g - y (y.g)) / |x| with y = x/|x|.
                      double yg = 0.0;
                      auto xr = x.row(i);
                      for (std::size_t k = 0; k < xr.size(); ++k) yg += xr[k] / n * gr[k];
                      for (std::size_t k = 0; k < xr.size(); ++k) {
                        dst[k] = (gr[k] - xr[k] / n * yg) / n;
                      }
                    }
                    tp.accumulate(m, gi);
                  });
}

Var cosine_similarity_matrix(GradTape& t, Var a, Var b) {
  if (t.value(a).cols() != t.value(b).cols()) {
    throw ShapeError("cosine_similarity_matrix: column counts differ");
  }
  Var an = l2_normalize_rows(t, a);
  Var bn = l2_normalize_rows(t, b);
  return matmul(t, an, transpose(t, bn));
}

Var row_softmax(GradTape& t, Var m) {
  Matrix out = dvta::row_softmax(t.value(m), 1.0);
  Var self{t.size()};
  return rec<1>(t, std::move(out), {m}, [m, self](GradTape& tp, const Matrix& g) {
    const Matrix& y = tp.value(self);
    Matrix gi(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gi(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tp.accumulate(m, gi);
  });
}

Var divide_by_scalar(GradTape& t, Var m, Var tau) {
  const Matrix& tv = t.value(tau);
  if (tv.rows() != 1 || tv.cols() != 1) throw ShapeError("divide_by_scalar: tau must be 1x1");
  const double s = tv(0, 0);
  if (!(s > 0.0)) throw std::invalid_argument("divide_by_scalar: temperature must be positive");
  Matrix out = dvta::scale(t.value(m), 1.0 / s);
  return rec<2>(t, std::move(out), {m, tau}, [m, tau](GradTape& tp, const Matrix& g) {
    const double s = tp.value(tau)(0, 0);
    tp.accumulate(m, dvta::scale(g, 1.0 / s));
    if (tp.requires_grad(tau)) {
      auto x = tp.value(m).data();
      auto gd = g.data();
      double acc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) acc += gd[i] * x[i];
      tp.accumulate(tau, Matrix(1, 1, -acc / (s * s)));
    }
  });
}

Var clamped_exp(GradTape& t, Var log_value, double lo, double hi) {
  const double raw = std::exp(t.value(log_value)(0, 0));
  const double v = std::clamp(raw, lo, hi);
  const bool inside = raw > lo && raw < hi;
  t.note_branch(raw > lo);
  t.note_branch(raw < hi);
  return rec<1>(t, Matrix(1, 1, v), {log_value},
                [log_value, v, inside](GradTape& tp, const Matrix& g) {
                  tp.accumulate(log_value, Matrix(1, 1, inside ? g(0, 0) * v : 0.0));
                });
}

Var sigmoid(GradTape& t, Var m) {
  Matrix out = t.value(m);
  for (double& x : out.data()) x = dvta::sigmoid(x);
  Var self{t.size()};
  return rec<1>(t, std::move(out), {m}, [m, self](GradTape& tp, const Matrix& g) {
    Matrix gi = g;
    auto y = tp.value(self).data();
    auto d = gi.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    tp.accumulate(m, gi);
  });
}

Var leaky_sigmoid(GradTape& t, Var m, double gamma) {
  Matrix out = t.value(m);
  for (double& x : out.data()) {
    t.note_branch(x > 0.0);
    x = dvta::leaky_sigmoid(x, gamma);
  }
  return rec<1>(t, std::move(out), {m}, [m, gamma](GradTape& tp, const Matrix& g) {
    Matrix gi = g;
    auto x = tp.value(m).data();
    auto d = gi.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= leaky_sigmoid_derivative(x[i], gamma);
    tp.accumulate(m, gi);
  });
}

Var average(GradTape& t, Var a, Var b) {
  Matrix out = dvta::scale(dvta::add(t.value(a), t.value(b)), 0.5);
  return rec<2>(t, std::move(out), {a, b}, [a, b](GradTape& tp, const Matrix& g) {
    Matrix half = dvta::scale(g, 0.5);
    tp.accumulate(a, half);
    tp.accumulate(b, half);
  });
}

Var add_scalars(GradTape& t, Var a, Var b) {
  if (t.value(a).size() != 1 || t.value(b).size() != 1) throw ShapeError("add_scalars: not 1x1");
  return add(t, a, b);
}

Var kl_rows(GradTape& t, const Matrix& target, Var pred) {
  const double value = dvta::kl_rows(target, t.value(pred));
  return rec<1>(t, Matrix(1, 1, value), {pred}, [target, pred](GradTape& tp, const Matrix& g) {
    const Matrix& p = tp.value(pred);
    const double scale = g(0, 0) / static_cast<double>(p.rows());
    Matrix gi(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      for (std::size_t j = 0; j < p.cols(); ++j) {
        const double tv = target(i, j);
        if (tv == 0.0 || p(i, j) <= kProbabilityFloor) continue;
        gi(i, j) = -scale * tv / p(i, j);
      }
    }
    tp.accumulate(pred, gi);
  });
}

}  // namespace ad
}  // namespace dvta
