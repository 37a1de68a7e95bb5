#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dvta/numkernel/matrix.hpp"

namespace dvta {

/// Handle to a value recorded on a GradTape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode record of one forward pass.
///
/// Nodes are appended in evaluation order, so the tape is already a
/// topological order and backward() is a single reverse sweep. A tape is
/// built per forward pass and discarded afterwards; it must not be shared
/// between threads.
class GradTape {
 public:
  /// Receives the gradient flowing into a node and pushes contributions to
  /// its inputs through accumulate().
  using BackwardFn = std::function<void(GradTape& tape, const Matrix& out_grad)>;

  Var constant(Matrix value);
  Var parameter(Matrix value);

  /// Appends the result of an op. The node tracks gradients iff any input does.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adds g into the gradient slot of v; no-op for constants.
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(output)/d(output) = 1 on a 1x1 node and sweeps the tape in reverse.
  void backward(Var output);

  /// Ops with a kink fold the side of the kink each input lies on into this
  /// hash. Two passes with equal signatures took the same smooth branch
  /// everywhere, so a finite difference between them is meaningful.
  void note_branch(bool side);
  std::uint64_t branch_signature() const noexcept { return signature_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

/// Differentiable ops over GradTape values.
namespace ad {

Var matmul(GradTape& t, Var a, Var b);
Var add_bias(GradTape& t, Var m, Var bias);
Var add(GradTape& t, Var a, Var b);
Var scale(GradTape& t, Var m, double factor);
Var relu(GradTape& t, Var m);
Var leaky_relu(GradTape& t, Var m, double slope);
Var concat_cols(GradTape& t, Var left, Var right);
Var transpose(GradTape& t, Var m);
Var reshape(GradTape& t, Var m, std::size_t rows, std::size_t cols);
Var gather_rows(GradTape& t, Var m, std::span<const std::size_t> index);

/// Rows are [a_i, b_j] for every (i, j), ordered i-major: row i * b.rows + j.
Var pair_concat(GradTape& t, Var a, Var b);

/// Per-row dot product of equally shaped matrices, as an Nx1 column.
Var rowwise_dot(GradTape& t, Var a, Var b);

Var l2_normalize_rows(GradTape& t, Var m);
Var cosine_similarity_matrix(GradTape& t, Var a, Var b);
Var row_softmax(GradTape& t, Var m);

/// m / tau where tau is a 1x1 node.
Var divide_by_scalar(GradTape& t, Var m, Var tau);

/// clamp(exp(log_value), lo, hi) on a 1x1 node; gradient is zero when clamped.
Var clamped_exp(GradTape& t, Var log_value, double lo, double hi);

Var sigmoid(GradTape& t, Var m);
Var leaky_sigmoid(GradTape& t, Var m, double gamma);

/// Elementwise (a + b) / 2.
Var average(GradTape& t, Var a, Var b);
Var add_scalars(GradTape& t, Var a, Var b);

/// kl_rows(target, pred) as a 1x1 node; target is held constant.
Var kl_rows(GradTape& t, const Matrix& target, Var pred);

}  // namespace ad
}  // namespace dvta
