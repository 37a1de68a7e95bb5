#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "dvta/errors.hpp"
#include "dvta/numkernel/kernels.hpp"
#include "dvta/numkernel/tape.hpp"

namespace dvta {
namespace {

using Build = std::function<Var(GradTape&, const std::vector<Var>&)>;

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.data()) x = n(rng);
  return m;
}

// Reduces an op's output to a scalar with fixed random weights, so every
// output element contributes to the checked gradient.
struct Harness {
  Build op;
  Matrix weights;

  double forward(const std::vector<Matrix>& inputs, std::vector<Matrix>* grads) const {
    GradTape t;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(t.parameter(m));
    Var out = op(t, vars);
    const std::size_t n = t.value(out).size();
    Var flat = ad::reshape(t, out, 1, n);
    Var w = t.constant(Matrix(n, 1, weights.values()));
    Var s = ad::matmul(t, flat, w);
    if (grads) {
      t.backward(s);
      grads->clear();
      for (Var v : vars) grads->push_back(t.grad(v));
    }
    return t.value(s)(0, 0);
  }
};

double max_gradient_error(const Build& op, std::vector<Matrix> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradTape probe;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(probe.constant(m));
  const Matrix& o = probe.value(op(probe, vars));
  Harness h{op, random_matrix(o.size(), 1, rng)};

  std::vector<Matrix> analytic;
  h.forward(inputs, &analytic);
  double worst = 0.0;
  const double step = 1e-5;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i].data()[k];
      inputs[i].data()[k] = x + step;
      const double up = h.forward(inputs, nullptr);
      inputs[i].data()[k] = x - step;
      const double down = h.forward(inputs, nullptr);
      inputs[i].data()[k] = x;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[i].data()[k];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-6));
    }
  }
  return worst;
}

class TapeGrad : public ::testing::Test {
 protected:
  std::mt19937_64 rng{42};
  Matrix rnd(std::size_t r, std::size_t c) { return random_matrix(r, c, rng); }
  void check(const Build& op, std::vector<Matrix> inputs) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      EXPECT_LT(max_gradient_error(op, inputs, seed), 1e-6) << "seed " << seed;
    }
  }
};

TEST_F(TapeGrad, Matmul) {
  check([](GradTape& t, const std::vector<Var>& v) { return ad::matmul(t, v[0], v[1]); },
        {rnd(3, 4), rnd(4, 2)});
}

TEST_F(TapeGrad, AddBiasAddScale) {
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::scale(t, ad::add(t, ad::add_bias(t, v[0], v[1]), v[2]), -1.7);
  }, {rnd(3, 4), rnd(1, 4), rnd(3, 4)});
}

TEST_F(TapeGrad, ReluAndLeakyRelu) {
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::add(t, ad::relu(t, v[0]), ad::leaky_relu(t, v[0], 0.01));
  }, {rnd(4, 5)});
}

TEST_F(TapeGrad, ConcatTransposeReshape) {
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::reshape(t, ad::transpose(t, ad::concat_cols(t, v[0], v[1])), 2, 15);
  }, {rnd(3, 4), rnd(3, 6)});
}

TEST_F(TapeGrad, GatherRowsWithRepeats) {
  const std::vector<std::size_t> index{2, 0, 2, 1, 2};
  check([index](GradTape& t, const std::vector<Var>& v) { return ad::gather_rows(t, v[0], index); },
        {rnd(3, 4)});
}

TEST_F(TapeGrad, PairConcatAndRowwiseDot) {
  check([](GradTape& t, const std::vector<Var>& v) { return ad::pair_concat(t, v[0], v[1]); },
        {rnd(3, 2), rnd(4, 2)});
  check([](GradTape& t, const std::vector<Var>& v) { return ad::rowwise_dot(t, v[0], v[1]); },
        {rnd(5, 3), rnd(5, 3)});
}

TEST_F(TapeGrad, NormalizeAndCosine) {
  check([](GradTape& t, const std::vector<Var>& v) { return ad::l2_normalize_rows(t, v[0]); },
        {rnd(4, 3)});
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::cosine_similarity_matrix(t, v[0], v[1]);
  }, {rnd(3, 5), rnd(4, 5)});
}

TEST_F(TapeGrad, SoftmaxOverTemperature) {
  Matrix tau(1, 1, 0.3);
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::row_softmax(t, ad::divide_by_scalar(t, v[0], v[1]));
  }, {rnd(3, 4), tau});
}

TEST_F(TapeGrad, ClampedExpInsideRange) {
  Matrix log_tau(1, 1, std::log(0.1));
  check([](GradTape& t, const std::vector<Var>& v) { return ad::clamped_exp(t, v[0], 0.01, 1.0); },
        {log_tau});
}

TEST_F(TapeGrad, SigmoidFamily) {
  check([](GradTape& t, const std::vector<Var>& v) {
    return ad::add(t, ad::sigmoid(t, v[0]), ad::leaky_sigmoid(t, v[0], 0.1));
  }, {rnd(4, 4)});
}

TEST_F(TapeGrad, AverageAndKl) {
  const Matrix target = row_softmax(rnd(3, 3), 1.0);
  check([target](GradTape& t, const std::vector<Var>& v) {
    Var p = ad::average(t, ad::row_softmax(t, v[0]), ad::row_softmax(t, v[1]));
    Var a = ad::kl_rows(t, target, p);
    return ad::add_scalars(t, a, ad::kl_rows(t, target, ad::row_softmax(t, v[1])));
  }, {rnd(3, 3), rnd(3, 3)});
}

TEST(Tape, ConstantsReceiveNoGradient) {
  GradTape t;
  Var c = t.constant(Matrix::from_rows({{1, 2}}));
  Var p = t.parameter(Matrix::from_rows({{3}, {4}}));
  Var out = ad::matmul(t, c, p);
  t.backward(out);
  EXPECT_FALSE(t.requires_grad(c));
  EXPECT_EQ(t.grad(p), Matrix::from_rows({{1}, {2}}));
  EXPECT_EQ(t.value(out)(0, 0), 11.0);
}

TEST(Tape, BackwardNeedsScalar) {
  GradTape t;
  Var p = t.parameter(Matrix(2, 2, 1.0));
  EXPECT_THROW(t.backward(p), ShapeError);
}

TEST(Tape, BranchSignatureTracksKinkSides) {
  auto signature = [](double x) {
    GradTape t;
    ad::relu(t, t.parameter(Matrix(1, 1, x)));
    return t.branch_signature();
  };
  EXPECT_EQ(signature(0.5), signature(2.0));
  EXPECT_NE(signature(0.5), signature(-0.5));
}

}  // namespace
}  // namespace dvta
