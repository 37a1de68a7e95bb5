#pragma once

#include <cstddef>
#include <span>

#include "dvta/numkernel/matrix.hpp"

namespace dvta {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kDistributionTolerance = 1e-6;

// Pure dense kernels. None of these touch shared state.

Matrix matmul(const Matrix& a, const Matrix& b, bool transpose_a = false,
              bool transpose_b = false);
Matrix transpose(const Matrix& m);
/// Adds a 1xN bias row to every row of an MxN matrix.
Matrix add_bias(const Matrix& m, const Matrix& bias);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
Matrix relu(const Matrix& m);
Matrix leaky_relu(const Matrix& m, double slope);
Matrix concat_cols(const Matrix& left, const Matrix& right);

/// Softmax of each row of m / temperature, using max subtraction.
Matrix row_softmax(const Matrix& m, double temperature = 1.0);

/// Rows with Euclidean norm <= kNormEpsilon are returned unchanged.
Matrix l2_normalize_rows(const Matrix& m);

/// Entry (i, j) is cos(a_i, b_j); a zero-norm row on either side yields 0.
Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b);

double sigmoid(double x);

/// Sigmoid for x > 0, gamma * exp(gamma * x) for x <= 0. The two branches do
/// not meet at 0 (left value gamma, right limit 0.5); that jump is kept as is.
double leaky_sigmoid(double x, double gamma);
double leaky_sigmoid_derivative(double x, double gamma);

/// Mean over rows of KL(target_row || pred_row). Both arguments must be
/// row-stochastic; pred entries are floored at kProbabilityFloor.
double kl_rows(const Matrix& target, const Matrix& pred);

/// True when every row has non-negative entries summing to 1 within tol.
bool is_row_stochastic(const Matrix& m, double tol);

}  // namespace dvta
