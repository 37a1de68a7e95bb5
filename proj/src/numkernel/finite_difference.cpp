#include "dvta/numkernel/finite_difference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dvta {

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<double> x,
    double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_gradient: step must be > 0");
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double up = f(x);
    x[i] = saved - step;
    const double down = f(x);
    x[i] = saved;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max(std::abs(analytic) + std::abs(numeric), floor);
  if (denom == 0.0) return 0.0;
  return std::abs(analytic - numeric) / denom;
}

}  // namespace dvta
