#pragma once

#include <functional>
#include <span>
#include <vector>

namespace dvta {

/// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate of x. x is restored before returning.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<double> x,
    double step);

/// |a - n| / max(|a| + |n|, floor); 0 when both are exactly zero.
double relative_error(double analytic, double numeric, double floor = 0.0);

}  // namespace dvta
