#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "sanet/tensor.hpp"

namespace sanet {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Central differences (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h for every coordinate of x.
// Always 64-bit: central differences carry no usable signal in 32-bit.
Tensor<double> finite_diff_gradient(const std::function<double(const Tensor<double>&)>& f,
                                    const Tensor<double>& x, double step = 1e-5);

// Same, but perturbs `x` in place and restores it; suited to network
// parameters that cannot be passed by value.
Tensor<double> finite_diff_inplace(const std::function<double()>& f, Tensor<double>& x,
                                   double step = 1e-5);

// |a − n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric);

}  // namespace sanet
