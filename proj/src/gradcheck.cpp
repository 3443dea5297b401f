#include "sanet/gradcheck.hpp"

#include <string>

namespace sanet {

namespace {

double checked(double v, std::size_t coord) {
  if (!std::isfinite(v)) {
    throw NonFiniteError("non-finite function value while differentiating coordinate " +
                         std::to_string(coord));
  }
  return v;
}

}  // namespace

Tensor<double> finite_diff_gradient(const std::function<double(const Tensor<double>&)>& f,
                                    const Tensor<double>& x, double step) {
  Tensor<double> probe = x;
  return finite_diff_inplace([&] { return f(probe); }, probe, step);
}

Tensor<double> finite_diff_inplace(const std::function<double()>& f, Tensor<double>& x,
                                   double step) {
  Tensor<double> grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double up = checked(f(), i);
    x[i] = orig - step;
    const double down = checked(f(), i);
    x[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(const Tensor<double>& analytic, const Tensor<double>& numeric) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("gradient shapes differ: " + analytic.shape().str() + " vs " +
                     numeric.shape().str());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, relative_error(analytic[i], numeric[i]));
  }
  return worst;
}

}  // namespace sanet
