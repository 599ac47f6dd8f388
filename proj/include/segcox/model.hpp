#pragma once

#include "segcox/types.hpp"

#include <cmath>

namespace segcox {

template <typename Scalar>
Scalar hinge(Scalar x, Scalar tau) {
  return x > tau ? x - tau : Scalar(0);
}

/// Linear predictor gamma'z + beta*x + omega*(x - tau)_+.
template <typename Derived>
double linear_predictor(const ThetaParams& theta, double x, const Eigen::MatrixBase<Derived>& z) {
  if (z.size() != theta.gamma.size())
    throw std::invalid_argument("relative_risk: z has length " + std::to_string(z.size()) +
                                " but gamma has length " + std::to_string(theta.gamma.size()));
  double lp = theta.beta * x + theta.omega * hinge(x, theta.tau);
  if (z.size() > 0) lp += theta.gamma.dot(z);
  return lp;
}

template <typename Derived>
double relative_risk(const ThetaParams& theta, double x, const Eigen::MatrixBase<Derived>& z) {
  return std::exp(linear_predictor(theta, x, z));
}

inline double relative_risk(const ThetaParams& theta, double x) {
  return relative_risk(theta, x, Vector());
}

}  // namespace segcox
