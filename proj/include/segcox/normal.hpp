#pragma once

#include <cmath>
#include <numbers>

namespace segcox {

template <typename Scalar>
Scalar normal_pdf(Scalar x) {
  return std::exp(Scalar(-0.5) * x * x) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

/// Phi(x)/phi(x). The asymptotic series takes over where Phi underflows
/// relative to its own scale.
template <typename Scalar>
Scalar cdf_over_pdf(Scalar x) {
  if (x > Scalar(-30)) return normal_cdf(x) / normal_pdf(x);
  const Scalar r = Scalar(1) / (x * x);
  return (Scalar(1) - r * (Scalar(1) - r * (Scalar(3) - r * (Scalar(15) - Scalar(105) * r)))) / -x;
}

/// Inverse Mills ratio phi(x)/Phi(x).
template <typename Scalar>
Scalar inverse_mills(Scalar x) {
  return Scalar(1) / cdf_over_pdf(x);
}

template <typename Scalar>
Scalar log_normal_cdf(Scalar x) {
  if (x > Scalar(-30)) return std::log(normal_cdf(x));
  const Scalar log_pdf = Scalar(-0.5) * x * x - Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return log_pdf + std::log(cdf_over_pdf(x));
}

double normal_quantile(double p);

}  // namespace segcox
