#pragma once

#include "segcox/types.hpp"

#include <Eigen/Core>

namespace segcox {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

/// phi-hat with its M-estimation sandwich covariance.
struct NuisanceEstimate {
  NuisanceParams phi;
  Matrix3 cov_phi = Matrix3::Zero();
  Eigen::Matrix<double, Eigen::Dynamic, 3> per_subject_psi;  // m x 3, rows aligned to records
  Matrix3 jacobian_A = Matrix3::Zero();                       // m^-1 sum dPsi_i/dphi'
  Matrix3 meat_B = Matrix3::Zero();                           // m^-1 sum Psi_i Psi_i'
  double condition_A = 0.0;
  Design design = Design::EV_X;
  Index m = 0;
  std::vector<std::optional<Index>> cohort_index;  // overlap with the main cohort (internal designs)
};

/// i-th estimating-function summand for X-designs: with u = w - x,
///   (x - mu, (x - mu)^2 - s2x (m-1)/m, u^2 - s2u (m-1)/m).
Vector3 psi_x(double x, double w, const NuisanceParams& phi, Index m);
Matrix3 psi_x_jacobian(double x, double w, const NuisanceParams& phi, Index m);

/// i-th summand for repeated surrogates w_1..w_k; `sum_k` is the total number
/// of measurements over the sample.
Vector3 psi_rm(const std::vector<double>& w, const NuisanceParams& phi, Index m, Index sum_k);
Matrix3 psi_rm_jacobian(const std::vector<double>& w, const NuisanceParams& phi, Index m, Index sum_k);

/// Closed-form root of sum Psi_i = 0 plus the sandwich covariance
/// m^-1 A^-1 B A^-T. Throws EstimationError when sigma2_x-hat <= 0 or A is
/// numerically singular.
NuisanceEstimate solve_nuisance(const ValidationSample& sample);

}  // namespace segcox
