#pragma once

#include "segcox/model.hpp"
#include "segcox/normal.hpp"
#include "segcox/types.hpp"

#include <Eigen/Core>

#include <cmath>

namespace segcox {

/// Normal posterior of X given the mean of k surrogates.
template <typename Scalar>
struct PosteriorMoments {
  Scalar mean{0};
  Scalar variance{0};
};

template <typename Scalar>
PosteriorMoments<Scalar> posterior_moments(Scalar w_bar, int k, const NuisanceParams& phi) {
  if (k < 1) throw std::invalid_argument("posterior_moments: k must be >= 1");
  const Scalar s2x = phi.sigma2_x;
  const Scalar noise = Scalar(phi.sigma2_u) / Scalar(k);
  const Scalar shrink = s2x / (s2x + noise);
  return {Scalar(phi.mu_x) + shrink * (w_bar - Scalar(phi.mu_x)), s2x * noise / (s2x + noise)};
}

/// E[(X - tau)_+] for X ~ N(mean, variance).
template <typename Scalar>
Scalar expected_hinge(const PosteriorMoments<Scalar>& pm, Scalar tau) {
  if (pm.variance <= Scalar(0)) return hinge(pm.mean, tau);
  const Scalar sd = std::sqrt(pm.variance);
  const Scalar d = (pm.mean - tau) / sd;
  return (pm.mean - tau) * normal_cdf(d) + sd * normal_pdf(d);
}

/// log E[exp(gamma'z + beta X + omega (X - tau)_+)] and its first and second
/// derivatives in (beta, omega); the gamma block of the gradient is z and
/// contributes nothing to the Hessian.
struct InducedRiskTerms {
  double log_risk = 0.0;
  Eigen::Vector2d grad = Eigen::Vector2d::Zero();
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
};

/// Terms excluding the gamma'z offset.
InducedRiskTerms induced_risk_terms(double beta, double omega, double tau,
                                    const PosteriorMoments<double>& pm);

double induced_rr(const ThetaParams& theta, const PosteriorMoments<double>& pm, const Vector& z);

/// d log induced_rr / d(gamma, beta, omega).
Vector induced_rr_loggrad(const ThetaParams& theta, const PosteriorMoments<double>& pm, const Vector& z);

/// Per-subject covariate representation for one correction method. RC
/// methods store the substituted design columns; RR methods keep the
/// posterior moments, since their risk depends on theta.
struct AnalysisDataset {
  Method method = Method::RC1;
  double tau = 0.0;
  Vector time;
  Eigen::VectorXi event;
  Matrix z;           // n x q
  Vector post_mean;   // E(X | data); x_true for revealed subjects
  Vector post_var;    // Var(X | data); 0 for revealed subjects
  Matrix covariates;  // n x 2: (x-column, hinge-column) for RC methods
  std::vector<Index> descending;  // subject order by decreasing event time

  Index size() const { return time.size(); }
  Index dim() const { return z.cols() + 2; }
};

/// Applies the method's substitution to every cohort subject. Internal
/// designs replace calibration with x_true (IV_X) or with the all-repeat
/// posterior (IV_RM) for the overlap subjects.
AnalysisDataset build_analysis_dataset(const Cohort& cohort, const ValidationSample& validation,
                                       const NuisanceParams& phi, double tau, Method method);

/// Uncorrected dataset using (W, (W - tau)_+) directly; Z allowed.
AnalysisDataset naive_dataset(const Cohort& cohort, double tau);

}  // namespace segcox
