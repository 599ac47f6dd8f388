#pragma once

#include "segcox/calibration.hpp"
#include "segcox/nuisance.hpp"
#include "segcox/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace segcox {

struct SolverOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  double score_tolerance = 1e-8;   // on max |U_j|
  double box = 4.9;                // |theta_j| guard applied at termination
  double max_condition = 1e12;     // information condition number
  double abandon_bound = 50.0;     // iterates beyond this cannot return inside the box
};

/// Score U, information I = -dU/dtheta and log partial likelihood of the
/// (optionally subject-weighted) Breslow partial likelihood.
struct ScoreInfo {
  Vector score;
  Matrix info;
  double log_likelihood = 0.0;
};

/// Per-subject log risk, its gradient (n x p) and, for induced-risk methods,
/// the (beta, omega) Hessian stored as columns (bb, bo, oo).
struct RiskEvaluation {
  Vector log_risk;
  Matrix grad;
  Eigen::Matrix<double, Eigen::Dynamic, 3> hess;
  bool curved = false;
};

RiskEvaluation evaluate_risk(const ThetaParams& theta, const AnalysisDataset& data);

/// Empty `weights` means unit weights.
ScoreInfo score_and_info(const ThetaParams& theta, const AnalysisDataset& data, const Vector& weights = Vector());

struct FitResult {
  ThetaParams theta_hat;
  bool converged = false;
  int iterations = 0;
  std::string message;
  Vector score;
  Matrix info;
  Matrix omega_corr;
  Matrix omega_naive;
  Matrix score_residuals;  // n x p, rows H_i
  Matrix u_phi_jacobian;   // p x 3
  // RR2 only: the RR1 estimate being corrected and the bootstrap bias.
  std::optional<ThetaParams> rr1_theta;
  Vector bootstrap_bias;
  int bootstrap_failures = 0;
};

/// Damped Newton on U(theta) = 0 with step halving on ||U||.
FitResult solve_score(const ThetaParams& init, const AnalysisDataset& data, const SolverOptions& options = {},
                      const Vector& weights = Vector());

/// Cox score residuals; they sum to U(theta).
Matrix score_residuals(const ThetaParams& theta, const AnalysisDataset& data);

/// dU/dphi at fixed theta by central differences (relative step), rebuilding
/// the analysis dataset for every perturbed phi.
Matrix u_phi_jacobian(const ThetaParams& theta, const Cohort& cohort, const ValidationSample& validation,
                      const NuisanceParams& phi, Method method, double relative_step = 1e-5);

/// Omega_corr = I^-1 A_corr I^-1 with raw (unnormalized) sums; the internal
/// repeated-measures design subtracts the score/estimating-function
/// cross-covariance. Uses fit.info, fit.score_residuals, fit.u_phi_jacobian.
Matrix corrected_covariance(const FitResult& fit, const NuisanceEstimate& nuisance, Design design);

/// Nuisance-ignoring sandwich I^-1 (sum H_i H_i') I^-1.
Matrix naive_covariance(const FitResult& fit);

/// Weighted-bootstrap bias correction of the RR1 estimate with Exp(1)
/// subject weights; each draw b uses its own stream split from `seed`.
FitResult rr2_fit(const Cohort& cohort, const ValidationSample& validation, const NuisanceParams& phi,
                  const ThetaParams& theta_init, int bootstrap_replicates, std::uint64_t seed,
                  const SolverOptions& options = {});

struct FitOptions {
  SolverOptions solver;
  int bootstrap_replicates = 100;
  std::uint64_t bootstrap_seed = 0;
};

/// Naive start, corrected point estimate, score residuals, dU/dphi and the
/// design-specific corrected covariance. Estimation failures come back as
/// converged == false with a message; nothing is thrown for them.
FitResult fit_corrected(const Cohort& cohort, const ValidationSample& validation, const NuisanceEstimate& nuisance,
                        Method method, double tau, const FitOptions& options = {});

}  // namespace segcox
