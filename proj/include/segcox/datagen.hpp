#pragma once

#include "segcox/rng.hpp"
#include "segcox/types.hpp"

#include <string>

namespace segcox {

/// One cell of a simulation grid. X is standard normal, so sigma2_x = 1 and
/// the surrogate error variance follows from the target correlation.
struct ScenarioConfig {
  std::string disease = "common";
  Index n = 3000;
  double target_incidence = 0.5;
  double beta = 0.4054651081081644;   // log 1.5
  double omega = 0.6931471805599453;  // log 2
  double tau_quantile = 0.5;
  double rho_xw = 0.8;
  Index m_valid = 500;
  int k_repeats = 2;
  double t_star = 10.0;
  Design design = Design::EV_X;
  Method method = Method::RC1;
  int replications = 200;
  std::uint64_t seed = 20200101;
  int bootstrap_replicates = 100;

  /// sigma_u^2 = (1 - rho^2) / rho^2 with sigma_x^2 = 1; rho = 1 gives zero error.
  double sigma2_u() const { return (1.0 - rho_xw * rho_xw) / (rho_xw * rho_xw); }
  double tau() const;
  ThetaParams true_theta() const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Cohort plus the latent X values, which only the validation generator
/// and test oracles may look at.
struct GeneratedCohort {
  Cohort cohort;
  Vector latent_x;
};

/// P(event by t_star) with X ~ N(0,1), by Gauss-Hermite quadrature.
double event_probability(double lambda0, const ThetaParams& theta, double t_star);

/// Baseline hazard hitting the scenario's cumulative incidence to 1e-10.
double calibrate_baseline_hazard(const ScenarioConfig& scenario);

GeneratedCohort generate_cohort(const ScenarioConfig& scenario, double lambda0, RngStream& rng);

ValidationSample generate_validation(const ScenarioConfig& scenario, const GeneratedCohort& cohort,
                                     RngStream& rng);

}  // namespace segcox
