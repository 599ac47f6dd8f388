#include "segcox/cox.hpp"
#include "segcox/rng.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>

namespace segcox {

namespace {

ThetaParams zero_theta(Index q, double tau) {
  ThetaParams t;
  t.gamma = Vector::Zero(q);
  t.tau = tau;
  return t;
}

/// Visits groups of tied times in decreasing time order: f(begin, end) over
/// positions in data.descending.
template <typename F>
void for_each_time_group(const AnalysisDataset& data, F&& f) {
  const auto& order = data.descending;
  std::size_t begin = 0;
  while (begin < order.size()) {
    std::size_t end = begin + 1;
    while (end < order.size() && data.time(order[end]) == data.time(order[begin])) ++end;
    f(begin, end);
    begin = end;
  }
}

Matrix hessian_block(const RiskEvaluation& risk, Index i, Index p) {
  Matrix h = Matrix::Zero(p, p);
  if (!risk.curved) return h;
  h(p - 2, p - 2) = risk.hess(i, 0);
  h(p - 2, p - 1) = h(p - 1, p - 2) = risk.hess(i, 1);
  h(p - 1, p - 1) = risk.hess(i, 2);
  return h;
}

double weight_of(const Vector& weights, Index i) { return weights.size() == 0 ? 1.0 : weights(i); }

}  // namespace

RiskEvaluation evaluate_risk(const ThetaParams& theta, const AnalysisDataset& data) {
  const Index n = data.size();
  const Index q = data.z.cols();
  const Index p = q + 2;
  if (theta.gamma.size() != q) throw std::invalid_argument("evaluate_risk: gamma length does not match Z");
  RiskEvaluation risk;
  risk.grad.resize(n, p);
  if (q > 0) risk.grad.leftCols(q) = data.z;
  if (!uses_induced_risk(data.method)) {
    risk.grad.rightCols<2>() = data.covariates;
    risk.log_risk = risk.grad * theta.coefficients();
    return risk;
  }
  risk.curved = true;
  risk.log_risk.resize(n);
  risk.hess.resize(n, 3);
  for (Index i = 0; i < n; ++i) {
    const auto t = induced_risk_terms(theta.beta, theta.omega, data.tau, {data.post_mean(i), data.post_var(i)});
    risk.log_risk(i) = t.log_risk;
    risk.grad(i, q) = t.grad(0);
    risk.grad(i, q + 1) = t.grad(1);
    risk.hess.row(i) << t.hess(0, 0), t.hess(0, 1), t.hess(1, 1);
  }
  if (q > 0) risk.log_risk += data.z * theta.gamma;
  return risk;
}

ScoreInfo score_and_info(const ThetaParams& theta, const AnalysisDataset& data, const Vector& weights) {
  const Index p = data.dim();
  const RiskEvaluation risk = evaluate_risk(theta, data);
  if (!risk.log_risk.allFinite()) throw EstimationError("score_and_info: non-finite relative risk");
  const double shift = risk.log_risk.maxCoeff();

  ScoreInfo out;
  out.score = Vector::Zero(p);
  out.info = Matrix::Zero(p, p);
  double s0 = 0.0;
  Vector s1 = Vector::Zero(p);
  Matrix s2 = Matrix::Zero(p, p);

  for_each_time_group(data, [&](std::size_t begin, std::size_t end) {
    double event_weight = 0.0;
    Vector event_grad = Vector::Zero(p);
    Matrix event_hess = Matrix::Zero(p, p);
    double event_lr = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const Index j = data.descending[k];
      const double w = weight_of(weights, j);
      const double wr = w * std::exp(risk.log_risk(j) - shift);
      const auto g = risk.grad.row(j).transpose();
      s0 += wr;
      s1.noalias() += wr * g;
      s2.noalias() += wr * (g * g.transpose());
      if (risk.curved) s2 += wr * hessian_block(risk, j, p);
      if (data.event(j)) {
        event_weight += w;
        event_grad += w * g;
        event_lr += w * (risk.log_risk(j) - shift);
        if (risk.curved) event_hess += w * hessian_block(risk, j, p);
      }
    }
    if (event_weight == 0.0) return;
    if (!(s0 > 0.0)) throw EstimationError("score_and_info: empty risk set at an event time");
    const Vector mean = s1 / s0;
    out.score += event_grad - event_weight * mean;
    out.info += event_weight * (s2 / s0 - mean * mean.transpose()) - event_hess;
    out.log_likelihood += event_lr - event_weight * std::log(s0);
  });
  return out;
}

FitResult solve_score(const ThetaParams& init, const AnalysisDataset& data, const SolverOptions& options,
                      const Vector& weights) {
  FitResult fit;
  Vector coef = init.coefficients();
  const double tau = init.tau;
  fit.theta_hat = init;
  if (!coef.allFinite()) {
    fit.message = "non-finite starting value";
    return fit;
  }

  ScoreInfo current;
  try {
    current = score_and_info(init, data, weights);
  } catch (const EstimationError& e) {
    fit.message = e.what();
    return fit;
  }

  bool reached = false;
  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::JacobiSVD<Matrix> svd(current.info);
    const auto& sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    if (!std::isfinite(cond) || cond > options.max_condition) {
      fit.message = "singular information matrix";
      break;
    }
    if (current.score.lpNorm<Eigen::Infinity>() <= options.score_tolerance) {
      reached = true;
      break;
    }
    if (iter == options.max_iterations) {
      fit.message = "iteration limit reached";
      break;
    }
    const Vector step = current.info.fullPivLu().solve(current.score);
    const double norm = current.score.norm();
    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      const Vector candidate = coef + scale * step;
      try {
        ScoreInfo trial = score_and_info(ThetaParams::from_coefficients(candidate, tau), data, weights);
        if (trial.score.allFinite() && trial.score.norm() < norm) {
          coef = candidate;
          current = std::move(trial);
          accepted = true;
          break;
        }
      } catch (const EstimationError&) {
      }
    }
    if (!accepted) {
      fit.message = "step halving failed to reduce the score";
      break;
    }
    if (coef.lpNorm<Eigen::Infinity>() > options.abandon_bound) {
      fit.message = "iterates diverged";
      break;
    }
  }

  fit.theta_hat = ThetaParams::from_coefficients(coef, tau);
  fit.score = current.score;
  fit.info = current.info;
  if (reached) {
    if (coef.lpNorm<Eigen::Infinity>() <= options.box) {
      fit.converged = true;
    } else {
      fit.message = "estimate outside the |theta| <= " + std::to_string(options.box) + " guard";
    }
  }
  return fit;
}

Matrix score_residuals(const ThetaParams& theta, const AnalysisDataset& data) {
  const Index n = data.size();
  const Index p = data.dim();
  const RiskEvaluation risk = evaluate_risk(theta, data);
  if (!risk.log_risk.allFinite()) throw EstimationError("score_residuals: non-finite relative risk");
  const double shift = risk.log_risk.maxCoeff();
  const Vector r = (risk.log_risk.array() - shift).exp().matrix();

  // Pass 1 (decreasing time): risk-set mean at every tied-time group.
  struct Group {
    std::size_t begin, end;
    double events;
    double s0;
    Vector mean;
  };
  std::vector<Group> groups;
  double s0 = 0.0;
  Vector s1 = Vector::Zero(p);
  for_each_time_group(data, [&](std::size_t begin, std::size_t end) {
    double events = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const Index j = data.descending[k];
      s0 += r(j);
      s1 += r(j) * risk.grad.row(j).transpose();
      events += data.event(j);
    }
    groups.push_back({begin, end, events, s0, s1 / s0});
  });

  // Pass 2 (increasing time): compensator sums over events up to each time.
  Matrix h(n, p);
  double c0 = 0.0;
  Vector c1 = Vector::Zero(p);
  for (auto g = groups.rbegin(); g != groups.rend(); ++g) {
    if (g->events > 0.0) {
      c0 += g->events / g->s0;
      c1 += (g->events / g->s0) * g->mean;
    }
    for (std::size_t k = g->begin; k < g->end; ++k) {
      const Index i = data.descending[k];
      const Vector gi = risk.grad.row(i).transpose();
      Vector hi = -r(i) * (gi * c0 - c1);
      if (data.event(i)) hi += gi - g->mean;
      h.row(i) = hi.transpose();
    }
  }
  return h;
}

Matrix u_phi_jacobian(const ThetaParams& theta, const Cohort& cohort, const ValidationSample& validation,
                      const NuisanceParams& phi, Method method, double relative_step) {
  const Eigen::Vector3d base = phi.as_vector();
  auto score_at = [&](const Eigen::Vector3d& v) {
    const auto data = build_analysis_dataset(cohort, validation, NuisanceParams::from_vector(v), theta.tau, method);
    return score_and_info(theta, data).score;
  };
  Matrix jac(theta.dim(), 3);
  for (int j = 0; j < 3; ++j) {
    double h = relative_step * std::max(std::abs(base(j)), 1.0);
    bool one_sided = false;
    if (j == 1) {
      while (base(j) - h <= 0.0) h *= 0.5;
    } else if (j == 2) {
      if (base(j) == 0.0) {
        one_sided = true;
      } else {
        while (base(j) - h < 0.0) h *= 0.5;
      }
    }
    Eigen::Vector3d up = base, down = base;
    up(j) += h;
    if (one_sided) {
      jac.col(j) = (score_at(up) - score_at(base)) / h;
    } else {
      down(j) -= h;
      jac.col(j) = (score_at(up) - score_at(down)) / (2.0 * h);
    }
  }
  return jac;
}

Matrix naive_covariance(const FitResult& fit) {
  const Matrix info_inv = fit.info.fullPivLu().inverse();
  const Matrix meat = fit.score_residuals.transpose() * fit.score_residuals;
  Matrix omega = info_inv * meat * info_inv.transpose();
  return 0.5 * (omega + omega.transpose());
}

Matrix corrected_covariance(const FitResult& fit, const NuisanceEstimate& nuisance, Design design) {
  if (nuisance.design != design) throw std::invalid_argument("corrected_covariance: nuisance design mismatch");
  const Matrix info_inv = fit.info.fullPivLu().inverse();
  const Matrix& g = fit.u_phi_jacobian;
  Matrix meat = fit.score_residuals.transpose() * fit.score_residuals + g * nuisance.cov_phi * g.transpose();

  if (design == Design::IV_RM) {
    // Cross-covariance of the main-study score with the estimating
    // functions of the overlapping subjects.
    Matrix cross = Matrix::Zero(g.rows(), 3);
    for (Index i = 0; i < nuisance.m; ++i) {
      const auto idx = nuisance.cohort_index[static_cast<std::size_t>(i)];
      if (!idx) throw std::invalid_argument("corrected_covariance: IV_RM record without cohort index");
      cross += fit.score_residuals.row(*idx).transpose() * nuisance.per_subject_psi.row(i);
    }
    cross /= static_cast<double>(nuisance.m);
    const Matrix term = cross * nuisance.jacobian_A.inverse().transpose() * g.transpose();
    meat -= term + term.transpose();
  }

  Matrix omega = info_inv * meat * info_inv.transpose();
  omega = 0.5 * (omega + omega.transpose()).eval();
  if ((omega.diagonal().array() < 0.0).any() || !omega.allFinite())
    throw EstimationError("corrected_covariance: negative variance estimate");
  return omega;
}

FitResult rr2_fit(const Cohort& cohort, const ValidationSample& validation, const NuisanceParams& phi,
                  const ThetaParams& theta_init, int bootstrap_replicates, std::uint64_t seed,
                  const SolverOptions& options) {
  if (bootstrap_replicates < 50) throw std::invalid_argument("rr2_fit: need at least 50 bootstrap replicates");
  const auto data = build_analysis_dataset(cohort, validation, phi, theta_init.tau, Method::RR1);
  FitResult base = solve_score(theta_init, data, options);
  if (!base.converged) return base;

  // Bootstrap refits may wander a little past the box on their own.
  SolverOptions boot_options = options;
  boot_options.box = options.abandon_bound;

  const Vector theta_rr1 = base.theta_hat.coefficients();
  Vector sum = Vector::Zero(theta_rr1.size());
  int failures = 0;
  std::exponential_distribution<double> unit_exp(1.0);
  Vector weights(data.size());
  for (int b = 0; b < bootstrap_replicates; ++b) {
    RngStream rng = make_stream(seed, static_cast<std::uint64_t>(b), StreamPurpose::Bootstrap);
    for (Index i = 0; i < weights.size(); ++i) weights(i) = unit_exp(rng);
    const FitResult draw = solve_score(base.theta_hat, data, boot_options, weights);
    if (draw.converged) {
      sum += draw.theta_hat.coefficients();
    } else {
      ++failures;
    }
  }

  FitResult fit = base;
  fit.rr1_theta = base.theta_hat;
  fit.bootstrap_failures = failures;
  if (failures > bootstrap_replicates / 5) {
    fit.converged = false;
    fit.message = "more than 20% of bootstrap refits diverged";
    return fit;
  }
  fit.bootstrap_bias = sum / static_cast<double>(bootstrap_replicates - failures) - theta_rr1;
  const Vector corrected = theta_rr1 - fit.bootstrap_bias;
  fit.theta_hat = ThetaParams::from_coefficients(corrected, theta_init.tau);
  fit.converged = corrected.lpNorm<Eigen::Infinity>() <= options.box;
  if (!fit.converged) fit.message = "bias-corrected estimate outside the guard";
  return fit;
}

FitResult fit_corrected(const Cohort& cohort, const ValidationSample& validation, const NuisanceEstimate& nuisance,
                        Method method, double tau, const FitOptions& options) {
  const ThetaParams zero = zero_theta(cohort.z_dim(), tau);
  const FitResult naive = solve_score(zero, naive_dataset(cohort, tau), options.solver);
  const ThetaParams init = naive.converged ? naive.theta_hat : zero;

  const Method base_method = method == Method::RR2 ? Method::RR1 : method;
  FitResult fit;
  if (method == Method::RR2) {
    fit = rr2_fit(cohort, validation, nuisance.phi, init, options.bootstrap_replicates, options.bootstrap_seed,
                  options.solver);
  } else {
    fit = solve_score(init, build_analysis_dataset(cohort, validation, nuisance.phi, tau, method), options.solver);
  }
  if (!fit.converged) return fit;

  const ThetaParams& at = fit.rr1_theta ? *fit.rr1_theta : fit.theta_hat;
  try {
    const auto data = build_analysis_dataset(cohort, validation, nuisance.phi, tau, base_method);
    fit.score_residuals = score_residuals(at, data);
    fit.u_phi_jacobian = u_phi_jacobian(at, cohort, validation, nuisance.phi, base_method);
    fit.omega_naive = naive_covariance(fit);
    fit.omega_corr = corrected_covariance(fit, nuisance, validation.design);
  } catch (const EstimationError& e) {
    fit.converged = false;
    fit.message = e.what();
  }
  return fit;
}

}  // namespace segcox
