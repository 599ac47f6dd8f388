#include "segcox/calibration.hpp"

#include <algorithm>
#include <numeric>

namespace segcox {

InducedRiskTerms induced_risk_terms(double beta, double omega, double tau,
                                    const PosteriorMoments<double>& pm) {
  InducedRiskTerms t;
  const double m = pm.mean;
  const double v = pm.variance;
  if (v <= 0.0) {
    const double h = hinge(m, tau);
    t.log_risk = beta * m + omega * h;
    t.grad = {m, h};
    return t;
  }
  const double s = std::sqrt(v);
  const double slope_hi = beta + omega;

  // Below tau the integrand is exp(beta x): exponential tilting moves the
  // mean to m + beta v. Above tau the slope is beta + omega.
  const double mean_lo = m + beta * v;
  const double mean_hi = m + slope_hi * v;
  const double alpha = (tau - mean_lo) / s;
  const double q = (mean_hi - tau) / s;
  const double log_lo = beta * m + 0.5 * beta * beta * v + log_normal_cdf(alpha);
  const double log_hi = -omega * tau + slope_hi * m + 0.5 * slope_hi * slope_hi * v + log_normal_cdf(q);
  const double top = std::max(log_lo, log_hi);
  const double e_lo = std::exp(log_lo - top);
  const double e_hi = std::exp(log_hi - top);
  t.log_risk = top + std::log(e_lo + e_hi);
  const double p_lo = e_lo / (e_lo + e_hi);
  const double p_hi = e_hi / (e_lo + e_hi);

  // Truncated-normal moments under the tilted laws.
  const double lam = inverse_mills(alpha);
  const double ey_lo = mean_lo - s * lam;
  const double ey2_lo = mean_lo * mean_lo + v - s * (mean_lo + tau) * lam;

  const double kap = inverse_mills(q);
  const double d = mean_hi - tau;
  const double ed_hi = d + s * kap;
  const double ed2_hi = d * d + v + s * d * kap;
  const double ey_hi = tau + ed_hi;
  const double ey2_hi = tau * tau + 2.0 * tau * ed_hi + ed2_hi;
  const double eyd_hi = ed2_hi + tau * ed_hi;

  t.grad = {p_lo * ey_lo + p_hi * ey_hi, p_hi * ed_hi};
  Eigen::Matrix2d second;
  second << p_lo * ey2_lo + p_hi * ey2_hi, p_hi * eyd_hi,
            p_hi * eyd_hi, p_hi * ed2_hi;
  t.hess = second - t.grad * t.grad.transpose();
  return t;
}

double induced_rr(const ThetaParams& theta, const PosteriorMoments<double>& pm, const Vector& z) {
  if (z.size() != theta.gamma.size()) throw std::invalid_argument("induced_rr: z/gamma length mismatch");
  double offset = z.size() > 0 ? theta.gamma.dot(z) : 0.0;
  return std::exp(offset + induced_risk_terms(theta.beta, theta.omega, theta.tau, pm).log_risk);
}

Vector induced_rr_loggrad(const ThetaParams& theta, const PosteriorMoments<double>& pm, const Vector& z) {
  if (z.size() != theta.gamma.size()) throw std::invalid_argument("induced_rr_loggrad: z/gamma length mismatch");
  const auto terms = induced_risk_terms(theta.beta, theta.omega, theta.tau, pm);
  Vector g(theta.dim());
  g.head(z.size()) = z;
  g.tail<2>() = terms.grad;
  return g;
}

namespace {

AnalysisDataset skeleton(const Cohort& cohort, double tau, Method method) {
  cohort.validate();
  const Index n = cohort.size();
  const Index q = cohort.z_dim();
  AnalysisDataset data;
  data.method = method;
  data.tau = tau;
  data.time.resize(n);
  data.event.resize(n);
  data.z.resize(n, q);
  data.post_mean.resize(n);
  data.post_var.setZero(n);
  for (Index i = 0; i < n; ++i) {
    const auto& s = cohort.subjects[static_cast<std::size_t>(i)];
    data.time(i) = s.event_time;
    data.event(i) = s.event ? 1 : 0;
    if (q > 0) data.z.row(i) = s.z.transpose();
  }
  data.descending.resize(static_cast<std::size_t>(n));
  std::iota(data.descending.begin(), data.descending.end(), Index{0});
  std::stable_sort(data.descending.begin(), data.descending.end(),
                   [&](Index a, Index b) { return data.time(a) > data.time(b); });
  return data;
}

void fill_covariates(AnalysisDataset& data) {
  const Index n = data.size();
  data.covariates.resize(n, 2);
  for (Index i = 0; i < n; ++i) {
    const PosteriorMoments<double> pm{data.post_mean(i), data.post_var(i)};
    data.covariates(i, 0) = pm.mean;
    data.covariates(i, 1) = data.method == Method::RC2 ? expected_hinge(pm, data.tau)
                                                       : hinge(pm.mean, data.tau);
  }
}

}  // namespace

AnalysisDataset build_analysis_dataset(const Cohort& cohort, const ValidationSample& validation,
                                       const NuisanceParams& phi, double tau, Method method) {
  if (cohort.z_dim() > 0)
    throw std::invalid_argument(
        "build_analysis_dataset: error correction conditions on W alone; cohorts with Z covariates "
        "are not supported by the calibration methods");
  if (!phi.valid()) throw std::invalid_argument("build_analysis_dataset: invalid nuisance parameters");
  validation.validate(cohort.size());

  AnalysisDataset data = skeleton(cohort, tau, method);
  for (Index i = 0; i < data.size(); ++i) {
    const auto pm = posterior_moments(cohort.subjects[static_cast<std::size_t>(i)].w, 1, phi);
    data.post_mean(i) = pm.mean;
    data.post_var(i) = pm.variance;
  }
  if (is_internal(validation.design)) {
    for (const auto& r : validation.records) {
      const Index i = *r.cohort_index;
      if (validation.design == Design::IV_X) {
        data.post_mean(i) = *r.x_true;
        data.post_var(i) = 0.0;
      } else {
        const double wbar = std::accumulate(r.w.begin(), r.w.end(), 0.0) / static_cast<double>(r.w.size());
        const auto pm = posterior_moments(wbar, static_cast<int>(r.w.size()), phi);
        data.post_mean(i) = pm.mean;
        data.post_var(i) = pm.variance;
      }
    }
  }
  if (!uses_induced_risk(method)) fill_covariates(data);
  return data;
}

AnalysisDataset naive_dataset(const Cohort& cohort, double tau) {
  AnalysisDataset data = skeleton(cohort, tau, Method::RC1);
  for (Index i = 0; i < data.size(); ++i) data.post_mean(i) = cohort.subjects[static_cast<std::size_t>(i)].w;
  fill_covariates(data);
  return data;
}

}  // namespace segcox
