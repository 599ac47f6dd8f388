#include "segcox/datagen.hpp"
#include "segcox/model.hpp"
#include "segcox/normal.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace segcox {

double ScenarioConfig::tau() const { return normal_quantile(tau_quantile); }

ThetaParams ScenarioConfig::true_theta() const {
  ThetaParams t;
  t.beta = beta;
  t.omega = omega;
  t.tau = tau();
  return t;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (n <= 0) fail("n", "must be positive");
  if (!(target_incidence > 0.0 && target_incidence < 1.0)) fail("incidence", "must lie in (0, 1)");
  if (!(tau_quantile > 0.0 && tau_quantile < 1.0)) fail("tau_quantile", "must lie in (0, 1)");
  if (!(rho_xw > 0.0 && rho_xw <= 1.0)) fail("rho", "must lie in (0, 1]");
  if (m_valid <= 0) fail("m_valid", "must be positive");
  if (is_repeated(design) && k_repeats < 2) fail("k_repeats", "must be >= 2 for repeated-measures designs");
  if (!(t_star > 0.0)) fail("t_star", "must be positive");
  if (is_internal(design) && m_valid > n) fail("m_valid", "exceeds n for an internal design");
  if (replications <= 0) fail("replications", "must be positive");
  if (!std::isfinite(beta) || !std::isfinite(omega)) fail("beta/omega", "must be finite");
  if (method == Method::RR2 && bootstrap_replicates < 50) fail("bootstrap", "RR2 needs B >= 50");
}

double event_probability(double lambda0, const ThetaParams& theta, double t_star) {
  if (!(lambda0 > 0.0)) throw std::invalid_argument("event_probability: lambda0 must be positive");
  auto f = [&](double x) { return normal_pdf(x) * -std::expm1(-lambda0 * relative_risk(theta, x) * t_star); };
  // Integrate each side of the kink separately so both pieces are smooth.
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double inf = std::numeric_limits<double>::infinity();
  const double k = std::clamp(theta.tau, -40.0, 40.0);
  return GK::integrate(f, -inf, k, 15, 1e-14) + GK::integrate(f, k, inf, 15, 1e-14);
}

double calibrate_baseline_hazard(const ScenarioConfig& scenario) {
  const double target = scenario.target_incidence;
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("calibrate_baseline_hazard: incidence must lie in (0, 1)");
  const ThetaParams theta = scenario.true_theta();
  auto gap = [&](double lambda0) { return event_probability(lambda0, theta, scenario.t_star) - target; };

  double lo = 1e-3, hi = 1e-3;
  while (gap(hi) < 0.0) {
    hi *= 4.0;
    if (hi > 1e30) throw std::domain_error("calibrate_baseline_hazard: bracket exceeded 1e30");
  }
  while (gap(lo) > 0.0) {
    lo /= 4.0;
    if (lo < 1e-30) throw std::domain_error("calibrate_baseline_hazard: bracket fell below 1e-30");
  }
  // Bisection in log space; the bracket width shrinks to rounding long
  // before 200 halvings.
  double mid = std::sqrt(lo * hi);
  for (int it = 0; it < 200; ++it) {
    mid = std::sqrt(lo * hi);
    const double g = gap(mid);
    if (std::abs(g) <= 1e-12) break;
    (g < 0.0 ? lo : hi) = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return mid;
}

GeneratedCohort generate_cohort(const ScenarioConfig& scenario, double lambda0, RngStream& rng) {
  const ThetaParams theta = scenario.true_theta();
  const double sd_u = std::sqrt(scenario.sigma2_u());
  std::normal_distribution<double> normal;
  std::exponential_distribution<double> unit_exp(1.0);

  GeneratedCohort out;
  out.cohort.t_star = scenario.t_star;
  out.cohort.subjects.resize(static_cast<std::size_t>(scenario.n));
  out.latent_x.resize(scenario.n);
  for (Index i = 0; i < scenario.n; ++i) {
    const double x = normal(rng);
    const double e = normal(rng);
    const double t_event = unit_exp(rng) / (lambda0 * relative_risk(theta, x));
    auto& s = out.cohort.subjects[static_cast<std::size_t>(i)];
    s.event = t_event < scenario.t_star;
    s.event_time = s.event ? t_event : scenario.t_star;
    s.w = sd_u > 0.0 ? x + sd_u * e : x;
    out.latent_x(i) = x;
  }
  return out;
}

namespace {

std::vector<Index> sample_without_replacement(Index n, Index m, RngStream& rng) {
  std::vector<Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < m; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

ValidationSample generate_validation(const ScenarioConfig& scenario, const GeneratedCohort& cohort,
                                     RngStream& rng) {
  const double sd_u = std::sqrt(scenario.sigma2_u());
  const Index m = scenario.m_valid;
  const int k = scenario.k_repeats;
  std::normal_distribution<double> normal;
  auto surrogate = [&](double x) {
    const double e = normal(rng);
    return sd_u > 0.0 ? x + sd_u * e : x;
  };

  ValidationSample sample;
  sample.design = scenario.design;
  sample.records.reserve(static_cast<std::size_t>(m));

  switch (scenario.design) {
    case Design::EV_X:
      for (Index i = 0; i < m; ++i) {
        const double x = normal(rng);
        sample.records.push_back({x, {surrogate(x)}, std::nullopt});
      }
      break;
    case Design::EV_RM:
      for (Index i = 0; i < m; ++i) {
        const double x = normal(rng);
        ValidationRecord r;
        for (int j = 0; j < k; ++j) r.w.push_back(surrogate(x));
        sample.records.push_back(std::move(r));
      }
      break;
    case Design::IV_X:
    case Design::IV_RM: {
      const Index n = cohort.cohort.size();
      if (m > n) throw std::invalid_argument("generate_validation: m_valid exceeds cohort size");
      for (Index idx : sample_without_replacement(n, m, rng)) {
        const double x = cohort.latent_x(idx);
        const double w1 = cohort.cohort.subjects[static_cast<std::size_t>(idx)].w;
        ValidationRecord r;
        r.cohort_index = idx;
        r.w.push_back(w1);
        if (scenario.design == Design::IV_X) {
          r.x_true = x;
        } else {
          for (int j = 1; j < k; ++j) r.w.push_back(surrogate(x));
        }
        sample.records.push_back(std::move(r));
      }
      break;
    }
  }
  return sample;
}

}  // namespace segcox
