#include "segcox/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <thread>
#include <tuple>

namespace segcox {

ReplicateData generate_replicate(const ScenarioConfig& scenario, double lambda0, std::uint64_t rep_index) {
  ReplicateData data;
  RngStream cohort_rng = make_stream(scenario.seed, rep_index, StreamPurpose::Cohort);
  data.cohort = generate_cohort(scenario, lambda0, cohort_rng);
  RngStream validation_rng = make_stream(scenario.seed, rep_index, StreamPurpose::Validation);
  data.validation = generate_validation(scenario, data.cohort, validation_rng);
  RngStream boot_rng = make_stream(scenario.seed, rep_index, StreamPurpose::Bootstrap);
  data.bootstrap_seed = boot_rng();
  return data;
}

Analysis analyze(const Cohort& cohort, const ValidationSample& validation, Method method, double tau,
                 int bootstrap_replicates, std::uint64_t bootstrap_seed) {
  Analysis out;
  try {
    out.nuisance = solve_nuisance(validation);
  } catch (const EstimationError& e) {
    out.fit.message = e.what();
    return out;
  }
  FitOptions options;
  options.bootstrap_replicates = bootstrap_replicates;
  options.bootstrap_seed = bootstrap_seed;
  out.fit = fit_corrected(cohort, validation, *out.nuisance, method, tau, options);
  return out;
}

ReplicationResult run_replication(const ScenarioConfig& scenario, double lambda0, std::uint64_t rep_index) {
  ReplicationResult result;
  result.seed_tag = rep_index;
  const ReplicateData data = generate_replicate(scenario, lambda0, rep_index);
  const Analysis a = analyze(data.cohort.cohort, data.validation, scenario.method, scenario.tau(),
                             scenario.bootstrap_replicates, data.bootstrap_seed);
  if (!a.fit.converged) {
    result.message = a.fit.message;
    return result;
  }
  const Index p = a.fit.theta_hat.dim();
  const std::array<double, 2> est{a.fit.theta_hat.beta, a.fit.theta_hat.omega};
  const std::array<double, 2> truth{scenario.beta, scenario.omega};
  for (int j = 0; j < 2; ++j) {
    const double var = a.fit.omega_corr(p - 2 + j, p - 2 + j);
    result.se[j] = std::sqrt(var);
    result.ci_hits[j] = std::abs(est[j] - truth[j]) <= 1.96 * result.se[j];
  }
  result.theta_hat = a.fit.theta_hat;
  result.converged = true;
  return result;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

/// (1.4826 MAD)^2, consistent for the normal variance.
double mad_variance(const std::vector<double>& v) {
  const double med = median(v);
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::abs(x - med));
  const double s = 1.482602218505602 * median(dev);
  return s * s;
}

}  // namespace

ScenarioSummary summarize(const std::vector<ReplicationResult>& results, const ThetaParams& true_theta,
                          VarianceKind variance) {
  std::vector<double> beta, omega;
  int hits_beta = 0, hits_omega = 0;
  for (const auto& r : results) {
    if (!r.converged) continue;
    if (!r.theta_hat) throw std::invalid_argument("summarize: converged replicate without an estimate");
    beta.push_back(r.theta_hat->beta);
    omega.push_back(r.theta_hat->omega);
    hits_beta += r.ci_hits[0];
    hits_omega += r.ci_hits[1];
  }
  if (beta.empty()) throw EstimationError("summarize: no converged replicates");

  ScenarioSummary s;
  s.n_reps = static_cast<int>(results.size());
  s.n_converged = static_cast<int>(beta.size());
  const double nc = static_cast<double>(s.n_converged);
  auto var = [&](const std::vector<double>& v) {
    return variance == VarianceKind::Sample ? sample_variance(v) : mad_variance(v);
  };
  const double bias_beta = median(beta) - true_theta.beta;
  const double bias_omega = median(omega) - true_theta.omega;
  s.rel_bias_beta = bias_beta / true_theta.beta;
  s.rel_bias_omega = bias_omega / true_theta.omega;
  s.mse_beta = var(beta) + bias_beta * bias_beta;
  s.mse_omega = var(omega) + bias_omega * bias_omega;
  s.coverage_beta = hits_beta / nc;
  s.coverage_omega = hits_omega / nc;
  s.pctgud = nc / static_cast<double>(s.n_reps);
  return s;
}

std::vector<ReplicationResult> run_replications(const ScenarioConfig& scenario, double lambda0, int workers) {
  const auto reps = static_cast<std::size_t>(scenario.replications);
  std::vector<ReplicationResult> results(reps);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(reps);
  auto work = [&] {
    for (std::size_t i = next++; i < reps; i = next++) {
      try {
        results[i] = run_replication(scenario, lambda0, i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(workers, 1, static_cast<int>(std::max<std::size_t>(reps, 1)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::vector<GridEntry> run_grid(const std::vector<ScenarioConfig>& scenarios, const GridOptions& options) {
  using Key = std::tuple<double, double, double, double, double>;
  std::map<Key, double> lambda_cache;
  std::vector<GridEntry> grid;
  grid.reserve(scenarios.size());
  for (const auto& sc : scenarios) {
    GridEntry entry;
    entry.scenario = sc;
    try {
      sc.validate();
      const Key key{sc.target_incidence, sc.tau(), sc.beta, sc.omega, sc.t_star};
      auto it = lambda_cache.find(key);
      if (it == lambda_cache.end()) it = lambda_cache.emplace(key, calibrate_baseline_hazard(sc)).first;
      entry.replicates = run_replications(sc, it->second, options.workers);
      entry.summary = summarize(entry.replicates, sc.true_theta(), options.variance);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    grid.push_back(std::move(entry));
  }
  return grid;
}

}  // namespace segcox
