#pragma once

#include "segcox/cox.hpp"
#include "segcox/datagen.hpp"
#include "segcox/nuisance.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace segcox {

struct ReplicationResult {
  std::optional<ThetaParams> theta_hat;  // absent when the replicate did not converge
  std::array<bool, 2> ci_hits{};         // (beta, omega); meaningful only when converged
  std::array<double, 2> se{};
  bool converged = false;
  std::uint64_t seed_tag = 0;  // replication index
  std::string message;
};

struct ScenarioSummary {
  double rel_bias_beta = 0.0;
  double rel_bias_omega = 0.0;
  double mse_beta = 0.0;
  double mse_omega = 0.0;
  double coverage_beta = 0.0;
  double coverage_omega = 0.0;
  double pctgud = 0.0;
  int n_converged = 0;
  int n_reps = 0;
};

enum class VarianceKind { Sample, MedianAbsoluteDeviation };

/// Everything one replicate analyses, drawn from its own streams.
struct ReplicateData {
  GeneratedCohort cohort;
  ValidationSample validation;
  std::uint64_t bootstrap_seed = 0;
};

ReplicateData generate_replicate(const ScenarioConfig& scenario, double lambda0, std::uint64_t rep_index);

/// phi-hat and the corrected fit for one dataset.
struct Analysis {
  std::optional<NuisanceEstimate> nuisance;
  FitResult fit;
};

Analysis analyze(const Cohort& cohort, const ValidationSample& validation, Method method, double tau,
                 int bootstrap_replicates, std::uint64_t bootstrap_seed);

ReplicationResult run_replication(const ScenarioConfig& scenario, double lambda0, std::uint64_t rep_index);

/// Throws EstimationError when no replicate converged.
ScenarioSummary summarize(const std::vector<ReplicationResult>& results, const ThetaParams& true_theta,
                          VarianceKind variance = VarianceKind::Sample);

/// Replications of one scenario spread over `workers` threads; results are
/// indexed by replication, so the output does not depend on scheduling.
std::vector<ReplicationResult> run_replications(const ScenarioConfig& scenario, double lambda0, int workers);

struct GridEntry {
  ScenarioConfig scenario;
  std::optional<ScenarioSummary> summary;
  std::string error;  // set when the scenario failed as a whole
  std::vector<ReplicationResult> replicates;
};

struct GridOptions {
  int workers = 1;
  VarianceKind variance = VarianceKind::Sample;
};

/// Baseline hazards are calibrated once per (incidence, tau, beta, omega,
/// t_star) and shared across the design/method axes.
std::vector<GridEntry> run_grid(const std::vector<ScenarioConfig>& scenarios, const GridOptions& options = {});

}  // namespace segcox
