#pragma once

#include "segcox/datagen.hpp"
#include "segcox/harness.hpp"

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace segcox {

/// Malformed CSV input: missing columns, unparsable cells, rows that break
/// the design's record invariants.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, located at a line of the source document.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line)
      : std::runtime_error(message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Shortest exact decimal form capped at 17 significant digits; parses back
/// to the same double.
std::string format_raw(double x);
/// Fixed notation with `decimals` digits, "." separator in every locale.
std::string format_fixed(double x, int decimals);
double parse_double(std::string_view cell, std::string_view what);

struct CohortTable {
  Cohort cohort;
  std::vector<std::string> ids;
};

/// Columns: id,event_time,event,w[,x_true][,z1..zq]; t_star is the largest
/// follow-up time unless given.
void write_cohort_csv(std::ostream& out, const Cohort& cohort);
CohortTable read_cohort_csv(std::istream& in, std::optional<double> t_star = std::nullopt);

/// Columns: id,design[,x_true],w_1..w_k. For internal designs `id` names a
/// cohort subject; rows with fewer repeats leave trailing w cells empty.
void write_validation_csv(std::ostream& out, const ValidationSample& sample, const std::vector<std::string>& cohort_ids);
ValidationSample read_validation_csv(std::istream& in, Design design, const std::vector<std::string>& cohort_ids);

/// 1-based cohort ids "1".."n" as written by write_cohort_csv.
std::vector<std::string> default_ids(Index n);

struct SimulationConfig {
  std::uint64_t root_seed = 20200101;
  VarianceKind variance = VarianceKind::Sample;
  std::vector<ScenarioConfig> scenarios;
};

/// Parses and expands the "scenarios" array (lists in rho, tau_quantile,
/// method and design form a cross product). `seed_override` replaces the
/// root seed. Throws ConfigError.
SimulationConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Resolved (fully expanded) configuration as pretty JSON ending in "\n".
std::string resolved_config_json(const SimulationConfig& config);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

std::string summary_csv(const std::vector<GridEntry>& grid);
std::string replicates_csv(const std::vector<GridEntry>& grid);

struct ManifestInfo {
  std::string config_digest;
  std::uint64_t root_seed = 0;
  std::string started_at;
  std::string finished_at;
  int workers = 1;
  std::vector<std::pair<std::string, std::string>> outputs;  // role -> path
};
std::string manifest_json(const ManifestInfo& info, const std::vector<GridEntry>& grid);

std::string fit_json(const Analysis& analysis, const Cohort& cohort, Method method, Design design, double tau);

/// ISO-8601 UTC timestamp.
std::string utc_timestamp();

std::string scenario_label(const ScenarioConfig& sc);

inline constexpr std::string_view kToolVersion = "1.0.0";

}  // namespace segcox
