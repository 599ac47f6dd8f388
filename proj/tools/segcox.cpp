#include "segcox/harness.hpp"
#include "segcox/io.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace segcox;

namespace {

enum Exit { kOk = 0, kConfig = 1, kPartial = 2, kEstimation = 3 };

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::optional<std::uint64_t> seed_from_env() {
  const char* env = std::getenv("SEGCOX_SEED");
  if (!env || !*env) return std::nullopt;
  std::uint64_t seed = 0;
  const std::string_view s(env);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("SEGCOX_SEED must be a non-negative integer, got '" + std::string(s) + "'");
  return seed;
}

SimulationConfig load_config(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text, seed_from_env());
  } catch (const ConfigError& e) {
    throw std::invalid_argument(path + ":" + std::to_string(e.line()) + ": " + e.what());
  }
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, int workers, bool dump) {
  SimulationConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  try {
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  const fs::path dir(out_dir);
  ManifestInfo info;
  info.started_at = utc_timestamp();
  info.root_seed = cfg.root_seed;
  info.workers = workers;
  const std::string resolved = resolved_config_json(cfg);
  info.config_digest = sha256_hex(resolved);

  const auto grid = run_grid(cfg.scenarios, {workers, cfg.variance});

  write_file(dir / "resolved_config.json", resolved);
  write_file(dir / "summary.csv", summary_csv(grid));
  info.outputs = {{"resolved_config", "resolved_config.json"}, {"summary", "summary.csv"}};
  if (dump) {
    write_file(dir / "replicates.csv", replicates_csv(grid));
    info.outputs.emplace_back("replicates", "replicates.csv");
  }
  info.finished_at = utc_timestamp();
  write_file(dir / "manifest.json", manifest_json(info, grid));

  int failed = 0;
  for (const auto& e : grid) {
    if (e.summary) continue;
    ++failed;
    std::cerr << "scenario failed: " << scenario_label(e.scenario) << ": " << e.error << '\n';
  }
  std::cout << "wrote " << grid.size() << " scenario rows to " << (dir / "summary.csv").string() << '\n';
  return failed > 0 ? kPartial : kOk;
}

struct FitArgs {
  std::string cohort, validation, method, design, tau, out;
  int bootstrap = 100;
  std::uint64_t seed = 0;
};

int cmd_fit(const FitArgs& a) {
  Method method{};
  Design design{};
  double tau = 0.0;
  CohortTable table;
  ValidationSample validation;
  try {
    method = parse_method(a.method);
    design = parse_design(a.design);
    tau = parse_double(a.tau, "--tau");
    {
      std::ifstream in(a.cohort);
      if (!in) throw SchemaError("cannot open " + a.cohort);
      table = read_cohort_csv(in);
    }
    {
      std::ifstream in(a.validation);
      if (!in) throw SchemaError("cannot open " + a.validation);
      validation = read_validation_csv(in, design, table.ids);
    }
    if (table.cohort.z_dim() > 0)
      throw SchemaError("cohort CSV: z columns are not supported by the corrected estimators");
    if (method == Method::RR2 && a.bootstrap < 50) throw std::invalid_argument("--bootstrap must be >= 50 for RR2");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }

  const Analysis result = analyze(table.cohort, validation, method, tau, a.bootstrap, a.seed);
  try {
    write_file(a.out, fit_json(result, table.cohort, method, design, tau));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  if (!result.fit.converged) {
    std::cerr << "estimation failed: " << result.fit.message << '\n';
    return kEstimation;
  }
  return kOk;
}

int cmd_generate(const std::string& config_path, std::size_t scenario, std::uint64_t rep, const std::string& out_dir) {
  SimulationConfig cfg;
  try {
    cfg = load_config(config_path);
    if (scenario >= cfg.scenarios.size())
      throw std::invalid_argument("--scenario " + std::to_string(scenario) + " out of range (" +
                                  std::to_string(cfg.scenarios.size()) + " scenarios)");
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  const ScenarioConfig& sc = cfg.scenarios[scenario];
  const double lambda0 = calibrate_baseline_hazard(sc);
  const ReplicateData data = generate_replicate(sc, lambda0, rep);
  const auto ids = default_ids(data.cohort.cohort.size());
  const fs::path dir(out_dir);
  {
    std::ostringstream c, v;
    write_cohort_csv(c, data.cohort.cohort);
    write_validation_csv(v, data.validation, ids);
    write_file(dir / "cohort.csv", c.str());
    write_file(dir / "validation.csv", v.str());
  }
  const ReplicationResult r = run_replication(sc, lambda0, rep);
  nlohmann::ordered_json j;
  j["scenario"] = scenario_label(sc);
  j["rep"] = rep;
  j["method"] = std::string(to_string(sc.method));
  j["design"] = std::string(to_string(sc.design));
  j["tau"] = format_raw(sc.tau());
  j["bootstrap_replicates"] = sc.bootstrap_replicates;
  j["bootstrap_seed"] = data.bootstrap_seed;
  j["lambda0"] = lambda0;
  j["converged"] = r.converged;
  if (r.converged) {
    j["beta"] = r.theta_hat->beta;
    j["omega"] = r.theta_hat->omega;
    j["se_beta"] = r.se[0];
    j["se_omega"] = r.se[1];
  } else {
    j["message"] = r.message;
  }
  write_file(dir / "replicate.json", j.dump(2) + "\n");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmented Cox regression with covariate measurement-error correction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  std::string config_path, out_dir;
  int workers = 1;
  bool dump = false;
  auto* sim = app.add_subcommand("simulate", "Run a replication grid and write summary tables");
  sim->add_option("--config", config_path, "Scenario grid JSON")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--workers", workers, "Worker threads for replications")->check(CLI::PositiveNumber);
  sim->add_flag("--dump-replicates", dump, "Also write replicates.csv");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit one dataset with a corrected estimator");
  fit->add_option("--cohort", fa.cohort, "Cohort CSV")->required();
  fit->add_option("--validation", fa.validation, "Validation CSV")->required();
  fit->add_option("--method", fa.method, "RC1, RC2, RR1 or RR2")->required();
  fit->add_option("--design", fa.design, "EV_X, IV_X, EV_RM or IV_RM")->required();
  fit->add_option("--tau", fa.tau, "Known changepoint on the X scale")->required();
  fit->add_option("--out", fa.out, "Output JSON path")->required();
  fit->add_option("--bootstrap", fa.bootstrap, "Bootstrap replicates for RR2");
  fit->add_option("--seed", fa.seed, "Bootstrap seed for RR2");

  std::size_t scenario = 0;
  std::uint64_t rep = 0;
  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("generate", "Write one simulated replicate and its harness estimate");
  gen->add_option("--config", gen_config, "Scenario grid JSON")->required();
  gen->add_option("--scenario", scenario, "Index into the expanded scenario list");
  gen->add_option("--rep", rep, "Replication index");
  gen->add_option("--out", gen_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*sim) return cmd_simulate(config_path, out_dir, workers, dump);
    if (*fit) return cmd_fit(fa);
    if (*gen) return cmd_generate(gen_config, scenario, rep, gen_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kConfig;
}
