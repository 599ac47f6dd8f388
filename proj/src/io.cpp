#include "segcox/io.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace segcox {

using ordered_json = nlohmann::ordered_json;

std::string format_raw(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::string format_fixed(double x, int decimals) {
  char buf[128];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, decimals);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view cell, std::string_view what) {
  double x = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, x);
  if (cell.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(x))
    throw SchemaError(std::string(what) + ": cannot parse '" + std::string(cell) + "' as a finite number");
  return x;
}

namespace {

std::vector<std::string> split_row(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    return std::nullopt;
  }
};

CsvTable read_csv(std::istream& in, std::string_view what) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (t.header.empty()) {
      t.header = split_row(line);
      continue;
    }
    auto cells = split_row(line);
    if (cells.size() != t.header.size())
      throw SchemaError(std::string(what) + " line " + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.lines.push_back(lineno);
  }
  if (t.header.empty()) throw SchemaError(std::string(what) + ": empty file");
  return t;
}

std::string where(std::string_view what, int line, std::string_view column) {
  return std::string(what) + " line " + std::to_string(line) + ", column " + std::string(column);
}

}  // namespace

std::vector<std::string> default_ids(Index n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i + 1));
  return ids;
}

void write_cohort_csv(std::ostream& out, const Cohort& cohort) {
  const Index q = cohort.z_dim();
  bool any_x = false;
  for (const auto& s : cohort.subjects) any_x = any_x || s.x_true.has_value();
  out << "id,event_time,event,w";
  if (any_x) out << ",x_true";
  for (Index j = 0; j < q; ++j) out << ",z" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    out << i + 1 << ',' << format_raw(s.event_time) << ',' << (s.event ? 1 : 0) << ',' << format_raw(s.w);
    if (any_x) out << ',' << (s.x_true ? format_raw(*s.x_true) : std::string());
    for (Index j = 0; j < q; ++j) out << ',' << format_raw(s.z(j));
    out << '\n';
  }
}

CohortTable read_cohort_csv(std::istream& in, std::optional<double> t_star) {
  constexpr std::string_view what = "cohort CSV";
  const CsvTable t = read_csv(in, what);
  for (std::string_view name : {"id", "event_time", "event", "w"})
    if (!t.column(name)) throw SchemaError(std::string(what) + ": missing required column '" + std::string(name) + "'");
  const std::size_t c_id = *t.column("id"), c_time = *t.column("event_time"), c_event = *t.column("event"),
                    c_w = *t.column("w");
  const auto c_x = t.column("x_true");
  std::vector<std::size_t> c_z;
  for (int j = 1;; ++j) {
    const auto c = t.column("z" + std::to_string(j));
    if (!c) break;
    c_z.push_back(*c);
  }

  CohortTable out;
  double max_time = 0.0;
  std::unordered_map<std::string, int> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.lines[r];
    SubjectRecord s;
    if (row[c_id].empty()) throw SchemaError(where(what, line, "id") + ": empty id");
    if (!seen.emplace(row[c_id], line).second) throw SchemaError(where(what, line, "id") + ": duplicate id '" + row[c_id] + "'");
    s.event_time = parse_double(row[c_time], where(what, line, "event_time"));
    if (s.event_time < 0.0) throw SchemaError(where(what, line, "event_time") + ": negative time");
    if (row[c_event] != "0" && row[c_event] != "1")
      throw SchemaError(where(what, line, "event") + ": must be 0 or 1");
    s.event = row[c_event] == "1";
    s.w = parse_double(row[c_w], where(what, line, "w"));
    if (c_x && !row[*c_x].empty()) s.x_true = parse_double(row[*c_x], where(what, line, "x_true"));
    s.z.resize(static_cast<Index>(c_z.size()));
    for (std::size_t j = 0; j < c_z.size(); ++j)
      s.z(static_cast<Index>(j)) = parse_double(row[c_z[j]], where(what, line, t.header[c_z[j]]));
    max_time = std::max(max_time, s.event_time);
    out.ids.push_back(row[c_id]);
    out.cohort.subjects.push_back(std::move(s));
  }
  out.cohort.t_star = t_star.value_or(max_time);
  try {
    out.cohort.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
  return out;
}

void write_validation_csv(std::ostream& out, const ValidationSample& sample, const std::vector<std::string>& cohort_ids) {
  const bool has_x = !is_repeated(sample.design);
  std::size_t k = 0;
  for (const auto& r : sample.records) k = std::max(k, r.w.size());
  out << "id,design";
  if (has_x) out << ",x_true";
  for (std::size_t j = 0; j < k; ++j) out << ",w_" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < sample.records.size(); ++i) {
    const auto& r = sample.records[i];
    if (r.cohort_index) {
      out << cohort_ids.at(static_cast<std::size_t>(*r.cohort_index));
    } else {
      out << 'v' << i + 1;
    }
    out << ',' << to_string(sample.design);
    if (has_x) out << ',' << (r.x_true ? format_raw(*r.x_true) : std::string());
    for (std::size_t j = 0; j < k; ++j) out << ',' << (j < r.w.size() ? format_raw(r.w[j]) : std::string());
    out << '\n';
  }
}

ValidationSample read_validation_csv(std::istream& in, Design design, const std::vector<std::string>& cohort_ids) {
  constexpr std::string_view what = "validation CSV";
  const CsvTable t = read_csv(in, what);
  for (std::string_view name : {"id", "design"})
    if (!t.column(name)) throw SchemaError(std::string(what) + ": missing required column '" + std::string(name) + "'");
  const std::size_t c_id = *t.column("id"), c_design = *t.column("design");
  const auto c_x = t.column("x_true");
  if (!is_repeated(design) && !c_x)
    throw SchemaError(std::string(what) + ": design " + std::string(to_string(design)) + " requires an x_true column");
  std::vector<std::size_t> c_w;
  for (int j = 1;; ++j) {
    const auto c = t.column("w_" + std::to_string(j));
    if (!c) break;
    c_w.push_back(*c);
  }
  if (c_w.empty()) throw SchemaError(std::string(what) + ": missing required column 'w_1'");

  std::unordered_map<std::string, Index> index_of;
  if (is_internal(design))
    for (std::size_t i = 0; i < cohort_ids.size(); ++i) index_of.emplace(cohort_ids[i], static_cast<Index>(i));

  ValidationSample sample;
  sample.design = design;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int line = t.lines[r];
    if (row[c_design] != to_string(design))
      throw SchemaError(where(what, line, "design") + ": '" + row[c_design] + "' does not match requested design " +
                        std::string(to_string(design)));
    ValidationRecord rec;
    if (is_internal(design)) {
      const auto it = index_of.find(row[c_id]);
      if (it == index_of.end())
        throw SchemaError(where(what, line, "id") + ": '" + row[c_id] + "' is not a cohort subject");
      rec.cohort_index = it->second;
    }
    if (c_x && !is_repeated(design)) {
      if (row[*c_x].empty()) throw SchemaError(where(what, line, "x_true") + ": missing value");
      rec.x_true = parse_double(row[*c_x], where(what, line, "x_true"));
    }
    bool gap = false;
    for (std::size_t j = 0; j < c_w.size(); ++j) {
      const std::string& cell = row[c_w[j]];
      if (cell.empty()) {
        gap = true;
        continue;
      }
      if (gap) throw SchemaError(where(what, line, t.header[c_w[j]]) + ": repeats must be left-aligned");
      rec.w.push_back(parse_double(cell, where(what, line, t.header[c_w[j]])));
    }
    sample.records.push_back(std::move(rec));
  }
  try {
    sample.validate(static_cast<Index>(cohort_ids.size()));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(std::string(what) + ": " + e.what());
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

/// Maps JSON pointers to the 1-based source line where each value (or its
/// key) starts. Assumes syntactically valid JSON.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text) : text_(text) { value(""); }

  int line_of(std::string pointer) const {
    while (true) {
      const auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      if (pointer.empty()) return 1;
      pointer.erase(pointer.rfind('/'));
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string s;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      if (pos_ < text_.size()) s.push_back(text_[pos_++]);
    }
    ++pos_;
    return s;
  }

  void value(const std::string& pointer) {
    skip_ws();
    lines_.emplace(pointer, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      while (true) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] == '}') break;
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        const int key_line = line_;
        const std::string child = pointer + "/" + string_token();
        lines_.emplace(child, key_line);
        skip_ws();
        ++pos_;  // ':'
        value(child);
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      int index = 0;
      while (true) {
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] == ']') break;
        if (text_[pos_] == ',') {
          ++pos_;
          continue;
        }
        value(pointer + "/" + std::to_string(index++));
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '}' && text_[pos_] != ']' &&
             !std::isspace(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class ConfigReader {
 public:
  explicit ConfigReader(std::string_view text) : index_(text) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    const int line = index_.line_of(pointer);
    throw ConfigError("line " + std::to_string(line) + ": " + (pointer.empty() ? "/" : pointer) + ": " + message, line);
  }

  double number(const nlohmann::json& j, const std::string& pointer) const {
    if (!j.is_number()) fail(pointer, "expected a number");
    return j.get<double>();
  }

  long long integer(const nlohmann::json& j, const std::string& pointer) const {
    if (!j.is_number_integer()) fail(pointer, "expected an integer");
    return j.get<long long>();
  }

  std::string string(const nlohmann::json& j, const std::string& pointer) const {
    if (!j.is_string()) fail(pointer, "expected a string");
    return j.get<std::string>();
  }

  /// A scalar or a non-empty array of scalars, flattened to one list.
  std::vector<nlohmann::json> list(const nlohmann::json& j, const std::string& pointer) const {
    if (!j.is_array()) return {j};
    if (j.empty()) fail(pointer, "list must not be empty");
    return {j.begin(), j.end()};
  }

 private:
  LineIndex index_;
};

}  // namespace

SimulationConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed_override) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
    throw ConfigError("line " + std::to_string(line) + ": invalid JSON: " + e.what(), static_cast<int>(line));
  }
  const ConfigReader rd(text);
  if (!doc.is_object()) rd.fail("", "top level must be an object");

  SimulationConfig cfg;
  ScenarioConfig defaults;
  static const std::vector<std::string> top_keys = {"seed", "replications", "bootstrap_replicates", "variance",
                                                    "scenarios"};
  for (const auto& [key, val] : doc.items())
    if (std::find(top_keys.begin(), top_keys.end(), key) == top_keys.end()) rd.fail("/" + key, "unknown key");

  if (doc.contains("seed")) {
    const long long s = rd.integer(doc["seed"], "/seed");
    if (s < 0) rd.fail("/seed", "must be non-negative");
    cfg.root_seed = static_cast<std::uint64_t>(s);
  }
  if (seed_override) cfg.root_seed = *seed_override;
  if (doc.contains("replications")) defaults.replications = static_cast<int>(rd.integer(doc["replications"], "/replications"));
  if (doc.contains("bootstrap_replicates"))
    defaults.bootstrap_replicates = static_cast<int>(rd.integer(doc["bootstrap_replicates"], "/bootstrap_replicates"));
  if (doc.contains("variance")) {
    const std::string v = rd.string(doc["variance"], "/variance");
    if (v == "sample") {
      cfg.variance = VarianceKind::Sample;
    } else if (v == "mad") {
      cfg.variance = VarianceKind::MedianAbsoluteDeviation;
    } else {
      rd.fail("/variance", "must be \"sample\" or \"mad\"");
    }
  }
  defaults.seed = cfg.root_seed;

  if (!doc.contains("scenarios") || !doc["scenarios"].is_array() || doc["scenarios"].empty())
    rd.fail(doc.contains("scenarios") ? "/scenarios" : "", "no scenarios");

  static const std::vector<std::string> scenario_keys = {
      "disease", "n", "incidence", "rho", "tau_quantile", "method", "design", "m_valid", "k_repeats",
      "t_star", "beta", "omega", "replications", "bootstrap_replicates"};

  const auto& scenarios = doc["scenarios"];
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const std::string base = "/scenarios/" + std::to_string(i);
    const auto& s = scenarios[i];
    if (!s.is_object()) rd.fail(base, "scenario must be an object");
    for (const auto& [key, val] : s.items())
      if (std::find(scenario_keys.begin(), scenario_keys.end(), key) == scenario_keys.end())
        rd.fail(base + "/" + key, "unknown key");

    ScenarioConfig proto = defaults;
    if (s.contains("disease")) {
      proto.disease = rd.string(s["disease"], base + "/disease");
      if (proto.disease == "common") {
        proto.n = 3000;
        proto.target_incidence = 0.5;
      } else if (proto.disease == "rare") {
        proto.n = 50000;
        proto.target_incidence = 0.03;
      } else {
        rd.fail(base + "/disease", "must be \"common\" or \"rare\"");
      }
    }
    if (s.contains("n")) proto.n = rd.integer(s["n"], base + "/n");
    if (s.contains("incidence")) proto.target_incidence = rd.number(s["incidence"], base + "/incidence");
    if (s.contains("m_valid")) proto.m_valid = rd.integer(s["m_valid"], base + "/m_valid");
    if (s.contains("k_repeats")) proto.k_repeats = static_cast<int>(rd.integer(s["k_repeats"], base + "/k_repeats"));
    if (s.contains("t_star")) proto.t_star = rd.number(s["t_star"], base + "/t_star");
    if (s.contains("beta")) proto.beta = rd.number(s["beta"], base + "/beta");
    if (s.contains("omega")) proto.omega = rd.number(s["omega"], base + "/omega");
    if (s.contains("replications"))
      proto.replications = static_cast<int>(rd.integer(s["replications"], base + "/replications"));
    if (s.contains("bootstrap_replicates"))
      proto.bootstrap_replicates = static_cast<int>(rd.integer(s["bootstrap_replicates"], base + "/bootstrap_replicates"));

    auto axis = [&](const char* key, const nlohmann::json& fallback) {
      return s.contains(key) ? rd.list(s[key], base + "/" + key) : std::vector<nlohmann::json>{fallback};
    };
    const auto rhos = axis("rho", proto.rho_xw);
    const auto taus = axis("tau_quantile", proto.tau_quantile);
    const auto methods = axis("method", std::string(to_string(proto.method)));
    const auto designs = axis("design", std::string(to_string(proto.design)));
    auto item = [&](const char* key, std::size_t j) {
      const std::string p = base + "/" + key;
      return s.contains(key) && s[key].is_array() ? p + "/" + std::to_string(j) : p;
    };

    for (std::size_t a = 0; a < rhos.size(); ++a) {
      const double rho = rd.number(rhos[a], item("rho", a));
      if (!(rho > 0.0 && rho < 1.0)) rd.fail(item("rho", a), "must lie in (0, 1)");
      for (std::size_t b = 0; b < taus.size(); ++b) {
        const double tq = rd.number(taus[b], item("tau_quantile", b));
        for (std::size_t c = 0; c < methods.size(); ++c) {
          Method method{};
          try {
            method = parse_method(rd.string(methods[c], item("method", c)));
          } catch (const std::invalid_argument& e) {
            rd.fail(item("method", c), e.what());
          }
          for (std::size_t d = 0; d < designs.size(); ++d) {
            Design design{};
            try {
              design = parse_design(rd.string(designs[d], item("design", d)));
            } catch (const std::invalid_argument& e) {
              rd.fail(item("design", d), e.what());
            }
            ScenarioConfig sc = proto;
            sc.rho_xw = rho;
            sc.tau_quantile = tq;
            sc.method = method;
            sc.design = design;
            try {
              sc.validate();
            } catch (const std::invalid_argument& e) {
              const std::string msg = e.what();
              std::string field = msg.substr(0, msg.find(':'));
              if (field == "rho") field = item("rho", a).substr(base.size() + 1);
              if (field == "tau_quantile") field = item("tau_quantile", b).substr(base.size() + 1);
              if (field == "bootstrap") field = "bootstrap_replicates";
              rd.fail(base + "/" + field, msg);
            }
            cfg.scenarios.push_back(sc);
          }
        }
      }
    }
  }
  return cfg;
}

namespace {

ordered_json scenario_json(const ScenarioConfig& sc) {
  ordered_json j;
  j["disease"] = sc.disease;
  j["n"] = sc.n;
  j["incidence"] = sc.target_incidence;
  j["rho"] = sc.rho_xw;
  j["tau_quantile"] = sc.tau_quantile;
  j["tau"] = sc.tau();
  j["method"] = std::string(to_string(sc.method));
  j["design"] = std::string(to_string(sc.design));
  j["m_valid"] = sc.m_valid;
  j["k_repeats"] = sc.k_repeats;
  j["t_star"] = sc.t_star;
  j["beta"] = sc.beta;
  j["omega"] = sc.omega;
  j["replications"] = sc.replications;
  j["bootstrap_replicates"] = sc.bootstrap_replicates;
  j["seed"] = sc.seed;
  return j;
}

}  // namespace

std::string resolved_config_json(const SimulationConfig& config) {
  ordered_json j;
  j["seed"] = config.root_seed;
  j["variance"] = config.variance == VarianceKind::Sample ? "sample" : "mad";
  j["scenarios"] = ordered_json::array();
  for (const auto& sc : config.scenarios) j["scenarios"].push_back(scenario_json(sc));
  return j.dump(2) + "\n";
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256_hex: digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string scenario_label(const ScenarioConfig& sc) {
  return sc.disease + " rho=" + format_raw(sc.rho_xw) + " tau_q=" + format_raw(sc.tau_quantile) + " " +
         std::string(to_string(sc.method)) + " " + std::string(to_string(sc.design));
}

std::string summary_csv(const std::vector<GridEntry>& grid) {
  std::ostringstream out;
  out << "disease,rho,tau_quantile,method,design,rel_bias_beta,rel_bias_omega,mse_beta,mse_omega,cov_beta,"
         "cov_omega,pctgud,n_reps,n_converged\n";
  auto f4 = [](double x) { return std::isfinite(x) ? format_fixed(x, 4) : std::string("NA"); };
  for (const auto& e : grid) {
    const auto& sc = e.scenario;
    out << sc.disease << ',' << f4(sc.rho_xw) << ',' << f4(sc.tau_quantile) << ',' << to_string(sc.method) << ','
        << to_string(sc.design) << ',';
    if (e.summary) {
      const auto& s = *e.summary;
      out << f4(s.rel_bias_beta) << ',' << f4(s.rel_bias_omega) << ',' << f4(s.mse_beta) << ',' << f4(s.mse_omega)
          << ',' << f4(s.coverage_beta) << ',' << f4(s.coverage_omega) << ',' << f4(s.pctgud) << ',' << s.n_reps
          << ',' << s.n_converged << '\n';
    } else {
      int converged = 0;
      for (const auto& r : e.replicates) converged += r.converged;
      out << "NA,NA,NA,NA,NA,NA,";
      if (e.replicates.empty()) {
        out << "NA";
      } else {
        out << f4(static_cast<double>(converged) / static_cast<double>(e.replicates.size()));
      }
      out << ',' << e.replicates.size() << ',' << converged << '\n';
    }
  }
  return out.str();
}

std::string replicates_csv(const std::vector<GridEntry>& grid) {
  std::ostringstream out;
  out << "scenario,rep,converged,beta,omega,se_beta,se_omega,ci_beta,ci_omega,message\n";
  for (std::size_t s = 0; s < grid.size(); ++s) {
    for (const auto& r : grid[s].replicates) {
      out << s << ',' << r.seed_tag << ',' << (r.converged ? 1 : 0) << ',';
      if (r.converged) {
        out << format_raw(r.theta_hat->beta) << ',' << format_raw(r.theta_hat->omega) << ',' << format_raw(r.se[0])
            << ',' << format_raw(r.se[1]) << ',' << r.ci_hits[0] << ',' << r.ci_hits[1] << ',';
      } else {
        out << ",,,,,,";
      }
      std::string msg = r.message;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << msg << '\n';
    }
  }
  return out.str();
}

std::string manifest_json(const ManifestInfo& info, const std::vector<GridEntry>& grid) {
  ordered_json j;
  j["tool_version"] = std::string(kToolVersion);
  j["config_digest"] = info.config_digest;
  j["root_seed"] = info.root_seed;
  j["started_at"] = info.started_at;
  j["finished_at"] = info.finished_at;
  j["workers"] = info.workers;
  ordered_json outputs = ordered_json::object();
  for (const auto& [role, path] : info.outputs) outputs[role] = path;
  j["outputs"] = outputs;
  j["scenarios"] = ordered_json::array();
  for (std::size_t s = 0; s < grid.size(); ++s) {
    ordered_json e;
    e["index"] = s;
    e["label"] = scenario_label(grid[s].scenario);
    e["status"] = grid[s].summary ? "ok" : "failed";
    if (!grid[s].error.empty()) e["error"] = grid[s].error;
    e["summary_row"] = s + 1;
    j["scenarios"].push_back(e);
  }
  return j.dump(2) + "\n";
}

namespace {

ordered_json matrix_json(const Matrix& m) {
  ordered_json rows = ordered_json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string fit_json(const Analysis& analysis, const Cohort& cohort, Method method, Design design, double tau) {
  const FitResult& fit = analysis.fit;
  ordered_json j;
  j["method"] = std::string(to_string(method));
  j["design"] = std::string(to_string(design));
  j["tau"] = tau;
  j["n"] = cohort.size();
  int events = 0;
  for (const auto& s : cohort.subjects) events += s.event;
  j["events"] = events;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["message"] = fit.message;

  const Index q = fit.theta_hat.gamma.size();
  std::vector<std::string> names;
  for (Index k = 0; k < q; ++k) names.push_back("gamma" + std::to_string(k + 1));
  names.push_back("beta");
  names.push_back("omega");
  const Vector coef = fit.theta_hat.coefficients();
  ordered_json theta, se, ci;
  for (Index k = 0; k < coef.size(); ++k) {
    const auto& name = names[static_cast<std::size_t>(k)];
    theta[name] = coef(k);
    if (fit.converged && fit.omega_corr.size() > 0) {
      const double s = std::sqrt(fit.omega_corr(k, k));
      se[name] = s;
      ci[name] = {coef(k) - 1.96 * s, coef(k) + 1.96 * s};
    }
  }
  j["theta"] = theta;
  if (fit.converged) {
    j["se"] = se;
    j["ci95"] = ci;
    j["covariance"] = matrix_json(fit.omega_corr);
    j["naive_covariance"] = matrix_json(fit.omega_naive);
  }
  if (fit.score.size() > 0) j["score_max_abs"] = fit.score.lpNorm<Eigen::Infinity>();
  if (fit.rr1_theta && fit.bootstrap_bias.size() == coef.size()) {
    j["bootstrap"] = {{"rr1_beta", fit.rr1_theta->beta},
                      {"rr1_omega", fit.rr1_theta->omega},
                      {"bias_beta", fit.bootstrap_bias(q)},
                      {"bias_omega", fit.bootstrap_bias(q + 1)},
                      {"failures", fit.bootstrap_failures}};
  }
  if (analysis.nuisance) {
    const auto& nu = *analysis.nuisance;
    j["phi"] = {{"mu_x", nu.phi.mu_x}, {"sigma2_x", nu.phi.sigma2_x}, {"sigma2_u", nu.phi.sigma2_u}};
    j["cov_phi"] = matrix_json(nu.cov_phi);
    j["m"] = nu.m;
  }
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace segcox
