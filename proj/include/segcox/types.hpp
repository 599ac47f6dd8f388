#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace segcox {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when an estimation stage cannot produce a usable answer
/// (non-positive variance estimate, singular information, ...). The
/// replication harness counts these as non-converged replicates.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Design { EV_X, IV_X, EV_RM, IV_RM };
enum class Method { RC1, RC2, RR1, RR2 };

inline bool is_internal(Design d) { return d == Design::IV_X || d == Design::IV_RM; }
inline bool is_repeated(Design d) { return d == Design::EV_RM || d == Design::IV_RM; }
inline bool uses_induced_risk(Method m) { return m == Method::RR1 || m == Method::RR2; }

std::string_view to_string(Design d);
std::string_view to_string(Method m);
Design parse_design(std::string_view s);
Method parse_method(std::string_view s);

/// Cox coefficients (gamma for Z, beta below the changepoint, omega added
/// above it) together with the known changepoint tau.
struct ThetaParams {
  Vector gamma;
  double beta = 0.0;
  double omega = 0.0;
  double tau = 0.0;

  Index dim() const { return gamma.size() + 2; }

  /// Packed coefficient vector (gamma..., beta, omega); tau is not a coefficient.
  Vector coefficients() const {
    Vector c(dim());
    c.head(gamma.size()) = gamma;
    c(gamma.size()) = beta;
    c(gamma.size() + 1) = omega;
    return c;
  }

  static ThetaParams from_coefficients(const Vector& c, double tau) {
    ThetaParams t;
    t.gamma = c.head(c.size() - 2);
    t.beta = c(c.size() - 2);
    t.omega = c(c.size() - 1);
    t.tau = tau;
    return t;
  }
};

/// Error-model parameters phi = (mu_x, sigma2_x, sigma2_u).
struct NuisanceParams {
  double mu_x = 0.0;
  double sigma2_x = 1.0;
  double sigma2_u = 0.0;

  double reliability() const { return sigma2_x / (sigma2_x + sigma2_u); }

  Eigen::Vector3d as_vector() const { return {mu_x, sigma2_x, sigma2_u}; }
  static NuisanceParams from_vector(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

  bool valid() const { return sigma2_x > 0.0 && sigma2_u >= 0.0; }
};

struct SubjectRecord {
  double entry_time = 0.0;
  double event_time = 0.0;
  bool event = false;
  double w = 0.0;
  std::optional<double> x_true;
  Vector z;
};

struct Cohort {
  std::vector<SubjectRecord> subjects;
  double t_star = 0.0;

  Index size() const { return static_cast<Index>(subjects.size()); }
  Index z_dim() const { return subjects.empty() ? 0 : subjects.front().z.size(); }

  /// Throws std::invalid_argument if the cohort cannot support a partial likelihood.
  void validate() const;
};

/// One validation subject. X-designs carry x_true and a single surrogate;
/// RM designs carry k >= 2 surrogates and no x_true.
struct ValidationRecord {
  std::optional<double> x_true;
  std::vector<double> w;
  std::optional<Index> cohort_index;
};

struct ValidationSample {
  Design design = Design::EV_X;
  std::vector<ValidationRecord> records;

  Index size() const { return static_cast<Index>(records.size()); }

  /// Checks the per-design record invariants; `cohort_size` bounds internal indices.
  void validate(Index cohort_size) const;
};

}  // namespace segcox
