#include "segcox/types.hpp"

#include <cmath>

namespace segcox {

std::string_view to_string(Design d) {
  switch (d) {
    case Design::EV_X: return "EV_X";
    case Design::IV_X: return "IV_X";
    case Design::EV_RM: return "EV_RM";
    case Design::IV_RM: return "IV_RM";
  }
  return "?";
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::RC1: return "RC1";
    case Method::RC2: return "RC2";
    case Method::RR1: return "RR1";
    case Method::RR2: return "RR2";
  }
  return "?";
}

Design parse_design(std::string_view s) {
  for (Design d : {Design::EV_X, Design::IV_X, Design::EV_RM, Design::IV_RM})
    if (s == to_string(d)) return d;
  throw std::invalid_argument("unknown design '" + std::string(s) +
                              "' (expected EV_X, IV_X, EV_RM or IV_RM)");
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::RC1, Method::RC2, Method::RR1, Method::RR2})
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + std::string(s) +
                              "' (expected RC1, RC2, RR1 or RR2)");
}

void Cohort::validate() const {
  if (subjects.empty()) throw std::invalid_argument("cohort is empty");
  const Index q = z_dim();
  bool any_event = false;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    if (!std::isfinite(s.event_time) || s.event_time < 0.0 || s.event_time > t_star)
      throw std::invalid_argument("subject " + std::to_string(i) + ": event_time outside [0, t_star]");
    if (!std::isfinite(s.w)) throw std::invalid_argument("subject " + std::to_string(i) + ": w not finite");
    if (s.z.size() != q) throw std::invalid_argument("subject " + std::to_string(i) + ": z length mismatch");
    any_event = any_event || s.event;
  }
  if (!any_event) throw std::invalid_argument("cohort has no events");
}

void ValidationSample::validate(Index cohort_size) const {
  if (records.empty()) throw std::invalid_argument("validation sample is empty");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const std::string where = "validation record " + std::to_string(i) + ": ";
    if (is_repeated(design)) {
      if (r.w.size() < 2) throw std::invalid_argument(where + "repeated-measures record needs k >= 2");
    } else {
      if (!r.x_true) throw std::invalid_argument(where + "x_true missing for " + std::string(to_string(design)));
      if (r.w.size() != 1) throw std::invalid_argument(where + "X-design record needs exactly one w");
    }
    if (is_internal(design)) {
      if (!r.cohort_index || *r.cohort_index < 0 || *r.cohort_index >= cohort_size)
        throw std::invalid_argument(where + "internal cohort index out of range");
    } else if (r.cohort_index) {
      throw std::invalid_argument(where + "external designs carry no cohort index");
    }
  }
}

}  // namespace segcox
