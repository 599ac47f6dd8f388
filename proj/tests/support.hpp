#pragma once

#include "segcox/harness.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <random>

namespace segcox::testing {

inline bool rel_close(double a, double b, double rel, double abs_floor = 0.0) {
  return std::abs(a - b) <= std::max(rel * std::max(std::abs(a), std::abs(b)), abs_floor);
}

/// Cohort from explicit (time, event, w) triples.
inline Cohort make_cohort(const std::vector<double>& time, const std::vector<int>& event, const std::vector<double>& w,
                          double t_star = 10.0) {
  Cohort c;
  c.t_star = t_star;
  for (std::size_t i = 0; i < time.size(); ++i) {
    SubjectRecord s;
    s.event_time = time[i];
    s.event = event[i] != 0;
    s.w = w[i];
    c.subjects.push_back(s);
  }
  return c;
}

/// Small simulated scenario with its calibrated hazard.
struct Simulated {
  ScenarioConfig scenario;
  double lambda0 = 0.0;
  ReplicateData data;
};

inline Simulated simulate(ScenarioConfig sc, std::uint64_t rep = 0) {
  Simulated s;
  s.scenario = sc;
  s.lambda0 = calibrate_baseline_hazard(sc);
  s.data = generate_replicate(sc, s.lambda0, rep);
  return s;
}

}  // namespace segcox::testing
