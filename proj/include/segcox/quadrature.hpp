#pragma once

#include "segcox/types.hpp"

namespace segcox {

/// Gauss-Hermite rule for expectations under the standard normal density:
/// E f(X) ~= sum_k weights(k) * f(nodes(k)), weights summing to one.
struct QuadratureRule {
  Vector nodes;
  Vector weights;
};

/// Golub-Welsch on the probabilists' Hermite recurrence.
QuadratureRule gauss_hermite_normal(int n_nodes);

template <typename F>
double expect_standard_normal(const QuadratureRule& rule, F&& f) {
  double acc = 0.0;
  for (Index k = 0; k < rule.nodes.size(); ++k) acc += rule.weights(k) * f(rule.nodes(k));
  return acc;
}

}  // namespace segcox
