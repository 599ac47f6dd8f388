#include "segcox/quadrature.hpp"
#include "segcox/normal.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>

namespace segcox {

QuadratureRule gauss_hermite_normal(int n_nodes) {
  if (n_nodes < 1) throw std::invalid_argument("gauss_hermite_normal: need at least one node");
  Matrix jacobi = Matrix::Zero(n_nodes, n_nodes);
  for (int k = 1; k < n_nodes; ++k) {
    jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    jacobi(k - 1, k) = jacobi(k, k - 1);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(jacobi);
  QuadratureRule rule;
  rule.nodes = solver.eigenvalues();
  rule.weights = solver.eigenvectors().row(0).transpose().array().square();
  rule.weights /= rule.weights.sum();
  return rule;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace segcox
