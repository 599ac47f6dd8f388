#include "segcox/nuisance.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <numeric>

namespace segcox {

namespace {

double finite_sample_factor(Index m) { return static_cast<double>(m - 1) / static_cast<double>(m); }

double mean_of(const std::vector<double>& w) {
  return std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
}

}  // namespace

Vector3 psi_x(double x, double w, const NuisanceParams& phi, Index m) {
  const double c = finite_sample_factor(m);
  const double dx = x - phi.mu_x;
  const double u = w - x;
  return {dx, dx * dx - phi.sigma2_x * c, u * u - phi.sigma2_u * c};
}

Matrix3 psi_x_jacobian(double x, double /*w*/, const NuisanceParams& phi, Index m) {
  const double c = finite_sample_factor(m);
  Matrix3 j = Matrix3::Zero();
  j(0, 0) = -1.0;
  j(1, 0) = -2.0 * (x - phi.mu_x);
  j(1, 1) = -c;
  j(2, 2) = -c;
  return j;
}

Vector3 psi_rm(const std::vector<double>& w, const NuisanceParams& phi, Index m, Index sum_k) {
  if (w.size() < 2) throw std::invalid_argument("psi_rm: need at least two repeats");
  const double k = static_cast<double>(w.size());
  const double wbar = mean_of(w);
  double within = 0.0;
  for (double wj : w) within += (wj - wbar) * (wj - wbar);
  const double d = wbar - phi.mu_x;
  return {k * d,
          k * d * d - phi.sigma2_u * finite_sample_factor(m) -
              (k - k * k / static_cast<double>(sum_k)) * phi.sigma2_x,
          within - (k - 1.0) * phi.sigma2_u};
}

Matrix3 psi_rm_jacobian(const std::vector<double>& w, const NuisanceParams& phi, Index m, Index sum_k) {
  if (w.size() < 2) throw std::invalid_argument("psi_rm: need at least two repeats");
  const double k = static_cast<double>(w.size());
  const double d = mean_of(w) - phi.mu_x;
  Matrix3 j = Matrix3::Zero();
  j(0, 0) = -k;
  j(1, 0) = -2.0 * k * d;
  j(1, 1) = -(k - k * k / static_cast<double>(sum_k));
  j(1, 2) = -finite_sample_factor(m);
  j(2, 2) = -(k - 1.0);
  return j;
}

NuisanceEstimate solve_nuisance(const ValidationSample& sample) {
  const Index m = sample.size();
  if (m < 2) throw EstimationError("solve_nuisance: need at least two validation subjects");

  NuisanceEstimate est;
  est.design = sample.design;
  est.m = m;
  est.per_subject_psi.resize(m, 3);
  est.cohort_index.reserve(static_cast<std::size_t>(m));
  for (const auto& r : sample.records) est.cohort_index.push_back(r.cohort_index);

  const double md = static_cast<double>(m);
  if (!is_repeated(sample.design)) {
    double mean = 0.0;
    for (const auto& r : sample.records) {
      if (!r.x_true || r.w.size() != 1)
        throw std::invalid_argument("solve_nuisance: X-design record needs x_true and one w");
      mean += *r.x_true;
    }
    mean /= md;
    double ss_x = 0.0, ss_u = 0.0;
    for (const auto& r : sample.records) {
      const double dx = *r.x_true - mean;
      const double u = r.w.front() - *r.x_true;
      ss_x += dx * dx;
      ss_u += u * u;
    }
    est.phi = {mean, ss_x / (md - 1.0), ss_u / (md - 1.0)};
    for (Index i = 0; i < m; ++i) {
      const auto& r = sample.records[static_cast<std::size_t>(i)];
      est.per_subject_psi.row(i) = psi_x(*r.x_true, r.w.front(), est.phi, m).transpose();
      est.jacobian_A += psi_x_jacobian(*r.x_true, r.w.front(), est.phi, m);
    }
  } else {
    Index sum_k = 0;
    double grand = 0.0, sum_k2 = 0.0, within = 0.0, dof_within = 0.0;
    for (const auto& r : sample.records) {
      if (r.w.size() < 2) throw std::invalid_argument("solve_nuisance: RM record needs k >= 2");
      const double k = static_cast<double>(r.w.size());
      const double wbar = mean_of(r.w);
      sum_k += static_cast<Index>(r.w.size());
      sum_k2 += k * k;
      grand += k * wbar;
      for (double wj : r.w) within += (wj - wbar) * (wj - wbar);
      dof_within += k - 1.0;
    }
    const double K = static_cast<double>(sum_k);
    const double mu = grand / K;
    const double s2u = within / dof_within;
    double between = 0.0;
    for (const auto& r : sample.records) {
      const double d = mean_of(r.w) - mu;
      between += static_cast<double>(r.w.size()) * d * d;
    }
    const double s2x = (between - (md - 1.0) * s2u) / (K - sum_k2 / K);
    est.phi = {mu, s2x, s2u};
    for (Index i = 0; i < m; ++i) {
      const auto& r = sample.records[static_cast<std::size_t>(i)];
      est.per_subject_psi.row(i) = psi_rm(r.w, est.phi, m, sum_k).transpose();
      est.jacobian_A += psi_rm_jacobian(r.w, est.phi, m, sum_k);
    }
  }

  if (!(est.phi.sigma2_x > 0.0))
    throw EstimationError("solve_nuisance: sigma2_x estimate is not positive");

  est.jacobian_A /= md;
  est.meat_B = est.per_subject_psi.transpose() * est.per_subject_psi / md;

  Eigen::JacobiSVD<Matrix> svd(Matrix(est.jacobian_A));
  const auto& sv = svd.singularValues();
  est.condition_A = sv(0) / sv(2);
  if (!(est.condition_A < 1e12)) throw EstimationError("solve_nuisance: estimating-equation Jacobian is singular");

  const Matrix3 a_inv = est.jacobian_A.inverse();
  est.cov_phi = a_inv * est.meat_B * a_inv.transpose() / md;
  est.cov_phi = 0.5 * (est.cov_phi + est.cov_phi.transpose()).eval();
  return est;
}

}  // namespace segcox
