#include "segcox/cox.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>

using namespace segcox;
using segcox::testing::make_cohort;
using segcox::testing::rel_close;
using segcox::testing::simulate;
using Catch::Approx;

namespace {

/// O(n^2) Breslow log partial likelihood straight from its definition.
double brute_loglik(const ThetaParams& t, const AnalysisDataset& d, const Vector& weights = Vector()) {
  const auto risk = evaluate_risk(t, d);
  double ll = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    if (!d.event(i)) continue;
    const double wi = weights.size() ? weights(i) : 1.0;
    double denom = 0.0;
    for (Index j = 0; j < d.size(); ++j)
      if (d.time(j) >= d.time(i)) denom += (weights.size() ? weights(j) : 1.0) * std::exp(risk.log_risk(j));
    ll += wi * (risk.log_risk(i) - std::log(denom));
  }
  return ll;
}

Vector fd_gradient(const ThetaParams& t, const AnalysisDataset& d, const Vector& weights, double h = 1e-6) {
  const Vector c = t.coefficients();
  Vector g(c.size());
  for (Index j = 0; j < c.size(); ++j) {
    Vector up = c, dn = c;
    up(j) += h;
    dn(j) -= h;
    g(j) = (brute_loglik(ThetaParams::from_coefficients(up, t.tau), d, weights) -
            brute_loglik(ThetaParams::from_coefficients(dn, t.tau), d, weights)) /
           (2 * h);
  }
  return g;
}

Matrix fd_information(const ThetaParams& t, const AnalysisDataset& d, const Vector& weights, double h = 1e-5) {
  const Vector c = t.coefficients();
  Matrix info(c.size(), c.size());
  for (Index j = 0; j < c.size(); ++j) {
    Vector up = c, dn = c;
    up(j) += h;
    dn(j) -= h;
    info.col(j) = -(score_and_info(ThetaParams::from_coefficients(up, t.tau), d, weights).score -
                    score_and_info(ThetaParams::from_coefficients(dn, t.tau), d, weights).score) /
                  (2 * h);
  }
  return info;
}

/// Small tied dataset from a simulated cohort with times rounded to 0.5.
struct Small {
  Cohort cohort;
  ValidationSample validation;
  NuisanceEstimate nuisance;
};

Small small_dataset(Design design = Design::EV_X, double rho = 0.8, Index n = 150) {
  ScenarioConfig sc;
  sc.n = n;
  sc.m_valid = 60;
  sc.rho_xw = rho;
  sc.design = design;
  auto s = simulate(sc, 3);
  for (auto& subj : s.data.cohort.cohort.subjects)
    if (subj.event) subj.event_time = std::min(9.5, std::ceil(subj.event_time * 2) / 2);
  return {s.data.cohort.cohort, s.data.validation, solve_nuisance(s.data.validation)};
}

ThetaParams at(double beta, double omega, double tau) {
  ThetaParams t;
  t.beta = beta;
  t.omega = omega;
  t.tau = tau;
  return t;
}

}  // namespace

TEST_CASE("null-model score is covariate centering over risk sets") {
  const Small s = small_dataset();
  const auto d = build_analysis_dataset(s.cohort, s.validation, s.nuisance.phi, 0.0, Method::RC1);
  const auto si = score_and_info(at(0, 0, 0), d);
  double expect = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    if (!d.event(i)) continue;
    double num = 0, den = 0;
    for (Index j = 0; j < d.size(); ++j)
      if (d.time(j) >= d.time(i)) {
        num += d.covariates(j, 0);
        den += 1;
      }
    expect += d.covariates(i, 0) - num / den;
  }
  CHECK(si.score(0) == Approx(expect).epsilon(1e-12));
}

TEST_CASE("score and information match the brute-force likelihood") {
  const Small s = small_dataset();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::exponential_distribution<double> ex(1.0);
  for (Method method : {Method::RC1, Method::RC2, Method::RR1}) {
    for (int rep = 0; rep < 10; ++rep) {
      const double tau = 0.5 * u(rng);
      const auto d = build_analysis_dataset(s.cohort, s.validation, s.nuisance.phi, tau, method);
      const ThetaParams t = at(u(rng), u(rng), tau);
      Vector weights;
      if (rep % 2 == 1) weights = Vector::NullaryExpr(d.size(), [&](Index) { return ex(rng); });
      const auto si = score_and_info(t, d, weights);
      CHECK(si.log_likelihood == Approx(brute_loglik(t, d, weights)).epsilon(1e-10));
      const Vector g = fd_gradient(t, d, weights);
      for (Index j = 0; j < 2; ++j) CHECK(rel_close(si.score(j), g(j), 1e-6, 1e-6));
      const Matrix info = fd_information(t, d, weights);
      for (Index a = 0; a < 2; ++a)
        for (Index b = 0; b < 2; ++b) CHECK(rel_close(si.info(a, b), info(a, b), 1e-5, 1e-7));
    }
  }
}

TEST_CASE("score and information with Z covariates") {
  Small s = small_dataset();
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (auto& subj : s.cohort.subjects) subj.z = Vector::NullaryExpr(2, [&](Index) { return nd(rng); });
  const auto d = naive_dataset(s.cohort, 0.1);
  ThetaParams t = at(0.3, 0.4, 0.1);
  t.gamma = Vector::Constant(2, 0.2);
  const auto si = score_and_info(t, d);
  const Vector g = fd_gradient(t, d, Vector());
  for (Index j = 0; j < 4; ++j) CHECK(rel_close(si.score(j), g(j), 1e-6, 1e-6));
  const Matrix info = fd_information(t, d, Vector());
  CHECK((si.info - info).cwiseAbs().maxCoeff() <= 1e-5 * info.cwiseAbs().maxCoeff());
  const auto fit = solve_score(t, d);
  CHECK(fit.converged);
  CHECK(fit.score.lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("score residuals sum to the score and form a PSD meat") {
  const Small s = small_dataset();
  for (Method method : {Method::RC1, Method::RC2, Method::RR1}) {
    const auto d = build_analysis_dataset(s.cohort, s.validation, s.nuisance.phi, 0.0, method);
    const ThetaParams t = at(0.5, 0.3, 0.0);
    const Matrix h = score_residuals(t, d);
    const Vector u = score_and_info(t, d).score;
    CHECK((h.colwise().sum().transpose() - u).cwiseAbs().maxCoeff() <= 1e-8);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h.transpose() * h);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("error-free fits") {
  ScenarioConfig sc;
  sc.rho_xw = 1.0;

  SECTION("null hazard recovers zero") {
    sc.beta = 0.0;
    sc.omega = 0.0;
    const auto s = simulate(sc, 1);
    const auto est = solve_nuisance(s.data.validation);
    const auto fit = fit_corrected(s.data.cohort.cohort, s.data.validation, est, Method::RC1, sc.tau());
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.theta_hat.beta) <= 3 * std::sqrt(fit.omega_corr(0, 0)));
    CHECK(std::abs(fit.theta_hat.omega) <= 3 * std::sqrt(fit.omega_corr(1, 1)));
  }
  SECTION("large cohort is consistent and satisfies the information equality") {
    sc.n = 200000;
    const auto s = simulate(sc, 2);
    const auto est = solve_nuisance(s.data.validation);
    const auto fit = fit_corrected(s.data.cohort.cohort, s.data.validation, est, Method::RC1, sc.tau());
    REQUIRE(fit.converged);
    CHECK(fit.score.lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK(std::abs(fit.theta_hat.beta - sc.beta) <= 3 * std::sqrt(fit.omega_corr(0, 0)));
    CHECK(std::abs(fit.theta_hat.omega - sc.omega) <= 3 * std::sqrt(fit.omega_corr(1, 1)));
    const Matrix meat = fit.score_residuals.transpose() * fit.score_residuals;
    for (Index j = 0; j < 2; ++j) CHECK(rel_close(meat(j, j), fit.info(j, j), 0.15));
  }
}

TEST_CASE("solver guards") {
  SECTION("estimates outside the box are not converged") {
    ScenarioConfig sc;
    sc.rho_xw = 1.0;
    sc.beta = 6.0;
    sc.omega = 0.0;
    sc.n = 2000;
    const auto s = simulate(sc, 1);
    const auto d = naive_dataset(s.data.cohort.cohort, sc.tau());
    const auto fit = solve_score(at(0, 0, sc.tau()), d);
    CHECK_FALSE(fit.converged);
    CHECK(fit.theta_hat.beta > 4.9);
  }
  SECTION("a constant covariate makes the information singular") {
    const Cohort c = make_cohort({1, 2, 3, 4}, {1, 1, 1, 0}, {0.3, 0.3, 0.3, 0.3});
    const auto fit = solve_score(at(0, 0, 0), naive_dataset(c, 0.0));
    CHECK_FALSE(fit.converged);
    CHECK_THAT(fit.message, Catch::Matchers::ContainsSubstring("singular"));
  }
  SECTION("non-finite start") {
    const Cohort c = make_cohort({1, 2}, {1, 0}, {0.3, -0.3});
    const auto fit = solve_score(at(std::nan(""), 0, 0), naive_dataset(c, 0.0));
    CHECK_FALSE(fit.converged);
  }
}

TEST_CASE("fits do not depend on subject order") {
  Small s = small_dataset(Design::EV_X, 0.8, 300);
  const auto base = fit_corrected(s.cohort, s.validation, s.nuisance, Method::RR1, 0.0);
  Cohort p = s.cohort;
  std::reverse(p.subjects.begin(), p.subjects.end());
  const auto perm = fit_corrected(p, s.validation, s.nuisance, Method::RR1, 0.0);
  REQUIRE(base.converged);
  REQUIRE(perm.converged);
  CHECK(std::abs(base.theta_hat.beta - perm.theta_hat.beta) <= 1e-12);
  CHECK(std::abs(base.theta_hat.omega - perm.theta_hat.omega) <= 1e-12);
  // The nuisance Jacobian is a finite difference, so allow rounding noise.
  CHECK((base.omega_corr - perm.omega_corr).cwiseAbs().maxCoeff() <= 1e-9 * base.omega_corr.cwiseAbs().maxCoeff());
}

TEST_CASE("tied event times use the Breslow risk sets") {
  Cohort c = make_cohort({1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 10.0}, {1, 1, 1, 1, 1, 1, 0, 0},
                         {0.2, -0.5, 0.9, 0.1, -1.2, 1.4, 0.4, -0.3});
  const auto d = naive_dataset(c, 0.0);
  const auto t = at(0.3, 0.5, 0.0);
  const auto si = score_and_info(t, d);
  CHECK(si.log_likelihood == Approx(brute_loglik(t, d)).epsilon(1e-12));
  const auto fit = solve_score(at(0, 0, 0.0), d);
  REQUIRE(fit.converged);
  // Moving one tied time by a small amount changes only the tied risk sets.
  Cohort moved = c;
  moved.subjects[2].event_time = 2.0 + 1e-9;
  const auto si_moved = score_and_info(t, naive_dataset(moved, 0.0));
  CHECK(std::abs(si_moved.log_likelihood - si.log_likelihood) > 1e-6);
}

TEST_CASE("dU/dphi") {
  SECTION("error-free data: calibration ignores mu_x and sigma2_x") {
    ScenarioConfig sc;
    sc.rho_xw = 1.0;
    sc.n = 1000;
    const auto s = simulate(sc, 4);
    const auto est = solve_nuisance(s.data.validation);
    const auto fit = fit_corrected(s.data.cohort.cohort, s.data.validation, est, Method::RC1, sc.tau());
    REQUIRE(fit.converged);
    CHECK(est.phi.sigma2_u == 0.0);
    CHECK(fit.u_phi_jacobian.col(0).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(fit.u_phi_jacobian.col(1).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(est.cov_phi.row(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK((fit.omega_corr - fit.omega_naive).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("central differences agree with Richardson extrapolation") {
    const Small s = small_dataset(Design::EV_X, 0.7, 400);
    for (Method method : {Method::RC2, Method::RR1}) {
      const ThetaParams t = at(0.4, 0.6, 0.1);
      const Matrix g = u_phi_jacobian(t, s.cohort, s.validation, s.nuisance.phi, method);
      const Vector3 base = s.nuisance.phi.as_vector();
      for (int j = 0; j < 3; ++j) {
        auto score = [&](double delta) {
          Vector3 v = base;
          v(j) += delta;
          const auto d = build_analysis_dataset(s.cohort, s.validation, NuisanceParams::from_vector(v), 0.1, method);
          return score_and_info(t, d).score;
        };
        const double h = 1e-3;
        const Vector richardson = (8 * (score(h) - score(-h)) - (score(2 * h) - score(-2 * h))) / (12 * h);
        for (Index r = 0; r < 2; ++r) CHECK(rel_close(g(r, j), richardson(r), 1e-3, 1e-6));
      }
    }
  }
  SECTION("three-subject toy: dU_beta/dmu_x by hand") {
    // phi = (mu, 1, 1) gives shrinkage 1/2, so x~ = (mu + w)/2. With
    // w = (2, 1, -2), tau = 0, beta = 0, omega = 1 and mu = 0 the first two
    // hinges are active and move with mu at rate 1/2; shifting every x~
    // leaves the centering alone, so only the risk weights contribute:
    //   dU_beta/dmu = -(1/2) * omega * sum_i Cov_i(x~, active),
    // Cov_i taken under risk-set weights r_j = exp(omega * hinge_j).
    const Cohort c = make_cohort({1, 2, 3}, {1, 1, 1}, {2, 1, -2});
    const ValidationSample ev{Design::EV_X, {{0.0, {0.0}, std::nullopt}, {1.0, {1.0}, std::nullopt}}};
    const NuisanceParams phi{0.0, 1.0, 1.0};
    const double xt[3] = {1.0, 0.5, -1.0};
    const double act[3] = {1.0, 1.0, 0.0};
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) {
      double s0 = 0, sx = 0, sa = 0, sxa = 0;
      for (int j = i; j < 3; ++j) {
        const double r = std::exp(std::max(xt[j], 0.0));
        s0 += r;
        sx += r * xt[j];
        sa += r * act[j];
        sxa += r * xt[j] * act[j];
      }
      expect += -0.5 * (sxa / s0 - (sx / s0) * (sa / s0));
    }
    const Matrix g = u_phi_jacobian(at(0.0, 1.0, 0.0), c, ev, phi, Method::RC1);
    CHECK(expect < 0.0);
    CHECK(g(0, 0) == Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("corrected covariance") {
  const Small s = small_dataset(Design::EV_X, 0.8, 600);
  const auto fit = fit_corrected(s.cohort, s.validation, s.nuisance, Method::RC2, 0.0);
  REQUIRE(fit.converged);

  SECTION("zero nuisance uncertainty reduces to the naive sandwich") {
    NuisanceEstimate known = s.nuisance;
    known.cov_phi.setZero();
    CHECK(corrected_covariance(fit, known, Design::EV_X) == fit.omega_naive);
  }
  SECTION("the correction adds a PSD term") {
    CHECK((fit.omega_corr - fit.omega_corr.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(fit.omega_corr - fit.omega_naive);
    CHECK(es.eigenvalues().minCoeff() >= -1e-14);
    CHECK(fit.omega_corr(0, 0) > fit.omega_naive(0, 0));
  }
  SECTION("explicit formula") {
    const Matrix ii = fit.info.inverse();
    const Matrix a = fit.score_residuals.transpose() * fit.score_residuals +
                     fit.u_phi_jacobian * s.nuisance.cov_phi * fit.u_phi_jacobian.transpose();
    CHECK((fit.omega_corr - ii * a * ii).cwiseAbs().maxCoeff() <= 1e-12 * fit.omega_corr.cwiseAbs().maxCoeff());
  }
  SECTION("design mismatch is rejected") {
    CHECK_THROWS_AS(corrected_covariance(fit, s.nuisance, Design::IV_RM), std::invalid_argument);
  }
}

TEST_CASE("internal repeated-measures cross term") {
  const Small s = small_dataset(Design::IV_RM, 0.8, 600);
  const auto fit = fit_corrected(s.cohort, s.validation, s.nuisance, Method::RC1, 0.0);
  REQUIRE(fit.converged);
  // Brute-force Phi = m^-1 sum over the overlap of H_i Psi_i'.
  Matrix phi_hat = Matrix::Zero(2, 3);
  for (Index i = 0; i < s.nuisance.m; ++i)
    phi_hat += fit.score_residuals.row(*s.validation.records[static_cast<std::size_t>(i)].cohort_index).transpose() *
               s.nuisance.per_subject_psi.row(i);
  phi_hat /= static_cast<double>(s.nuisance.m);
  const Matrix term = phi_hat * s.nuisance.jacobian_A.inverse().transpose() * fit.u_phi_jacobian.transpose();
  const Matrix ii = fit.info.inverse();
  const Matrix a = fit.score_residuals.transpose() * fit.score_residuals +
                   fit.u_phi_jacobian * s.nuisance.cov_phi * fit.u_phi_jacobian.transpose() - term - term.transpose();
  CHECK((fit.omega_corr - ii * a * ii).cwiseAbs().maxCoeff() <= 1e-12 * fit.omega_corr.cwiseAbs().maxCoeff());
}

TEST_CASE("weighted bootstrap bias correction") {
  SECTION("error-free data leaves little to correct") {
    ScenarioConfig sc;
    sc.rho_xw = 1.0;
    sc.n = 1500;
    const auto s = simulate(sc, 6);
    const auto est = solve_nuisance(s.data.validation);
    FitOptions opt;
    opt.bootstrap_replicates = 100;
    opt.bootstrap_seed = 77;
    const auto fit = fit_corrected(s.data.cohort.cohort, s.data.validation, est, Method::RR2, sc.tau(), opt);
    REQUIRE(fit.converged);
    REQUIRE(fit.rr1_theta);
    CHECK(std::abs(fit.theta_hat.beta - fit.rr1_theta->beta) <= std::sqrt(fit.omega_corr(0, 0)));
    CHECK(std::abs(fit.theta_hat.omega - fit.rr1_theta->omega) <= std::sqrt(fit.omega_corr(1, 1)));
    const auto again = fit_corrected(s.data.cohort.cohort, s.data.validation, est, Method::RR2, sc.tau(), opt);
    CHECK(again.theta_hat.beta == fit.theta_hat.beta);
  }
  SECTION("independent weight streams agree on the bias") {
    ScenarioConfig sc;
    sc.n = 800;
    const auto s = simulate(sc, 7);
    const auto est = solve_nuisance(s.data.validation);
    const int B = 2000;
    const auto a = rr2_fit(s.data.cohort.cohort, s.data.validation, est.phi, at(0.4, 0.6, sc.tau()), B, 1);
    const auto b = rr2_fit(s.data.cohort.cohort, s.data.validation, est.phi, at(0.4, 0.6, sc.tau()), B, 2);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    // Bootstrap SE of the mean of B draws, from the RR1 sampling variance.
    const auto d = build_analysis_dataset(s.data.cohort.cohort, s.data.validation, est.phi, sc.tau(), Method::RR1);
    const Matrix info_inv = score_and_info(*a.rr1_theta, d).info.inverse();
    for (Index j = 0; j < 2; ++j) {
      const double se = std::sqrt(info_inv(j, j) / B);
      CHECK(std::abs(a.bootstrap_bias(j) - b.bootstrap_bias(j)) <= 2 * std::sqrt(2.0) * se);
    }
  }
  SECTION("B below 50 is rejected") {
    const Cohort c = make_cohort({1, 2}, {1, 0}, {0.3, -0.3});
    const ValidationSample ev{Design::EV_X, {{0.0, {0.0}, std::nullopt}, {1.0, {1.0}, std::nullopt}}};
    CHECK_THROWS_AS(rr2_fit(c, ev, NuisanceParams{}, at(0, 0, 0), 10, 1), std::invalid_argument);
  }
}
