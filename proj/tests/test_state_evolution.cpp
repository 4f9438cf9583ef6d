#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "amp_lab/errors.hpp"
#include "amp_lab/state_evolution.hpp"
#include "oracles.hpp"

using namespace amp_lab;

namespace {

ExpectationConfig gh_config(int points = 80) {
  ExpectationConfig c;
  c.method = ExpectationMethod::GaussHermite;
  c.points = points;
  return c;
}

SeHistory empty_history(int t) {
  SeHistory h;
  h.Phi = Eigen::MatrixXd::Zero(t, t);
  return h;
}

double var_of(const SpectralLaw& law) { return moment(law, 2) - moment(law, 1) * moment(law, 1); }

}  // namespace

TEST_CASE("Gauss-Hermite rule") {
  const auto gh = gauss_hermite(64);
  double mass = 0.0;
  for (double w : gh.weights) mass += w;
  CHECK(std::abs(mass - 1.0) <= 1e-13);
  auto e = [&](auto f) {
    double s = 0.0;
    for (std::size_t i = 0; i < gh.nodes.size(); ++i) s += gh.weights[i] * f(gh.nodes[i]);
    return s;
  };
  CHECK(std::abs(e([](double x) { return x * x; }) - 1.0) <= 1e-12);
  CHECK(std::abs(e([](double x) { return std::pow(x, 4); }) - 3.0) <= 1e-11);
  CHECK(std::abs(e([](double x) { return std::pow(x, 6); }) - 15.0) <= 1e-10);
}

TEST_CASE("trapezoid rule") {
  const GaussianRule tr = gauss_trapezoid(120);
  double one = 0.0, m4 = 0.0, th = 0.0;
  for (std::size_t k = 0; k < tr.nodes.size(); ++k) {
    one += tr.weights[k];
    m4 += tr.weights[k] * std::pow(tr.nodes[k], 4);
    th += tr.weights[k] * std::pow(std::tanh(1.7 * tr.nodes[k]), 2);
  }
  CHECK(std::abs(one - 1.0) <= 1e-15);
  CHECK(std::abs(m4 - 3.0) <= 1e-12);
  // 30-digit adaptive quadrature: E[tanh(1.7 G)^2] = 0.583258294240832862...
  CHECK(std::abs(th - 0.5832582942408329) <= 1e-13);
  CHECK(std::abs(th - oracle::gauss_expect([](double z) { return std::pow(std::tanh(1.7 * z), 2); })) <= 1e-13);
  CHECK_THROWS_AS(gauss_trapezoid(1), ValidationError);
}

TEST_CASE("Stein residual moments of simple denoisers") {
  GaussianModel m;
  m.S = (Eigen::Matrix2d() << 1.3, 0.4, 0.4, 0.9).finished();
  SeHistory h = empty_history(2);
  h.eta = {make_identity(1)};
  h.Phi(1, 0) = 1.0;

  const StepMoments id = gaussian_expectations(*make_identity(2), m, h, gh_config(20));
  CHECK(std::abs(id.divergence[0]) <= 1e-13);
  CHECK(std::abs(id.divergence[1] - 1.0) <= 1e-13);
  CHECK(std::abs(id.ubar_cross[2]) <= 1e-12);

  const StepMoments c = gaussian_expectations(*make_constant(2, 0.7), m, h, gh_config(20));
  CHECK(c.divergence.cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(std::abs(c.ubar_cross[2] - 0.49) <= 1e-12);
  CHECK(std::abs(c.u_cross[2] - 0.49) <= 1e-12);
}

TEST_CASE("tanh divergence: quadrature, Monte Carlo and the trapezoid oracle") {
  const double ref = oracle::gauss_expect([](double z) { return 1.0 - std::tanh(z) * std::tanh(z); });
  // Reference from a 30-digit adaptive quadrature: 0.605705509602158825...
  CHECK(std::abs(ref - 0.6057055096021588) <= 1e-12);
  GaussianModel m;
  m.S = Eigen::MatrixXd::Identity(1, 1);
  const SeHistory h = empty_history(1);
  const StepMoments gh = gaussian_expectations(*make_last_tanh(1), m, h, gh_config(64));
  CHECK(std::abs(gh.divergence[0] - ref) <= 1e-8);
  ExpectationConfig mc;
  mc.samples = 400'000;
  const StepMoments est = gaussian_expectations(*make_last_tanh(1), m, h, mc);
  CHECK(est.divergence_stderr[0] > 0.0);
  CHECK(std::abs(est.divergence[0] - gh.divergence[0]) <= 3.0 * est.divergence_stderr[0]);

  const double e2 = oracle::gauss_expect([](double z) { return std::tanh(z) * std::tanh(z); });
  CHECK(std::abs(gh.u_cross[1] - e2) <= 1e-8);
  // E[X Ubar] with X = R: Ubar = tanh(R) - E[tanh'] R, so E[R Ubar] = 0.
  CHECK(std::abs(gh.ubar_cross[0]) <= 1e-10);
}

TEST_CASE("Monte Carlo is reproducible and independent of the worker count") {
  GaussianModel m;
  m.S = Eigen::MatrixXd::Identity(1, 1);
  ExpectationConfig a;
  a.samples = 100'000;
  a.threads = 1;
  ExpectationConfig b = a;
  b.threads = 4;
  const auto x = gaussian_expectations(*make_last_tanh(1), m, empty_history(1), a);
  const auto y = gaussian_expectations(*make_last_tanh(1), m, empty_history(1), b);
  CHECK(x.divergence[0] == y.divergence[0]);
  CHECK(x.u_cross[1] == y.u_cross[1]);
}

TEST_CASE("first step covariance is the law variance times the initial second moment") {
  for (const SpectralLaw& law : {SpectralLaw::semicircle(), SpectralLaw::marchenko_pastur(0.3)}) {
    const SeTrajectory se = ri_amp_se(law, fixed_schedule(last_tanh_schedule(1)), 1.7, 1, gh_config());
    CHECK(std::abs(se.states[0].Sigma(0, 0) - var_of(law) * 1.7) <= 1e-9);
    const SeTrajectory df = ri_amp_df_se(law, fixed_schedule(last_tanh_schedule(1)), 1.7, 1, gh_config());
    CHECK(std::abs(df.states[0].Sigma(0, 0) - se.states[0].Sigma(0, 0)) <= 1e-12);
  }
}

TEST_CASE("semicircle recursion reduces to the scalar recursion") {
  constexpr int T = 3;
  const SeTrajectory se = ri_amp_se(SpectralLaw::semicircle(), fixed_schedule(last_tanh_schedule(T)), 1.0, T, gh_config());
  const auto tau = oracle::tau_recursion([](double x) { return std::tanh(x); }, 1.0, T);
  for (int t = 0; t < T; ++t) CHECK(std::abs(se.states[t].Sigma(t, t) - tau[t]) <= 1e-8);
  const auto lib = gaussian_amp_tau_recursion(DenoiserSchedule(T, make_last_tanh(1)), 1.0, T);
  for (int t = 0; t < T; ++t) CHECK(std::abs(lib[t] - tau[t]) <= 1e-10);
}

TEST_CASE("covariance series forms") {
  const Eigen::MatrixXd Delta = (Eigen::Matrix3d() << 1.0, 0.3, 0.1, 0.3, 0.8, 0.2, 0.1, 0.2, 0.6).finished();
  Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(3, 3);
  Phi(1, 0) = 0.4;
  Phi(2, 0) = -0.2;
  Phi(2, 1) = 0.9;
  // Only the second cumulant survives for the semicircle.
  CHECK((fan_se_form(semicircle_cumulants(6, 1.3), Phi, Delta) - 1.3 * Delta).cwiseAbs().maxCoeff() <= 1e-14);
  const Eigen::MatrixXd D1 = Eigen::MatrixXd::Constant(1, 1, 2.2);
  const auto k = marchenko_pastur_cumulants(2, 0.4);
  CHECK(std::abs(fan_se_form(k, Eigen::MatrixXd::Zero(1, 1), D1)(0, 0) - 0.4 * 2.2) <= 1e-15);

  // Theorem form against the series form through the second-moment relation.
  const SpectralLaw mp = SpectralLaw::marchenko_pastur(0.4);
  const PolyFamily q = build_poly_family(mp, PolyKind::Q, 4);
  Eigen::MatrixXd P4 = Eigen::MatrixXd::Zero(4, 4);
  P4.topLeftCorner(3, 3) = Phi;
  P4(3, 0) = 0.3;
  P4(3, 1) = -0.5;
  P4(3, 2) = 0.7;
  Eigen::MatrixXd Db = Eigen::MatrixXd::Identity(4, 4);
  Db.topLeftCorner(3, 3) = Delta;
  const Eigen::MatrixXd S = theorem_se_form(q, quadrature_rule(mp), P4, Db);
  const Eigen::MatrixXd F = fan_se_form(marchenko_pastur_cumulants(8, 0.4), P4, delta_from_relation(Db, P4, S));
  CHECK((S - F).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("second-moment relation along a trajectory") {
  const SeTrajectory se =
      ri_amp_se(SpectralLaw::marchenko_pastur(0.3), fixed_schedule(random_lipschitz_schedule(3, 5)), 1.0, 3, gh_config(30));
  for (const auto& st : se.states) {
    CHECK((st.Delta - delta_from_relation(st.DeltaBar, st.Phi, st.Sigma)).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("OAMP recursion") {
  const SpectralLaw sc = SpectralLaw::semicircle();
  SUBCASE("identity matrix denoiser with unit input") {
    const SeTrajectory se = oamp_se(sc, {[](double x) { return x; }}, fixed_schedule({make_last_tanh(1)}), 1.0, 1, gh_config());
    CHECK(std::abs(se.states[0].Sigma(0, 0) - 1.0) <= 1e-9);
  }
  SUBCASE("a constant matrix denoiser contributes nothing") {
    const std::vector<ScalarFn> fs{[](double x) { return x; }, [](double) { return 2.0; }};
    const SeTrajectory se = oamp_se(sc, fs, fixed_schedule(last_tanh_schedule(2)), 1.0, 2, gh_config());
    const Eigen::MatrixXd& S = se.states[1].Sigma;
    CHECK(std::abs(S(1, 1)) <= 1e-12);
    CHECK(std::abs(S(0, 1)) <= 1e-12);
    CHECK(std::abs(S(0, 0) - 1.0) <= 1e-9);
  }
}

TEST_CASE("overlap measure of the spiked model") {
  const SpectralLaw sc = SpectralLaw::semicircle();
  const NuMeasure nu = nu_measure_analytic(sc, 1.5);
  CHECK(std::abs(nu.total_mass() - 1.0) <= 1e-6);
  CHECK(std::abs(nu.moment(1) - 1.5) <= 1e-3);
  REQUIRE(nu.outlier.has_value());
  CHECK(std::abs(*nu.outlier - (1.5 + 1.0 / 1.5)) <= 1e-9);
  // Weight of the outlier atom for the semicircle: 1 - 1/theta^2.
  CHECK(std::abs(nu.outlier_weight - (1.0 - 1.0 / 2.25)) <= 1e-6);
  // Second moment from the series m_nu = m/(1 - theta m): theta^2 + 1.
  CHECK(std::abs(nu.moment(2) - (1.5 * 1.5 + 1.0)) <= 1e-3);

  const NuMeasure weak = nu_measure_analytic(sc, 1e-6);
  CHECK_FALSE(weak.outlier.has_value());
  for (int n = 1; n <= 4; ++n) CHECK(std::abs(weak.moment(n) - moment(sc, n)) <= 1e-4);

  const NuMeasure below = nu_measure_analytic(sc, 0.7);
  CHECK_FALSE(below.outlier.has_value());
  CHECK(std::abs(below.moment(1) - 0.7) <= 1e-3);

  const NuMeasure mp = nu_measure_analytic(SpectralLaw::marchenko_pastur(0.2), 1.5);
  CHECK(std::abs(mp.total_mass() - 1.0) <= 1e-6);
  // The discretized measure reproduces m / (1 - theta m) away from the support.
  const double z = 40.0;
  const std::complex<double> m = stieltjes_closed_form(SpectralLaw::marchenko_pastur(0.2), z);
  const std::complex<double> mnu = m / (1.0 - 1.5 * m);
  double sum = 0.0;
  for (std::size_t i = 0; i < mp.atoms.nodes.size(); ++i) sum += mp.atoms.weights[i] / (z - mp.atoms.nodes[i]);
  CHECK(std::abs(sum - mnu.real()) <= 1e-8);

  CHECK_THROWS_AS(nu_measure_analytic(SpectralLaw::discrete({-1.0, 0.0, 1.0}), 1.0), UnsupportedVariant);
}

TEST_CASE("empirical overlap measure pools seeds") {
  OverlapMeasure a{{0.0, 1.0}, {0.25, 0.75}}, b{{2.0}, {1.0}};
  const NuMeasure nu = nu_measure_empirical({a, b});
  CHECK_FALSE(nu.analytic);
  CHECK(std::abs(nu.total_mass() - 1.0) <= 1e-15);
  CHECK(std::abs(nu.moment(1) - 0.5 * (0.75 + 2.0)) <= 1e-15);
}

TEST_CASE("spiked recursion") {
  const SpectralLaw sc = SpectralLaw::semicircle();
  const Prior rad = Prior::rademacher();
  const ScalarFn id = [](double x) { return x; };

  SUBCASE("first step signal strength") {
    const double omega = 0.36;
    const SeTrajectory se = spiked_se(sc, 1.5, id, {}, mmse_combining(rad), rad, omega, 1, gh_config());
    CHECK(std::abs(se.states[0].beta[0] - 1.5 * std::sqrt(omega)) <= 1e-3);
    CHECK(std::abs(se.states[0].alpha[0] - std::sqrt(omega)) <= 1e-12);
  }
  SUBCASE("vanishing spike") {
    const SeTrajectory se = spiked_se(sc, 1e-8, id, {}, mmse_combining(rad), rad, 0.3, 3, gh_config());
    for (const auto& st : se.states) {
      CHECK(st.beta.cwiseAbs().maxCoeff() <= 1e-6);
      CHECK(std::abs(st.mse - 1.0) <= 1e-6);
    }
  }
  SUBCASE("perfect initialization gives a smaller first error") {
    const SeTrajectory good = spiked_se(sc, 1.5, id, {}, mmse_combining(rad), rad, 1.0, 1, gh_config());
    const SeTrajectory weak = spiked_se(sc, 1.5, id, {}, mmse_combining(rad), rad, 0.3, 1, gh_config());
    CHECK(good.states[0].mse < weak.states[0].mse);
  }
  SUBCASE("MSE decreases along the MP experiment") {
    const SpectralLaw mp = SpectralLaw::marchenko_pastur(0.2);
    const double th = 1.5, a = 0.2;
    const ScalarFn f = [=](double x) { return th / a * (1.0 + (a - 1.0) / x) - th * th / (a * x); };
    const SeTrajectory se = spiked_se(mp, th, f, {}, mmse_combining(rad), rad, 0.3, 3, gh_config(40));
    for (std::size_t t = 1; t < se.states.size(); ++t) CHECK(se.states[t].mse <= se.states[t - 1].mse + 1e-9);
    std::ostringstream csv;
    write_se_csv(se, csv);
    CHECK(csv.str().rfind("t,beta_t,sigma_tt,predicted_mse,predicted_mse_stderr,overlap\n", 0) == 0);
  }
  SUBCASE("invalid overlap") {
    CHECK_THROWS_AS(spiked_se(sc, 1.5, id, {}, mmse_combining(rad), rad, 1.2, 1), ValidationError);
  }
}

TEST_CASE("doubling the Monte Carlo budget moves predictions by at most two standard errors") {
  ExpectationConfig a;
  a.samples = 200'000;
  ExpectationConfig b = a;
  b.samples = 400'000;
  b.seed = a.seed + 1;
  const auto law = SpectralLaw::marchenko_pastur(0.3);
  const Prior rad = Prior::rademacher();
  const auto f = [](double x) { return x; };
  const SeTrajectory x = spiked_se(law, 1.5, f, {}, mmse_combining(rad), rad, 0.3, 4, a);
  const SeTrajectory y = spiked_se(law, 1.5, f, {}, mmse_combining(rad), rad, 0.3, 4, b);
  for (std::size_t t = 0; t < x.states.size(); ++t) {
    const double se = std::hypot(x.states[t].mse_stderr, y.states[t].mse_stderr);
    CHECK(std::abs(x.states[t].mse - y.states[t].mse) <= 2.0 * se + 1e-12);
  }
}

TEST_CASE("non-PSD covariances are rejected") {
  GaussianModel m;
  m.S = (Eigen::Matrix2d() << 1.0, 2.0, 2.0, 1.0).finished();
  SeHistory h = empty_history(2);
  h.eta = {make_identity(1)};
  CHECK_THROWS_AS(gaussian_expectations(*make_identity(2), m, h, gh_config(10)), ValidationError);
}
