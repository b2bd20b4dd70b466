#include <doctest.h>

#include <cmath>
#include <random>

#include "attelig/dgp.hpp"
#include "attelig/error.hpp"
#include "attelig/estimators.hpp"
#include "attelig/oracle.hpp"
#include "attelig/stats.hpp"
#include "reference.hpp"

using namespace attelig;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an attelig::Error");
  return ErrorCode::InvalidArgument;
}

CovariateSchema xs_schema() {
  return CovariateSchema({{"x", CovariateKind::Numeric, {}, Partition::FullyObserved},
                          {"l", CovariateKind::Numeric, {}, Partition::EligibilityMissing}});
}

EligibilityRule l_rule() { return EligibilityRule::threshold("l", Comparator::GreaterEqual, 5); }

NuisanceSet filled(std::size_t n) {
  NuisanceSet s(n);
  for (Eigen::VectorXd* v : {&s.eta1, &s.eta0, &s.u, &s.mu0, &s.eps1, &s.xi, &s.gamma, &s.chi, &s.nu, &s.omega1}) {
    *v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  }
  for (auto k : nuisances_for_eif()) s.fitted.insert(k);
  for (auto k : nuisances_for_if()) s.fitted.insert(k);
  return s;
}

}  // namespace

TEST_CASE("alpha-dot hand evaluations") {
  ObsNuisance n;
  n.eta1 = 0.5;
  n.eps1 = 0.3;
  CHECK(alpha_dot({0, 1, 1, 2.0}, n) == 0.0);
  CHECK(alpha_dot({1, 1, 1, 2.0}, n) == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(alpha_dot({1, 0, 0, 2.0}, n) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("beta-dot hand evaluations") {
  ObsNuisance n;
  n.eps1 = 0.4;
  n.xi = 0.15;
  CHECK(beta_dot({1, 0, 0, 2.0}, n) == doctest::Approx(0.4 * 2.0 - 0.15).epsilon(1e-15));

  ObsNuisance m;
  m.eta1 = 0.5;
  m.eta0 = 0.5;
  m.gamma = 0.2;
  m.chi = 0.1;
  m.u = 0.3;
  m.mu0 = 0.7;
  CHECK(beta_dot({0, 1, 0, 1.0}, m) == doctest::Approx(0.1).epsilon(1e-14));

  // r = 1, E = 1, eta = 1, eps1 = 1, xi = mu0.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.05, 0.95), z(-2.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    ObsNuisance d;
    d.eta1 = d.eta0 = d.eps1 = 1.0;
    d.u = u(rng);
    d.mu0 = z(rng);
    d.xi = d.mu0;
    d.gamma = z(rng);
    d.chi = z(rng);
    const int a = rep % 2;
    const double y = z(rng);
    const double expected = (y - d.mu0) * (a - (1 - a) * d.u / (1 - d.u));
    CHECK(beta_dot({a, 1, 1, y}, d) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("IF contributions hand evaluations") {
  ObsNuisance n;
  n.omega1 = 0.4;
  n.nu = 0.25;
  CHECK(alpha_prime_dot({0, 0, 0, 1.0}, n) == 0.0);
  CHECK(beta_prime_dot({0, 0, 0, 1.0}, n) == 0.0);
  CHECK(alpha_prime_dot({1, 0, 0, 1.0}, n) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(beta_prime_dot({1, 0, 0, 1.0}, n) == doctest::Approx(0.25).epsilon(1e-15));

  ObsNuisance d;
  d.eta1 = d.omega1 = 1.0;
  d.u = 0.3;
  d.mu0 = 0.5;
  d.nu = 9.0;
  CHECK(beta_prime_dot({1, 1, 1, 2.0}, d) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(beta_prime_dot({0, 1, 1, 2.0}, d) == doctest::Approx(-1.5 * 0.3 / 0.7).epsilon(1e-15));
}

TEST_CASE("contributions vanish for controls and stay finite") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> p(0.005, 0.995), z(-5.0, 5.0);
  for (int rep = 0; rep < 2000; ++rep) {
    ObsNuisance n{p(rng), p(rng), p(rng), z(rng), p(rng), z(rng), z(rng), z(rng), z(rng), p(rng)};
    const ObsCore o{rep % 2, (rep / 2) % 2, (rep / 4) % 2, z(rng)};
    if (o.a == 0) {
      CHECK(alpha_dot(o, n) == 0.0);
      CHECK(alpha_prime_dot(o, n) == 0.0);
    }
    CHECK(std::isfinite(beta_dot(o, n)));
    CHECK(std::isfinite(beta_prime_dot(o, n)));
  }
}

TEST_CASE("ratio estimate: centered influence values and standard error") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  Eigen::VectorXd a(500), b(500);
  for (int i = 0; i < 500; ++i) {
    a(i) = 1.0 + 0.3 * z(rng);
    b(i) = 0.5 * a(i) + 0.2 * z(rng);
  }
  const auto r = ratio_estimate(a, b);
  CHECK(std::abs(r.thetaStar.mean()) <= 1e-10);
  CHECK(r.thetaHat == doctest::Approx(b.mean() / a.mean()).epsilon(1e-14));
  // Delta method for a ratio of means.
  const double ma = a.mean(), mb = b.mean();
  double acc = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double d = (b(i) - mb) / ma - mb * (a(i) - ma) / (ma * ma);
    acc += d * d;
  }
  CHECK(r.se == doctest::Approx(std::sqrt(acc / 500.0 / 500.0)).epsilon(1e-10));
}

TEST_CASE("wald intervals nest as the level grows") {
  double prevLo = 0.0, prevHi = 0.0;
  bool first = true;
  for (double level : {0.5, 0.8, 0.9, 0.95, 0.99}) {
    const auto [lo, hi] = wald_interval(1.0, 0.2, level);
    CHECK(lo <= 1.0);
    CHECK(hi >= 1.0);
    if (!first) {
      CHECK(lo <= prevLo);
      CHECK(hi >= prevHi);
    }
    prevLo = lo;
    prevHi = hi;
    first = false;
  }
  const auto [lo, hi] = wald_interval(0.0, 1.0, 0.95);
  CHECK(hi == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(lo == -hi);
}

TEST_CASE("no treated subjects gives DegenerateAlpha") {
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 10; ++i) recs.push_back({std::to_string(i), {0.0}, 0, 1.0, 1, std::vector<double>{6.0}});
  const CoarsenedDataset data(xs_schema(), recs);
  auto s = filled(10);
  s.eta1.setConstant(0.5);
  s.eta0.setConstant(0.5);
  s.eps1.setConstant(0.5);
  s.u.setConstant(0.5);
  s.omega1.setConstant(0.5);
  CHECK(code_of([&] { theta_eif(data, l_rule(), s); }) == ErrorCode::DegenerateAlpha);
  CHECK(code_of([&] { theta_if(data, l_rule(), s); }) == ErrorCode::DegenerateAlpha);
  CHECK(code_of([&] { theta_cc(data, l_rule(), Eigen::VectorXd::Zero(10)); }) == ErrorCode::EmptyTreatedEligible);
}

TEST_CASE("complete-data reduction to the doubly robust ATT estimator") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> p(0.05, 0.9);
  const std::size_t n = 500;
  std::vector<CoarsenedObservation> recs;
  std::vector<int> a(n);
  std::vector<double> y(n), m0(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = z(rng) > 0.3 ? 1 : 0;
    y[i] = z(rng) + a[i];
    m0[i] = 0.5 * z(rng);
    u[i] = p(rng);
    recs.push_back({std::to_string(i), {z(rng)}, a[i], y[i], 1, std::vector<double>{6.0}});
  }
  const CoarsenedDataset data(xs_schema(), recs);
  auto s = filled(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    s.eta1(k) = s.eta0(k) = s.eps1(k) = s.omega1(k) = 1.0;
    s.u(k) = u[i];
    s.mu0(k) = m0[i];
    s.xi(k) = m0[i];
    s.gamma(k) = z(rng);
    s.chi(k) = z(rng);
    s.nu(k) = z(rng);
  }
  const double ref = testref::dr_att(a, y, m0, u);
  CHECK(std::abs(theta_eif(data, l_rule(), s).report.thetaHat - ref) <= 1e-12);
  CHECK(std::abs(theta_if(data, l_rule(), s).report.thetaHat - ref) <= 1e-12);
}

TEST_CASE("IWOR with unit weights equals the complete-case estimator") {
  auto cfg = dgp::DgpConfig::published();
  cfg.n = 3000;
  cfg.seed = 12;
  const auto data = dgp::simulate_dataset(cfg);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  Eigen::VectorXd mu(3000);
  for (auto& v : mu) v = 0.1 * z(rng);
  const auto cc = theta_cc(data, dgp::simulation_rule(), mu);
  const auto iw = theta_iwor(data, dgp::simulation_rule(), mu, Eigen::VectorXd::Ones(3000));
  CHECK(cc.thetaHat == iw.thetaHat);

  Eigen::VectorXd oracleMu(3000);
  for (std::size_t i = 0; i < data.size(); ++i) oracleMu(static_cast<Eigen::Index>(i)) = data[i].y;
  CHECK(theta_cc(data, dgp::simulation_rule(), oracleMu).thetaHat == 0.0);
}

TEST_CASE("bootstrap: constant estimator, determinism and degenerate resamples") {
  auto cfg = dgp::DgpConfig::published();
  cfg.n = 200;
  cfg.seed = 3;
  const auto data = dgp::simulate_dataset(cfg);
  const auto c = bootstrap_se([](const CoarsenedDataset&) { return 2.0; }, data, 50, 1, 0.95, 2.0);
  CHECK(c.se == 0.0);
  CHECK(c.ciLo == 2.0);
  CHECK(c.ciHi == 2.0);

  auto mean_y = [](const CoarsenedDataset& d) {
    double s = 0.0;
    for (const auto& r : d.records()) s += r.y;
    return s / static_cast<double>(d.size());
  };
  const auto a = bootstrap_se(mean_y, data, 100, 9, 0.95, 0.0);
  const auto b = bootstrap_se(mean_y, data, 100, 9, 0.95, 0.0);
  CHECK(a.se == b.se);
  CHECK(a.se > 0.0);

  int calls = 0;
  auto flaky = [&](const CoarsenedDataset&) -> double {
    if (calls++ % 5 == 0) throw Error(ErrorCode::EmptyTreatedEligible, "empty");
    return 1.0;
  };
  CHECK(code_of([&] { bootstrap_se(flaky, data, 50, 1, 0.95, 1.0); }) == ErrorCode::ResampleDegenerate);
  CHECK(code_of([&] { bootstrap_se(mean_y, data, 49, 1, 0.95, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("EIF with enumerated nuisances on fixture draws is consistent") {
  const auto d1 = oracle::make_d1();
  const auto rule = oracle::default_oracle_rule();
  const double truth = oracle::enumerate_true_atte(d1, rule);
  const auto data = oracle::sample(d1, 100000, 77);
  const auto nuis = oracle::true_nuisance_set(d1, rule, data);
  const auto eif = theta_eif(data, rule, nuis);
  INFO("theta " << eif.report.thetaHat << " truth " << truth << " se " << *eif.report.se);
  CHECK(std::abs(eif.report.thetaHat - truth) <= 4.0 * *eif.report.se);
  CHECK(std::abs(eif.ratio.thetaStar.mean()) <= 1e-10);
  const auto inf = theta_if(data, rule, nuis);
  CHECK(std::abs(inf.report.thetaHat - truth) <= 4.0 * *inf.report.se);
}

TEST_CASE("double robustness on fixture draws") {
  // Saturated cell-mean learners are correct on the discrete fixture;
  // intercept-only models are misspecified.
  const auto d1 = oracle::make_d1();
  const auto rule = oracle::default_oracle_rule();
  const double truth = oracle::enumerate_true_atte(d1, rule);
  auto cell = learners::LearnerSpec::forest(1, 10.0, 1);
  cell.hyper["replace"] = 0;

  auto run = [&](bool mu0Wrong, bool uWrong) {
    NuisanceSpec spec;
    spec.mu0Strategy = Mu0Strategy::Stratify;
    spec.restrictMuUToEligible = false;
    for (auto n : nuisances_for_eif()) spec.models[n].learner = cell;
    spec.models[NuisanceName::Mu0].interceptOnly = mu0Wrong;
    spec.models[NuisanceName::U].interceptOnly = uWrong;
    std::vector<double> est;
    for (int rep = 0; rep < 200; ++rep) {
      const auto data = oracle::sample(d1, 10000, derive_seed(55, static_cast<std::uint64_t>(rep)));
      const auto nuis = crossfit(data, rule, spec, assign_folds(data.size(), 2, static_cast<std::uint64_t>(rep)),
                                 nuisances_for_eif(), static_cast<std::uint64_t>(rep));
      est.push_back(theta_eif(data, rule, nuis).report.thetaHat);
    }
    return (mean(est) - truth) / truth;
  };
  const double allRight = run(false, false);
  const double muWrong = run(true, false);
  const double uWrong = run(false, true);
  INFO("relative bias: correct " << allRight << ", mu0 wrong " << muWrong << ", u wrong " << uWrong);
  CHECK(std::abs(allRight) <= 0.02);
  CHECK(std::abs(muWrong) <= 0.02);
  CHECK(std::abs(uWrong) <= 0.02);
}
