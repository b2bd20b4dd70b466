#include <doctest.h>

#include <cmath>
#include <random>

#include "attelig/dgp.hpp"
#include "attelig/error.hpp"
#include "attelig/estimators.hpp"
#include "attelig/nuisance.hpp"
#include "attelig/oracle.hpp"
#include "attelig/stats.hpp"

using namespace attelig;
using learners::LearnerSpec;

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

NuisanceSpec uniform_spec(const LearnerSpec& prob, const LearnerSpec& reg) {
  NuisanceSpec s;
  for (auto n : {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0, NuisanceName::Eps1, NuisanceName::Xi,
                 NuisanceName::Gamma, NuisanceName::Chi, NuisanceName::Nu, NuisanceName::Omega1}) {
    s.models[n].learner = task_of(n) == learners::TaskKind::Probability ? prob : reg;
  }
  return s;
}

NuisanceSpec glm_spec() { return uniform_spec(LearnerSpec::logistic(), LearnerSpec::ols()); }

// One unpruned tree on the full sample: cell means on discrete inputs.
LearnerSpec saturated() {
  auto f = LearnerSpec::forest(1, 10.0, 1);
  f.hyper["replace"] = 0;
  return f;
}

CovariateSchema xs_schema() {
  return CovariateSchema({{"x", CovariateKind::Numeric, {}, Partition::FullyObserved},
                          {"l", CovariateKind::Numeric, {}, Partition::EligibilityMissing}});
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an attelig::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("eta: missingness independent of everything") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  std::bernoulli_distribution r(0.7), a(0.5);
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 10000; ++i) {
    CoarsenedObservation o{std::to_string(i), {z(rng)}, a(rng) ? 1 : 0, z(rng), r(rng) ? 1 : 0, std::nullopt};
    if (o.r) o.lEligMissing = std::vector<double>{z(rng)};
    recs.push_back(o);
  }
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rows = all_rows(data.size());
  const auto m = fit_eta(data, rows, glm_spec(), 1);
  for (int a : {0, 1}) {
    const auto p = m.predict(data, rows, a);
    CHECK(std::abs(p.mean() - 0.7) < 0.02);
    CHECK((p.array() - 0.7).abs().maxCoeff() < 0.05);
  }
}

TEST_CASE("eta: default missingness coefficients recovered at n = 1e5") {
  auto cfg = dgp::DgpConfig::published();
  cfg.n = 100000;
  cfg.seed = 31;
  const auto data = dgp::simulate_dataset(cfg);
  const auto rows = all_rows(data.size());
  const auto m = fit_eta(data, rows, glm_spec(), 1);
  const auto glm = std::dynamic_pointer_cast<const learners::GlmModel>(m.model);
  REQUIRE(glm);
  const auto X = build_design(data, rows, m.features);
  const Eigen::VectorXd p = (X.values * glm->coefficients()).unaryExpr([](double v) { return expit(v); });
  const Eigen::MatrixXd info = X.values.transpose() * (p.array() * (1.0 - p.array())).matrix().asDiagonal() * X.values;
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();

  std::map<std::string, double> truth(cfg.betaEta.begin(), cfg.betaEta.end());
  truth["a"] = truth.at("bs_type");
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const auto& name = X.columns[static_cast<std::size_t>(j)].name;
    const double b = truth.count(name) ? truth.at(name) : 0.0;
    const double zscore = (glm->coefficients()(j) - b) / se(j);
    INFO(name << " z = " << zscore);
    CHECK(std::abs(zscore) < 4.0);
    if (name == "a") CHECK(std::abs(zscore) <= 2.0);
  }
}

TEST_CASE("single-class targets") {
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 20; ++i) recs.push_back({std::to_string(i), {double(i)}, i % 2, 1.0 * i, 1, std::vector<double>{6.0}});
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rows = all_rows(data.size());
  auto spec = glm_spec();
  spec.singleClassFallback = false;
  CHECK(code_of([&] { fit_eta(data, rows, spec, 1); }) == ErrorCode::SingleClass);
  const auto elig = evaluate_eligibility(EligibilityRule::threshold("l", Comparator::GreaterEqual, 5), data);
  CHECK(code_of([&] { fit_eps1(data, elig, rows, spec, 1); }) == ErrorCode::SingleClass);

  spec.singleClassFallback = true;
  const auto m = fit_eta(data, rows, spec, 1);
  CHECK((m.predict(data, rows).array() == spec.clipHi).all());
}

TEST_CASE("u: intercept-only recovery and empty training set") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::bernoulli_distribution a(0.35);
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 10000; ++i) {
    recs.push_back({std::to_string(i), {z(rng)}, a(rng) ? 1 : 0, z(rng), 1, std::vector<double>{6.0 + z(rng)}});
  }
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rows = all_rows(data.size());
  const auto elig = evaluate_eligibility(EligibilityRule::threshold("l", Comparator::GreaterEqual, -100), data);
  auto spec = glm_spec();
  spec.models[NuisanceName::U].interceptOnly = true;
  const auto m = fit_u(data, elig, rows, spec, 1);
  CHECK(std::abs(m.predict(data, rows)(0) - 0.35) < 0.02);

  std::vector<CoarsenedObservation> none;
  for (int i = 0; i < 10; ++i) none.push_back({std::to_string(i), {0.0}, 1, 0.0, 0, std::nullopt});
  const CoarsenedDataset empty(xs_schema(), none);
  const auto e2 = evaluate_eligibility(EligibilityRule::threshold("l", Comparator::GreaterEqual, 0), empty);
  CHECK(code_of([&] { fit_u(empty, e2, all_rows(10), spec, 1); }) == ErrorCode::EmptySubset);
}

TEST_CASE("mu0: exact linear recovery under every strategy") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 200; ++i) {
    const double x = z(rng);
    const int a = i % 3 == 0 ? 1 : 0;
    recs.push_back({std::to_string(i), {x}, a, 2.0 + 3.0 * x + a, 1, std::vector<double>{6.0 + 0.1 * (i % 7)}});
  }
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rows = all_rows(data.size());
  const auto elig = evaluate_eligibility(EligibilityRule::threshold("l", Comparator::GreaterEqual, 5), data);
  for (auto s : {Mu0Strategy::SingleModel, Mu0Strategy::Stratify, Mu0Strategy::FullInteractions}) {
    auto spec = glm_spec();
    spec.mu0Strategy = s;
    const auto m = fit_mu0(data, elig, rows, spec, 1);
    const auto p = m.predict(data, rows, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      CHECK(std::abs(p(static_cast<Eigen::Index>(i)) - (2.0 + 3.0 * data[i].lStar[0])) <= 1e-8);
    }
  }
}

TEST_CASE("mu0: stratification without controls") {
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 20; ++i) recs.push_back({std::to_string(i), {double(i)}, 1, 1.0 * i, 1, std::vector<double>{6.0}});
  const CoarsenedDataset data(xs_schema(), recs);
  const auto elig = evaluate_eligibility(EligibilityRule::threshold("l", Comparator::GreaterEqual, 5), data);
  auto spec = glm_spec();
  spec.mu0Strategy = Mu0Strategy::Stratify;
  CHECK(code_of([&] { fit_mu0(data, elig, all_rows(20), spec, 1); }) == ErrorCode::InsufficientControls);
}

TEST_CASE("mu0: omitting treatment interactions biases the counterfactual fit") {
  auto cfg = dgp::DgpConfig::published();
  cfg.n = 20000;
  cfg.seed = 5;
  const auto full = dgp::simulate_full(cfg);
  const auto data = dgp::simulate_dataset(cfg);
  const auto rows = all_rows(data.size());
  const auto elig = evaluate_eligibility(dgp::simulation_rule(), data);
  const dgp::LinearPredictor mu(cfg.betaMu, data.schema());

  auto mse = [&](Mu0Strategy s) {
    auto spec = glm_spec();
    spec.mu0Strategy = s;
    const auto m = fit_mu0(data, elig, rows, spec, 1);
    std::vector<std::size_t> target;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].r == 1 && data[i].a == 1 && *elig[i]) target.push_back(i);
    }
    const auto p = m.predict(data, target, 0);
    double acc = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < target.size(); ++k) {
      const auto i = target[k];
      const double d = p(static_cast<Eigen::Index>(k)) - mu(full[i].lStar, 0, full[i].a1c);
      acc += d * d;
      ++count;
    }
    return acc / count;
  };
  const double single = mse(Mu0Strategy::SingleModel);
  const double inter = mse(Mu0Strategy::FullInteractions);
  INFO("single " << single << " interactions " << inter);
  CHECK(single > 2.0 * inter);
}

TEST_CASE("pseudo-outcomes") {
  Eigen::VectorXd y(3), e(3), mu(3), u(3);
  y << 3.0, 3.0, 1.0;
  e << 1.0, 0.0, 1.0;
  mu << 2.0, 2.0, 0.5;
  u << 0.5, 0.5, 0.995;
  const auto p = build_pseudo_outcomes(y, e, mu, u, 0.005, 0.995);
  CHECK(p.xi(0) == 2.0);
  CHECK(p.gamma(0) == 1.0);
  CHECK(p.chi(0) == 2.0);
  CHECK(p.nu(0) == 1.0);
  CHECK(p.xi(1) == 0.0);
  CHECK(p.gamma(1) == 0.0);
  CHECK(p.chi(1) == 0.0);
  CHECK(p.nu(1) == 0.0);
  CHECK(p.gamma(2) == doctest::Approx(199.0).epsilon(1e-12));
  u(0) = 0.999;
  CHECK(code_of([&] { build_pseudo_outcomes(y, e, mu, u, 0.005, 0.995); }) == ErrorCode::ClipViolation);
}

TEST_CASE("nested: all-zero pseudo-outcome gives a constant zero predictor") {
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 20; ++i) recs.push_back({std::to_string(i), {double(i)}, 1, 1.0 * i, 1, std::vector<double>{6.0}});
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rows = all_rows(20);
  const auto m = fit_nested(NuisanceName::Xi, data, rows, Eigen::VectorXd::Zero(20), glm_spec(), 1);
  CHECK((m.predict(data, rows).array() == 0.0).all());
}

TEST_CASE("crossfit: out-of-fold provenance and clipping") {
  auto cfg = dgp::DgpConfig::published();
  cfg.n = 600;
  cfg.seed = 8;
  const auto data = dgp::simulate_dataset(cfg);
  for (int k : {2, 3, 5}) {
    const auto folds = assign_folds(data.size(), k, 4);
    auto spec = uniform_spec(learners::LearnerSpec::forest(20), learners::LearnerSpec::forest(20));
    std::set<NuisanceName> req = nuisances_for_eif();
    for (auto n : nuisances_for_if()) req.insert(n);
    const auto set = crossfit(data, dgp::simulation_rule(), spec, folds, req, 3);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int j = set.heldOutFold[i];
      CHECK(j == folds.fold[i]);
      const auto& train = set.trainingRows[static_cast<std::size_t>(j)];
      CHECK(std::find(train.begin(), train.end(), i) == train.end());
    }
    for (const Eigen::VectorXd* v : {&set.eta1, &set.eta0, &set.eps1, &set.omega1}) {
      CHECK(v->minCoeff() >= spec.clipLo);
      CHECK(v->maxCoeff() <= spec.clipHi);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].r != 1) continue;
      CHECK(set.u(static_cast<Eigen::Index>(i)) >= spec.clipLo);
      CHECK(set.u(static_cast<Eigen::Index>(i)) <= spec.clipHi);
    }
  }
}

TEST_CASE("crossfit: identical covariates give whole-sample fits") {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> z;
  std::vector<CoarsenedObservation> recs;
  for (int i = 0; i < 400; ++i) {
    const int r = i % 4 == 0 ? 0 : 1;
    CoarsenedObservation o{std::to_string(i), {1.0}, coin(rng) ? 1 : 0, z(rng), r, std::nullopt};
    if (r) o.lEligMissing = std::vector<double>{6.0};
    recs.push_back(o);
  }
  const CoarsenedDataset data(xs_schema(), recs);
  const auto rule = EligibilityRule::threshold("l", Comparator::GreaterEqual, 5);
  auto spec = glm_spec();
  for (auto& [n, m] : spec.models) m.interceptOnly = true;
  const auto folds = assign_folds(data.size(), 2, 1);
  const auto set = crossfit(data, rule, spec, folds, {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0}, 1);
  const auto full = fit_full_sample(data, rule, spec, {NuisanceName::Eta, NuisanceName::U, NuisanceName::Mu0}, 1);
  // Intercept-only fits differ between folds only through sampling; both
  // approximate the pooled value.
  CHECK(std::abs(set.eta1.mean() - full.eta1.mean()) < 0.01);
  const auto rows = all_rows(data.size());
  for (int j = 0; j < 2; ++j) {
    const auto train = folds.complement(j);
    double r = 0;
    for (auto i : train) r += data[i].r;
    for (auto i : folds.members(j)) CHECK(set.eta1(static_cast<Eigen::Index>(i)) == doctest::Approx(r / train.size()));
  }
}

TEST_CASE("crossfit: nested nuisances on the discrete fixture match enumeration") {
  const auto d1 = oracle::make_d1();
  const auto rule = oracle::default_oracle_rule();
  // n = 1e5 leaves the worst-cell error of mu0 and xi at the edge of the
  // 0.02 band (standard error near 0.01), hence 8e5.
  // gamma and chi are odds-weighted (targets up to about 2.2; pseudo-outcome sd
  // about 3 in the high-odds cells), so their band is relative to max(1, |target|).
  const auto data = oracle::sample(d1, 800000, 2024);
  const auto truth = oracle::true_nuisance_set(d1, rule, data);
  auto spec = uniform_spec(saturated(), saturated());
  spec.mu0Strategy = Mu0Strategy::Stratify;
  spec.restrictMuUToEligible = false;
  std::set<NuisanceName> req = nuisances_for_eif();
  for (auto n : nuisances_for_if()) req.insert(n);
  const auto set = crossfit(data, rule, spec, assign_folds(data.size(), 2, 9), req, 5);

  // Each nuisance is compared where the estimating equations use it.
  const auto elig = evaluate_eligibility(rule, data);
  enum class Where { All, CompleteEligible, Treated, Control };
  auto max_err = [&](const Eigen::VectorXd& est, const Eigen::VectorXd& tru, Where w, bool relative = false) {
    double m = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (w == Where::CompleteEligible && elig[i].value_or(0) != 1) continue;
      if (w == Where::Treated && data[i].a != 1) continue;
      if (w == Where::Control && data[i].a != 0) continue;
      const double t = tru(static_cast<Eigen::Index>(i));
      const double d = std::abs(est(static_cast<Eigen::Index>(i)) - t);
      m = std::max(m, relative ? d / std::max(1.0, std::abs(t)) : d);
    }
    return m;
  };
  CHECK(max_err(set.eta1, truth.eta1, Where::All) <= 0.02);
  CHECK(max_err(set.eta0, truth.eta0, Where::All) <= 0.02);
  CHECK(max_err(set.u, truth.u, Where::CompleteEligible) <= 0.02);
  CHECK(max_err(set.mu0, truth.mu0, Where::CompleteEligible) <= 0.02);
  CHECK(max_err(set.eps1, truth.eps1, Where::Treated) <= 0.02);
  CHECK(max_err(set.xi, truth.xi, Where::Treated) <= 0.02);
  CHECK(max_err(set.gamma, truth.gamma, Where::Control, true) <= 0.02);
  CHECK(max_err(set.chi, truth.chi, Where::Control, true) <= 0.02);
  CHECK(max_err(set.nu, truth.nu, Where::Treated) <= 0.02);
  CHECK(max_err(set.omega1, truth.omega1, Where::Treated) <= 0.02);
}

TEST_CASE("crossfit: fold count does not move the EIF estimate beyond Monte Carlo noise") {
  std::vector<double> diff;
  for (int rep = 0; rep < 50; ++rep) {
    auto cfg = dgp::DgpConfig::published();
    cfg.n = 2000;
    cfg.seed = derive_seed(77, static_cast<std::uint64_t>(rep));
    const auto data = dgp::simulate_dataset(cfg);
    auto spec = uniform_spec(LearnerSpec::stack({LearnerSpec::logistic(), LearnerSpec::forest(30, 1.0, 10)}, 3),
                             LearnerSpec::stack({LearnerSpec::ols(), LearnerSpec::forest(30, 1.0, 10)}, 3));
    spec.mu0Strategy = Mu0Strategy::FullInteractions;
    double est[2];
    int idx = 0;
    for (int k : {2, 5}) {
      const auto set = crossfit(data, dgp::simulation_rule(), spec, assign_folds(data.size(), k, cfg.seed),
                                nuisances_for_eif(), cfg.seed);
      est[idx++] = theta_eif(data, dgp::simulation_rule(), set).report.thetaHat;
    }
    diff.push_back(est[0] - est[1]);
  }
  const double m = mean(diff), sd = sample_sd(diff);
  INFO("mean difference " << m << " sd " << sd);
  CHECK(std::abs(m) <= 3.0 * sd / std::sqrt(static_cast<double>(diff.size())));
}
