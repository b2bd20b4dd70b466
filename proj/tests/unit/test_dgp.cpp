#include <doctest.h>

#include <cmath>

#include "attelig/dgp.hpp"
#include "attelig/error.hpp"
#include "attelig/learners.hpp"
#include "attelig/simulation.hpp"
#include "attelig/stats.hpp"

using namespace attelig;

namespace {

dgp::DgpConfig published(std::size_t n, std::uint64_t seed) {
  auto c = dgp::DgpConfig::published();
  c.n = n;
  c.seed = seed;
  return c;
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

TEST_CASE("dgp: default marginals at n = 1e5") {
  const auto data = dgp::simulate_dataset(published(100000, 2024));
  const auto elig = evaluate_eligibility(dgp::simulation_rule(), data);
  double treated = 0, complete = 0, eligible = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    treated += data[i].a;
    complete += data[i].r;
    eligible += elig[i].value_or(0);
  }
  const double n = static_cast<double>(data.size());
  INFO("treated " << treated / n << " complete " << complete / n << " eligible|complete " << eligible / complete);
  CHECK(std::abs(treated / n - 0.62) <= 0.02);
  CHECK(std::abs(complete / n - 0.70) <= 0.02);
  CHECK(std::abs(eligible / complete - 0.57) <= 0.02);
}

TEST_CASE("dgp: masked exactly when incomplete, deterministic per seed") {
  const auto a = dgp::simulate_dataset(published(2000, 5));
  for (const auto& r : a.records()) CHECK(r.lEligMissing.has_value() == (r.r == 1));
  const auto b = dgp::simulate_dataset(published(2000, 5));
  CHECK(to_csv(a) == to_csv(b));
  const auto c = dgp::simulate_dataset(published(2000, 6));
  CHECK(to_csv(a) != to_csv(c));
}

TEST_CASE("dgp: missingness does not depend on the outcome or the eligibility covariate") {
  const auto cfg = published(100000, 99);
  const auto full = dgp::simulate_full(cfg);
  std::vector<CoarsenedObservation> recs;
  recs.reserve(full.size());
  Eigen::VectorXd r(static_cast<Eigen::Index>(full.size()));
  for (std::size_t i = 0; i < full.size(); ++i) {
    recs.push_back({std::to_string(i), full[i].lStar, full[i].a, full[i].y, 1, std::vector<double>{full[i].a1c}});
    r(static_cast<Eigen::Index>(i)) = full[i].r;
  }
  const CoarsenedDataset data(dgp::simulation_schema(), recs);
  std::vector<std::size_t> rows(data.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  FeatureSpec fs;
  fs.includeElig = fs.includeTreatment = fs.includeOutcome = true;
  const auto X = build_design(data, rows, fs);
  const auto m = learners::fit_logistic(X.values, r);
  const Eigen::VectorXd p = (X.values * m->coefficients()).unaryExpr([](double v) { return expit(v); });
  const Eigen::MatrixXd info = X.values.transpose() * (p.array() * (1.0 - p.array())).matrix().asDiagonal() * X.values;
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const auto& name = X.columns[static_cast<std::size_t>(j)].name;
    if (name != "y" && name != "baseline_a1c") continue;
    INFO(name << " z = " << m->coefficients()(j) / se(j));
    CHECK(std::abs(m->coefficients()(j)) <= 3.0 * se(j));
  }
}

TEST_CASE("dgp: shifted A1c has the modelled gamma mean") {
  const auto cfg = published(200000, 7);
  const auto full = dgp::simulate_full(cfg);
  const dgp::LinearPredictor lambda(cfg.betaLambda, dgp::simulation_schema());
  std::vector<double> ratio;
  for (const auto& f : full) ratio.push_back((f.a1c - 3.0) / std::exp(lambda(f.lStar, f.a, 0.0)));
  // (A1c - 3) / mean ~ Gamma(alpha, 1/alpha): mean 1, sd 1/sqrt(alpha).
  const double mcse = 1.0 / std::sqrt(cfg.alphaLambda * static_cast<double>(ratio.size()));
  CHECK(std::abs(mean(ratio) - 1.0) <= 3.0 * mcse);
  CHECK(std::abs(sample_sd(ratio) - 1.0 / std::sqrt(cfg.alphaLambda)) <= 0.01);
}

TEST_CASE("dgp: configuration validation") {
  auto c = dgp::DgpConfig::published();
  c.alphaLambda = 0.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = dgp::DgpConfig::published();
  c.sigmaY2 = -1.0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = dgp::DgpConfig::published();
  c.lStar.site = {0.5, 0.4, 0.2};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = dgp::DgpConfig::published();
  c.betaEta.push_back({"baseline_a1c", 0.1});
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::InvalidConfig);
  c = dgp::DgpConfig::published();
  c.betaMu.push_back({"no_such_column", 0.1});
  CHECK_THROWS(c.validate());
}

TEST_CASE("true theta: null effect") {
  auto c = dgp::DgpConfig::published();
  std::erase_if(c.betaMu, [](const auto& t) { return t.first.find("bs_type") != std::string::npos; });
  const auto t = dgp::true_theta(c, 1'000'000);
  CHECK(t.value == 0.0);
}

TEST_CASE("true theta: doubling the draw count stays within Monte Carlo error") {
  const auto c = dgp::DgpConfig::published();
  const auto a = dgp::true_theta(c, 1'000'000, 11);
  const auto b = dgp::true_theta(c, 2'000'000, 11);
  CHECK(a.mcse <= 1e-4);
  CHECK(std::abs(a.value - b.value) <= 3.0 * a.mcse);
  CHECK(code_of([&] { dgp::true_theta(c, 999'999); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("true theta: pinned reference value reproduces") {
  const auto t = dgp::true_theta(dgp::DgpConfig::published(), dgp::kPinnedOracleN, dgp::kThetaTrueSeed);
  INFO("recomputed " << format_double(t.value) << " mcse " << t.mcse);
  CHECK(std::abs(t.value - dgp::kPinnedThetaTrue) <= 1e-12);
  CHECK(t.mcse <= 1e-4);
  CHECK(t.oracleN == dgp::kPinnedOracleN);
}

TEST_CASE("simulation: a single replication has no SD and no coverage claim") {
  sim::SimulationConfig c;
  c.dgp = published(1500, 4);
  c.nReps = 1;
  c.thetaTrue = dgp::kPinnedThetaTrue;
  c.variants = sim::default_variants(2, 0);
  c.threads = 1;
  const auto s = sim::run_simulation(c);
  for (const auto& row : s.rows) {
    CHECK_FALSE(row.sd.has_value());
    CHECK(row.nOk + row.nFailed == 1);
  }
  const auto j = s.to_json();
  for (const auto& row : j["rows"]) CHECK(row["sd"].is_null());
}

TEST_CASE("simulation: results do not depend on the thread count") {
  sim::SimulationConfig c;
  c.dgp = published(1000, 21);
  c.nReps = 6;
  c.thetaTrue = dgp::kPinnedThetaTrue;
  c.variants = sim::default_variants(2, 0);
  c.threads = 1;
  const auto serial = sim::run_simulation(c).to_json().dump();
  c.threads = 3;
  const auto threaded = sim::run_simulation(c).to_json().dump();
  CHECK(serial == threaded);
}

TEST_CASE("simulation: coverage in [0, 1] and bias definition") {
  sim::SimulationConfig c;
  c.dgp = published(1500, 8);
  c.nReps = 4;
  c.thetaTrue = dgp::kPinnedThetaTrue;
  c.variants = sim::default_variants(2, 0);
  c.threads = 1;
  const auto s = sim::run_simulation(c);
  REQUIRE(s.rows.size() == s.estimates.size());
  for (std::size_t k = 0; k < s.rows.size(); ++k) {
    const auto& row = s.rows[k];
    if (row.coverage) {
      CHECK(*row.coverage >= 0.0);
      CHECK(*row.coverage <= 1.0);
    }
    const double m = mean(s.estimates[k]);
    CHECK(row.meanEstimate == doctest::Approx(m).epsilon(1e-12));
    CHECK(row.percentBias == doctest::Approx(100.0 * (m - s.thetaTrue) / s.thetaTrue).epsilon(1e-10));
  }
}
