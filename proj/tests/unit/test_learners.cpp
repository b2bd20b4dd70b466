#include <doctest.h>

#include <cmath>
#include <random>

#include "attelig/error.hpp"
#include "attelig/learners.hpp"
#include "attelig/stats.hpp"
#include "reference.hpp"

using namespace attelig;
using namespace attelig::learners;

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& Z) {
  Eigen::MatrixXd X(Z.rows(), Z.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(Z.cols()) = Z;
  return X;
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd M(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) M(i, j) = z(rng);
  return M;
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

TEST_CASE("ols: hand-solved 2x2 system") {
  Eigen::MatrixXd X(3, 2);
  X << 1, 0, 1, 1, 1, 2;
  Eigen::VectorXd y(3);
  y << 1, 3, 5;
  const auto m = fit_ols(X, y);
  CHECK(m->coefficients()(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m->coefficients()(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ols: constant response gives an intercept-only fit") {
  std::mt19937_64 rng(3);
  const auto X = with_intercept(gaussian_matrix(50, 3, rng));
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(50, 2.5);
  const auto b = fit_ols(X, y)->coefficients();
  CHECK(b(0) == doctest::Approx(2.5).epsilon(1e-12));
  for (Eigen::Index j = 1; j < b.size(); ++j) CHECK(std::abs(b(j)) < 1e-12);
}

TEST_CASE("ols: duplicate column without ridge fallback") {
  std::mt19937_64 rng(4);
  Eigen::MatrixXd X = with_intercept(gaussian_matrix(20, 2, rng));
  X.col(2) = X.col(1);
  const Eigen::VectorXd y = X.col(1) * 3.0;
  FitOptions opts;
  opts.ridgeFallback = false;
  CHECK(code_of([&] { fit_ols(X, y, opts); }) == ErrorCode::RankDeficient);
  CHECK_NOTHROW(fit_ols(X, y));
}

TEST_CASE("ols: agrees with independently solved normal equations") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const Eigen::Index n = 20 + rep * 7, p = 1 + rep % 6;
    const auto X = with_intercept(gaussian_matrix(n, p, rng));
    const Eigen::VectorXd y = gaussian_matrix(n, 1, rng).col(0) + X.col(1) * 0.7;
    FitOptions opts;
    opts.ridgeFallback = false;
    const auto b = fit_ols(X, y, opts)->coefficients();
    const auto ref = testref::normal_equations(X, y);
    for (Eigen::Index j = 0; j < b.size(); ++j) CHECK(std::abs(b(j) - ref[static_cast<std::size_t>(j)]) <= 1e-8);
    const Eigen::VectorXd resid = X.transpose() * (y - X * b);
    const double scale = std::max(1.0, (X.transpose() * y).cwiseAbs().maxCoeff());
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-8 * scale);
  }
}

TEST_CASE("logistic: intercept-only fit recovers the logit of the mean") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
  Eigen::VectorXd y(8);
  y << 1, 0, 0, 0, 1, 0, 0, 0;
  const auto m = fit_logistic(X, y);
  CHECK(m->coefficients()(0) == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-10));
  CHECK(m->coefficients()(0) == doctest::Approx(-1.0986122886681098).epsilon(1e-10));
}

TEST_CASE("logistic: single class and separable data") {
  Eigen::MatrixXd X = with_intercept(Eigen::VectorXd::LinSpaced(10, -1, 1));
  CHECK(code_of([&] { fit_logistic(X, Eigen::VectorXd::Ones(10)); }) == ErrorCode::SingleClass);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) y(i) = X(i, 1) > 0 ? 1.0 : 0.0;
  CHECK(code_of([&] { fit_logistic(X, y); }) == ErrorCode::Separation);
}

TEST_CASE("logistic: score at convergence is within tolerance, predictions inside clip bounds") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index n = 2000;
    const auto X = with_intercept(gaussian_matrix(n, 4, rng));
    Eigen::VectorXd beta(5);
    beta << -0.3, 0.8, -0.5, 0.2, 0.0;
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = u(rng) < expit(X.row(i).dot(beta)) ? 1.0 : 0.0;
    FitOptions opts;
    const auto m = fit_logistic(X, y, opts);
    CHECK(logistic_score_norm(X, y, m->coefficients()) <= 1e-8);
    const auto p = m->predict(X);
    CHECK(p.minCoeff() >= opts.clipLo);
    CHECK(p.maxCoeff() <= opts.clipHi);
  }
}

TEST_CASE("gamma glm: intercept-only fit is the log of the mean") {
  Eigen::VectorXd y(5);
  y << 1.0, 2.0, 0.5, 4.0, 2.5;
  const auto m = fit_gamma_glm(Eigen::MatrixXd::Ones(5, 1), y);
  CHECK(m->coefficients()(0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  y(2) = 0.0;
  CHECK(code_of([&] { fit_gamma_glm(Eigen::MatrixXd::Ones(5, 1), y); }) == ErrorCode::NonPositiveResponse);
}

TEST_CASE("gamma glm: shape recovered within 5% at n = 1e5") {
  std::mt19937_64 rng(20240101);
  const double shape = 4.83;
  const Eigen::Index n = 100000;
  const auto X = with_intercept(gaussian_matrix(n, 2, rng) * 0.3);
  Eigen::VectorXd beta(3);
  beta << 1.06, 0.2, -0.1;
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = std::exp(X.row(i).dot(beta));
    std::gamma_distribution<double> g(shape, mean / shape);
    y(i) = g(rng);
  }
  const auto m = fit_gamma_glm(X, y);
  CHECK(std::abs(m->shape - shape) / shape <= 0.05);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(m->coefficients()(j) - beta(j)) < 0.02);
}

TEST_CASE("forest: degenerate cases") {
  std::mt19937_64 rng(6);
  const auto X = with_intercept(gaussian_matrix(40, 3, rng));
  const auto constant = fit_forest(X, Eigen::VectorXd::Constant(40, 1.75), LearnerSpec::forest(20), TaskKind::Regression);
  CHECK((constant->predict(X).array() == 1.75).all());

  const Eigen::VectorXd y = gaussian_matrix(40, 1, rng).col(0);
  auto spec = LearnerSpec::forest(1, 1.0, 40);
  spec.hyper["replace"] = 0;
  const auto stump = fit_forest(X, y, spec, TaskKind::Regression);
  const auto p = stump->predict(X);
  for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p(i) == doctest::Approx(y.mean()).epsilon(1e-12));
}

TEST_CASE("forest: XOR is learnable") {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin;
  const Eigen::Index n = 400;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = coin(rng);
    X(i, 1) = coin(rng);
    y(i) = X(i, 0) != X(i, 1) ? 1.0 : 0.0;
  }
  auto spec = LearnerSpec::forest(250, 2.0, 1);
  const auto m = fit_forest(X, y, spec, TaskKind::Probability);
  const auto p = m->predict(X);
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) correct += (p(i) > 0.5) == (y(i) == 1.0);
  CHECK(correct / static_cast<double>(n) >= 0.95);
}

TEST_CASE("forest: predictions stay inside the response range and clip bounds") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 5; ++rep) {
    const auto X = with_intercept(gaussian_matrix(300, 4, rng));
    const Eigen::VectorXd y = (X.col(1).array() * 2.0 + X.col(2).array().square()).matrix();
    FitOptions opts;
    opts.seed = static_cast<std::uint64_t>(rep);
    const auto m = fit_forest(X, y, LearnerSpec::forest(30, 1.0, 3), TaskKind::Regression, opts);
    const auto Xnew = with_intercept(gaussian_matrix(200, 4, rng) * 3.0);
    const auto p = m->predict(Xnew);
    CHECK(p.minCoeff() >= y.minCoeff());
    CHECK(p.maxCoeff() <= y.maxCoeff());

    Eigen::VectorXd b(300);
    for (Eigen::Index i = 0; i < 300; ++i) b(i) = X(i, 1) > 0.0 ? 1.0 : 0.0;
    const auto c = fit_forest(X, b, LearnerSpec::forest(30, 1.0, 1), TaskKind::Probability, opts);
    const auto q = c->predict(Xnew);
    CHECK(q.minCoeff() >= opts.clipLo);
    CHECK(q.maxCoeff() <= opts.clipHi);
  }
}

TEST_CASE("learners are deterministic given data, hyperparameters and seed") {
  std::mt19937_64 rng(10);
  const auto X = with_intercept(gaussian_matrix(200, 3, rng));
  const Eigen::VectorXd y = X.col(1) + gaussian_matrix(200, 1, rng).col(0);
  FitOptions opts;
  opts.seed = 42;
  const auto stack = LearnerSpec::stack({LearnerSpec::ols(), LearnerSpec::forest(20)}, 3);
  const auto a = fit(stack, X, y, TaskKind::Regression, opts)->predict(X);
  const auto b = fit(stack, X, y, TaskKind::Regression, opts)->predict(X);
  CHECK((a.array() == b.array()).all());
}

TEST_CASE("stack: linear data favours OLS") {
  std::mt19937_64 rng(12);
  const auto X = with_intercept(gaussian_matrix(500, 3, rng));
  const Eigen::VectorXd y = 1.0 + 2.0 * X.col(1).array() - X.col(2).array() + 0.5 * X.col(3).array();
  const auto m = fit_stack(X, y, {LearnerSpec::ols(), LearnerSpec::forest(50)}, 5, TaskKind::Regression);
  CHECK(m->weights()(0) >= 0.9);
}

TEST_CASE("stack: a sole surviving member carries all the weight") {
  Eigen::MatrixXd X = with_intercept(Eigen::VectorXd::LinSpaced(60, -1, 1));
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) y(i) = X(i, 1) > 0 ? 1.0 : 0.0;
  const auto m = fit_stack(X, y, {LearnerSpec::logistic(), LearnerSpec::forest(20)}, 3, TaskKind::Probability);
  CHECK(m->weights()(0) == 0.0);
  CHECK(m->weights()(1) == 1.0);
  CHECK(std::isnan(m->member_cv_risk()(0)));
}

TEST_CASE("stack: weights on the simplex, CV risk no worse than any member") {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 8; ++rep) {
    const auto X = with_intercept(gaussian_matrix(300, 3, rng));
    const Eigen::VectorXd y = (X.col(1).array().sin() + 0.3 * X.col(2).array() +
                               0.2 * gaussian_matrix(300, 1, rng).col(0).array())
                                  .matrix();
    FitOptions opts;
    opts.seed = static_cast<std::uint64_t>(rep);
    const auto m = fit_stack(X, y, {LearnerSpec::ols(), LearnerSpec::forest(30), LearnerSpec::forest(30, 0.5, 20)}, 4,
                             TaskKind::Regression, opts);
    CHECK((m->weights().array() >= 0.0).all());
    CHECK(std::abs(m->weights().sum() - 1.0) <= 1e-10);
    for (Eigen::Index k = 0; k < m->member_cv_risk().size(); ++k) {
      CHECK(m->stack_cv_risk() <= m->member_cv_risk()(k) + 1e-9);
    }
  }
}

TEST_CASE("simplex least squares matches the two-member closed form") {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 30; ++rep) {
    const auto Z = gaussian_matrix(50, 2, rng);
    const Eigen::VectorXd y = 0.4 * Z.col(0) + 0.3 * Z.col(1) + gaussian_matrix(50, 1, rng).col(0) * (rep % 3);
    const auto w = simplex_least_squares(Z, y);
    const double ref = testref::two_member_simplex_weight(Z, y);
    CHECK(std::abs(w(0) - ref) <= 1e-8);
    CHECK(std::abs(w.sum() - 1.0) <= 1e-10);
  }
}

TEST_CASE("simplex projection") {
  Eigen::VectorXd v(3);
  v << 0.2, 0.3, 0.5;
  CHECK((project_to_simplex(v) - v).norm() < 1e-15);
  v << 5.0, -1.0, 0.0;
  const auto p = project_to_simplex(v);
  CHECK(p(0) == doctest::Approx(1.0));
  CHECK(p(1) == 0.0);
  v << 1.0, 1.0, -3.0;
  const auto q = project_to_simplex(v);
  CHECK(q(0) == doctest::Approx(0.5));
  CHECK(q(1) == doctest::Approx(0.5));
  CHECK(q(2) == 0.0);
}
