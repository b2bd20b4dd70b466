#include <benchmark/benchmark.h>

#include <random>

#include "attelig/learners.hpp"

using namespace attelig::learners;

namespace {

struct Problem {
  Eigen::MatrixXd X;
  Eigen::VectorXd y, yb;
};

Problem make(Eigen::Index n, Eigen::Index p) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Problem pr{Eigen::MatrixXd(n, p), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    pr.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) pr.X(i, j) = z(rng);
    pr.y(i) = pr.X(i, 1) - 0.5 * pr.X(i, 2) + z(rng);
    pr.yb(i) = std::bernoulli_distribution(1.0 / (1.0 + std::exp(-pr.X(i, 1))))(rng) ? 1.0 : 0.0;
  }
  return pr;
}

void BM_Ols(benchmark::State& s) {
  const auto pr = make(s.range(0), 15);
  for (auto _ : s) benchmark::DoNotOptimize(fit_ols(pr.X, pr.y));
}
BENCHMARK(BM_Ols)->Arg(2500)->Arg(10000);

void BM_Logistic(benchmark::State& s) {
  const auto pr = make(s.range(0), 15);
  for (auto _ : s) benchmark::DoNotOptimize(fit_logistic(pr.X, pr.yb));
}
BENCHMARK(BM_Logistic)->Arg(2500)->Arg(10000);

void BM_Forest(benchmark::State& s) {
  const auto pr = make(s.range(0), 15);
  const auto spec = LearnerSpec::forest(50, 1.0, 10);
  for (auto _ : s) benchmark::DoNotOptimize(fit_forest(pr.X, pr.y, spec, TaskKind::Regression));
}
BENCHMARK(BM_Forest)->Arg(2500)->Unit(benchmark::kMillisecond);

void BM_Stack(benchmark::State& s) {
  const auto pr = make(s.range(0), 15);
  const std::vector<LearnerSpec> members{LearnerSpec::logistic(), LearnerSpec::forest(50, 1.0, 10)};
  for (auto _ : s) benchmark::DoNotOptimize(fit_stack(pr.X, pr.yb, members, 3, TaskKind::Probability));
}
BENCHMARK(BM_Stack)->Arg(2500)->Unit(benchmark::kMillisecond);

}  // namespace
