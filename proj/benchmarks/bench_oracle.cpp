#include <benchmark/benchmark.h>

#include "attelig/oracle.hpp"

using namespace attelig::oracle;

namespace {

void BM_IdentityChecks(benchmark::State& s) {
  const auto d = random_mar_distribution(static_cast<std::uint64_t>(s.range(0)));
  for (auto _ : s) benchmark::DoNotOptimize(run_identity_checks(d, default_oracle_rule()));
}
BENCHMARK(BM_IdentityChecks)->Arg(1);

void BM_TrueAtteD1(benchmark::State& s) {
  const auto d = make_d1();
  for (auto _ : s) benchmark::DoNotOptimize(enumerate_true_atte(d, default_oracle_rule()));
}
BENCHMARK(BM_TrueAtteD1);

}  // namespace

BENCHMARK_MAIN();
