#include <benchmark/benchmark.h>

#include "attelig/dgp.hpp"
#include "attelig/estimators.hpp"
#include "attelig/simulation.hpp"
#include "attelig/stats.hpp"

using namespace attelig;

namespace {

void BM_CrossfitStack(benchmark::State& s) {
  auto c = dgp::DgpConfig::published();
  c.n = static_cast<std::size_t>(s.range(0));
  c.seed = 3;
  const auto data = dgp::simulate_dataset(c);
  const auto spec = sim::stack_nuisance_spec();
  const auto folds = assign_folds(data.size(), 2, 5);
  for (auto _ : s) {
    benchmark::DoNotOptimize(crossfit(data, dgp::simulation_rule(), spec, folds, nuisances_for_eif(), 7));
  }
}
BENCHMARK(BM_CrossfitStack)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_Replication(benchmark::State& s) {
  sim::SimulationConfig c;
  c.dgp = dgp::DgpConfig::published();
  c.dgp.n = 5000;
  c.nReps = 1;
  c.thetaTrue = dgp::kPinnedThetaTrue;
  c.variants = sim::default_variants(2, 0);
  c.threads = 1;
  for (auto _ : s) benchmark::DoNotOptimize(sim::run_simulation(c));
}
BENCHMARK(BM_Replication)->Unit(benchmark::kMillisecond);

}  // namespace
