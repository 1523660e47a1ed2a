#include <benchmark/benchmark.h>

#include "rodif/cut_oracle.hpp"
#include "rodif/losses.hpp"
#include "rodif/trainer_eval.hpp"

using namespace rodif;

namespace {

const std::vector<double> kCondition{0.0, 0.0, 0.0, 1.875};

nn::Mlp policy_net() {
  Rng rng(1);
  return nn::Mlp::make({7, 64, 64, 2}, rng);
}

void BM_MlpForward(benchmark::State& state) {
  const auto net = policy_net();
  const std::vector<double> x{0.1, -0.2, 0.5, 0.0, 0.0, 0.0, 0.47};
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_MlpForward);

void BM_SampleChain(benchmark::State& state) {
  const auto net = policy_net();
  const auto sched = diffusion::make_schedule(static_cast<int>(state.range(0)), 1e-4, 0.4);
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::sample_chain(net, kCondition, sched, rng));
}
BENCHMARK(BM_SampleChain)->Arg(5)->Arg(20);

void BM_ChainLogProbGradient(benchmark::State& state) {
  const auto net = policy_net();
  const auto sched = diffusion::make_schedule(20, 1e-4, 0.4);
  Rng rng(3);
  const auto chain = diffusion::sample_chain(net, kCondition, sched, rng);
  std::vector<double> grad(net.param_count());
  for (auto _ : state) benchmark::DoNotOptimize(diffusion::chain_log_prob(net, chain, sched, 1.0, grad));
}
BENCHMARK(BM_ChainLogProbGradient);

// One 64-pair batch of the preference objective with its gradient.
void BM_ObjectiveBatch(benchmark::State& state) {
  const auto kind = state.range(0) == 0 ? loss::LossKind::RoDiF : loss::LossKind::DpDpo;
  const auto ref = policy_net();
  const auto sched = diffusion::make_schedule(20, 1e-4, 0.4);
  auto env = mdp::EnvConfig::avoid_default();
  env.max_steps = 12;
  prefs::TrajectoryStore store;
  for (const auto& t : mdp::rollouts(ref, env, sched, 16, Rng(4))) store.add(t);
  std::vector<std::size_t> w{0, 1, 2, 3, 4, 5, 6, 7}, l{8, 9, 10, 11, 12, 13, 14, 15};
  const auto pairs = prefs::observed(prefs::pair_cartesian(w, l));
  loss::LossConfig cfg;
  cfg.gamma = 0.4;
  const loss::PreferenceObjective obj(ref, store, sched, kind, cfg);
  auto net = ref;
  for (double& p : net.params()) p *= 1.01;
  std::vector<double> grad(net.param_count());
  for (auto _ : state) benchmark::DoNotOptimize(obj.evaluate(net, pairs, grad));
  state.SetLabel(loss::to_string(kind));
}
BENCHMARK(BM_ObjectiveBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VoteCounts(benchmark::State& state) {
  const auto res = static_cast<std::size_t>(state.range(0));
  const auto grid = cuts::GridSpace::square(2, -1.0, 1.0, res);
  Rng rng(5);
  const std::vector<double> theta{0.1, 0.2};
  const auto cs = cuts::make_cuts(theta, 10, 3, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cuts::vote_counts(grid, cs));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * grid.size() * cs.size()));
}
BENCHMARK(BM_VoteCounts)->Arg(101)->Arg(201);

void BM_Evaluate(benchmark::State& state) {
  const auto net = policy_net();
  const auto sched = diffusion::make_schedule(20, 1e-4, 0.4);
  const auto env = mdp::EnvConfig::avoid_default();
  for (auto _ : state) benchmark::DoNotOptimize(train::evaluate(net, env, sched, 20, 6, mdp::Mode::Left));
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
