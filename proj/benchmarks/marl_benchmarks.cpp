#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "marl/neural.hpp"
#include "marl/ppo.hpp"
#include "marl/spread_env.hpp"
#include "marl/trainers.hpp"

using namespace marl;

namespace {

void BM_EnvStep(benchmark::State& state) {
  const env::SpreadEnv env(env::EnvConfig{});
  Rng rng = make_rng(1, 0);
  std::uniform_int_distribution<int> action(0, env::kNumActions - 1);
  env::WorldState s = env.reset(1);
  std::vector<env::ActionId> actions(3);
  for (auto _ : state) {
    if (s.step_index == env.config().max_steps) s = env.reset(rng());
    for (auto& a : actions) a = action(rng);
    auto r = env.step(s, actions);
    s = std::move(r.state);
    benchmark::DoNotOptimize(r.outcome.distance_reward);
  }
}
BENCHMARK(BM_EnvStep);

void BM_Observe(benchmark::State& state) {
  const env::SpreadEnv env(env::EnvConfig{});
  const env::WorldState s = env.reset(3);
  std::vector<double> obs(env.observation_size());
  for (auto _ : state) {
    env.observe_into(s, 1, obs);
    benchmark::DoNotOptimize(obs.data());
  }
}
BENCHMARK(BM_Observe);

nn::MlpSpec spec_for(int which) {
  switch (which) {
    case 0: return train::actor_spec(18, 5);
    case 1: return train::critic_spec(54);
    default: return train::shaper_spec(18, 5);
  }
}

void BM_MlpForward(benchmark::State& state) {
  Rng rng = make_rng(2, 0);
  const auto spec = spec_for(static_cast<int>(state.range(0)));
  const auto params = nn::init_params(spec, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  std::vector<double> input(spec.input_size(), 0.3);
  nn::ForwardCache cache;
  for (auto _ : state) {
    auto out = nn::forward(params, input, cache);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_MlpForward)->Arg(0)->Arg(1)->Arg(2);

void BM_MlpBackward(benchmark::State& state) {
  Rng rng = make_rng(2, 0);
  const auto spec = spec_for(static_cast<int>(state.range(0)));
  const auto params = nn::init_params(spec, nn::InitScheme::kOrthogonalGainSqrt2, rng);
  std::vector<double> input(spec.input_size(), 0.3);
  std::vector<double> upstream(spec.output_size(), 1.0);
  std::vector<double> grad(params.size(), 0.0);
  nn::ForwardCache cache;
  nn::forward(params, input, cache);
  for (auto _ : state) {
    nn::backward(params, cache, upstream, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_MlpBackward)->Arg(0)->Arg(1)->Arg(2);

void BM_Gae(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng = make_rng(3, 0);
  std::normal_distribution<double> normal;
  std::vector<double> r(n), v(n);
  for (auto& x : r) x = normal(rng);
  for (auto& x : v) x = normal(rng);
  std::vector<std::uint8_t> d(n, 0);
  for (std::size_t t = 24; t < n; t += 25) d[t] = 1;
  for (auto _ : state) {
    auto est = ppo::compute_gae(r, v, d, 0.99, 0.95);
    ppo::normalize_advantages(est);
    benchmark::DoNotOptimize(est.advantages.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Gae)->Arg(250)->Arg(2500);

void BM_TrainingIteration(benchmark::State& state) {
  const auto algo = static_cast<train::Algorithm>(state.range(0));
  auto config = train::TrainRunConfig::defaults_for(algo);
  config.episodes = 1'000'000;
  train::TrainingRun run(config, 42);
  for (auto _ : state) {
    auto metrics = run.iterate();
    benchmark::DoNotOptimize(metrics.data());
  }
  state.SetLabel(std::string(train::to_string(algo)) + ", 10 episodes per iteration");
}
BENCHMARK(BM_TrainingIteration)
    ->Arg(static_cast<int>(train::Algorithm::kMappo))
    ->Arg(static_cast<int>(train::Algorithm::kIppo))
    ->Arg(static_cast<int>(train::Algorithm::kDmarlRsa))
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
