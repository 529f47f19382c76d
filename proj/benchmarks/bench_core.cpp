#include <benchmark/benchmark.h>

#include <random>

#include "usc/agent.hpp"
#include "usc/replay.hpp"
#include "usc/uncertainty.hpp"

using namespace usc;

namespace {

NetworkParameters critic(int hidden) {
  Rng rng(1);
  return NetworkParameters::initialized(
      NetworkSpec::mlp(14, {hidden, hidden}, 1, Activation::relu, Activation::identity), rng);
}

void BM_ForwardBackward(benchmark::State& state) {
  const auto p = critic(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(14, 64);
  const Eigen::MatrixXd dy = Eigen::MatrixXd::Ones(1, 64);
  ForwardTape tape;
  for (auto _ : state) {
    forward_tape(p, x, tape);
    benchmark::DoNotOptimize(backward(p, tape, dy).param_grad.data());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(256);

void BM_GramInfluence(benchmark::State& state) {
  const auto p = critic(32);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(14, state.range(0));
  for (auto _ : state) {
    const GramInfluence gi(p, x, InfluenceConfig{});
    benchmark::DoNotOptimize(gi.reference_scores().data());
  }
}
BENCHMARK(BM_GramInfluence)->Arg(64)->Arg(256);

void BM_KnnBatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  ReplayBuffer buf(n, 12, 2);
  Rng rng(2);
  std::normal_distribution<double> g(0, 1);
  auto vec = [&](int d) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = g(rng);
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) buf.push({vec(12), vec(2), 0.0, 0.0, vec(12), false});
  const Scaler sc = buf.fit_scaler();
  const Eigen::MatrixXd q = Eigen::MatrixXd::Random(14, 4);
  for (auto _ : state) benchmark::DoNotOptimize(buf.knn_batch(q, 5, sc).data());
}
BENCHMARK(BM_KnnBatch)->Arg(10000)->Arg(100000);

void BM_TrainingEpisode(benchmark::State& state) {
  EnvConfig env;
  AgentConfig agent;
  agent.method = static_cast<Method>(state.range(0));
  agent.warmup_batches = 1;
  Trainer t(env, agent, 3);
  t.train(2);
  for (auto _ : state) benchmark::DoNotOptimize(t.run_episode().reward);
}
BENCHMARK(BM_TrainingEpisode)
    ->Arg(static_cast<int>(Method::ddpg))
    ->Arg(static_cast<int>(Method::csc))
    ->Arg(static_cast<int>(Method::usc))
    ->Unit(benchmark::kMillisecond)
    ->Iterations(3);

}  // namespace

BENCHMARK_MAIN();
