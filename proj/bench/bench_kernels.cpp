// Parallel / cached kernels against their serial references.

#include <benchmark/benchmark.h>

#include <memory>

#include "adprune/ab_test.hpp"
#include "adprune/trainer.hpp"

using namespace adprune;

namespace {

struct Env {
  World world = generate_world(WorldConfig{}, 1);
  UpstreamConfig upstream;
  EnvConfig env;
  std::shared_ptr<const PolicySnapshot> snapshot;
  Query query;
  CandidateSet candidates;
  Env() {
    TrainConfig tc;
    tc.schema_fit_queries = 50;
    snapshot = std::make_shared<const PolicySnapshot>(snapshot_of(initial_checkpoint(world, upstream, tc)));
    query = query_at(world, 1, stream_tag("bench"), 0);
    candidates = retrieve(world, query, upstream);
  }
};

const Env& env() {
  static const Env e;
  return e;
}

void BM_SelectCached(benchmark::State& state) {
  const auto& e = env();
  const AgentConfig agent{100, static_cast<std::uint32_t>(state.range(0))};
  for (auto _ : state) {
    RandomStream rng(3);
    benchmark::DoNotOptimize(select_candidates(*e.snapshot, e.query, e.candidates, agent, SelectionMode::kSample, rng));
  }
}
BENCHMARK(BM_SelectCached)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

void BM_SelectReference(benchmark::State& state) {
  const auto& e = env();
  const AgentConfig agent{100, static_cast<std::uint32_t>(state.range(0))};
  for (auto _ : state) {
    RandomStream rng(3);
    benchmark::DoNotOptimize(
        select_candidates_reference(*e.snapshot, e.query, e.candidates, agent, SelectionMode::kSample, rng));
  }
}
BENCHMARK(BM_SelectReference)->Arg(0)->Arg(3)->Unit(benchmark::kMillisecond);

template <bool Reference>
void BM_EpisodeGradient(benchmark::State& state) {
  const auto& e = env();
  RandomStream rng(3);
  const auto sel = select_candidates(*e.snapshot, e.query, e.candidates, AgentConfig{100, 0}, SelectionMode::kSample, rng);
  std::vector<double> w(sel.trajectory.actions.size(), 0.0);
  for (std::size_t t = 0; t < w.size(); t += 2) w[t] = 0.1;
  for (auto _ : state) {
    PolicyParams g(e.snapshot->params.feature_len(), e.snapshot->params.hidden_dim());
    if constexpr (Reference) {
      accumulate_episode_gradient_reference(*e.snapshot, e.query, e.candidates, sel.trajectory, w, 0, g);
    } else {
      accumulate_episode_gradient(*e.snapshot, e.query, e.candidates, sel.trajectory, w, 0, g);
    }
    benchmark::DoNotOptimize(g);
  }
}
BENCHMARK_TEMPLATE(BM_EpisodeGradient, false)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_EpisodeGradient, true)->Unit(benchmark::kMillisecond);

std::vector<PolicySpec> ab_policies() {
  return {{"agent", PolicyKind::kAgent, env().snapshot, 0},
          {"ectr-bid", PolicyKind::kEctrBid, nullptr, 0},
          {"ectr-bid-srq", PolicyKind::kEctrBidSrq, nullptr, 0},
          {"random", PolicyKind::kRandom, nullptr, 0}};
}

void BM_AbTestParallel(benchmark::State& state) {
  const auto& e = env();
  const auto policies = ab_policies();
  AbConfig cfg;
  cfg.num_queries = 256;
  cfg.workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ab_test(e.world, policies, e.upstream, e.env, cfg));
}
BENCHMARK(BM_AbTestParallel)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_AbTestSerial(benchmark::State& state) {
  const auto& e = env();
  const auto policies = ab_policies();
  AbConfig cfg;
  cfg.num_queries = 256;
  for (auto _ : state) benchmark::DoNotOptimize(ab_test_serial(e.world, policies, e.upstream, e.env, cfg));
}
BENCHMARK(BM_AbTestSerial)->Unit(benchmark::kMillisecond)->UseRealTime();

// One update of 32 episodes; workers = episode threads and gradient threads.
void BM_TrainUpdate(benchmark::State& state) {
  const auto& e = env();
  TrainConfig tc;
  tc.batch_size = 32;
  tc.max_steps = 1;
  tc.eval_every = 0;
  tc.schema_fit_queries = 20;
  tc.workers = static_cast<std::uint32_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train(e.world, e.upstream, e.env, AgentConfig{}, tc));
}
BENCHMARK(BM_TrainUpdate)->Arg(0)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
