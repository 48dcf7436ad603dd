#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "json.hpp"

#include "support.hpp"

#include "adprune/errors.hpp"
#include "adprune/trainer.hpp"

using namespace adprune;
namespace fs = std::filesystem;

namespace {

struct Scenario {
  World world = generate_world(fixtures::small_world_config(), 31);
  UpstreamConfig upstream = fixtures::small_upstream();
  EnvConfig env;
  AgentConfig agent{20, 0};
  TrainConfig config;
  Scenario() {
    config.hidden_dim = 8;
    config.learning_rate = 1e-2;
    config.batch_size = 8;
    config.states_per_query = 10;
    config.max_steps = 3;
    config.eval_every = 0;
    config.schema_fit_queries = 10;
    config.seed = 5;
  }
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("adprune_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Trajectory trajectory_with(QueryId q, std::vector<CandidateId> picks) {
  Trajectory t;
  t.query_id = q;
  for (std::size_t i = 0; i < picks.size(); ++i) {
    ActionRecord a;
    a.step = static_cast<std::uint32_t>(i + 1);
    a.chosen_candidate_id = picks[i];
    a.log_prob = -0.5 * static_cast<double>(i + 1);
    t.actions.push_back(a);
    t.selected_candidate_ids.push_back(picks[i]);
  }
  return t;
}

RewardRecord reward_for(QueryId q, std::vector<std::pair<CandidateId, double>> shown) {
  RewardRecord r;
  r.query_id = q;
  r.shown = std::move(shown);
  for (const auto& s : r.shown) r.episode_reward += s.second;
  return r;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(BoundedQueue, FifoAndClose) {
  BoundedQueue<int> q(2);
  EXPECT_TRUE(q.push(1));
  EXPECT_TRUE(q.push(2));
  EXPECT_EQ(*q.pop(), 1);
  EXPECT_TRUE(q.push(3));
  q.close();
  EXPECT_FALSE(q.push(4));
  EXPECT_EQ(*q.pop(), 2);
  EXPECT_EQ(*q.pop(), 3);
  EXPECT_FALSE(q.pop().has_value());
  EXPECT_EQ(BoundedQueue<int>(0).capacity(), 1u);
}

TEST(BoundedQueue, ProducersAndConsumersUnderBackPressure) {
  BoundedQueue<int> q(3);
  std::atomic<long> sum{0};
  std::atomic<int> count{0};
  std::vector<std::thread> consumers;
  for (int c = 0; c < 3; ++c)
    consumers.emplace_back([&] {
      while (auto v = q.pop()) {
        sum += *v;
        ++count;
      }
    });
  std::vector<std::thread> producers;
  for (int p = 0; p < 4; ++p)
    producers.emplace_back([&, p] {
      for (int i = 0; i < 500; ++i) q.push(p * 1000 + i);
    });
  for (auto& t : producers) t.join();
  q.close();
  for (auto& t : consumers) t.join();
  EXPECT_EQ(count.load(), 2000);
  long want = 0;
  for (int p = 0; p < 4; ++p)
    for (int i = 0; i < 500; ++i) want += p * 1000 + i;
  EXPECT_EQ(sum.load(), want);
}

TEST(ShapeRewards, MapsShownEcpmBackToSteps) {
  const auto t = trajectory_with(9, {10, 11, 12, 13, 14});
  const auto r = reward_for(9, {{14, 0.3}, {11, 0.1}});
  const auto s = shape_rewards(t, r);
  EXPECT_EQ(s.raw, (std::vector<double>{0, 0.1, 0, 0, 0.3}));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(s.training[i], std::log1p(s.raw[i]));
  EXPECT_EQ(exact_sum(s.raw), r.episode_reward);
  const auto none = shape_rewards(t, reward_for(9, {}));
  for (double v : none.raw) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(shape_rewards(t, reward_for(8, {})), IntegrityError);
}

TEST(ShapeRewards, RawRewardsSumToEpisodeRewardOnRealEpisodes) {
  Scenario s;
  const auto ckpt = initial_checkpoint(s.world, s.upstream, s.config);
  const auto snap = snapshot_of(ckpt);
  for (QueryId i = 0; i < 50; ++i) {
    RandomStream rng(i);
    const Query q = query_at(s.world, 2, 2, i);
    const auto ep = run_episode(s.world, snap, q, s.upstream, s.env, s.agent, SelectionMode::kSample, rng);
    if (ep.trajectory.pass_through) continue;
    const auto shaped = shape_rewards(ep.trajectory, ep.outcome);
    ASSERT_EQ(exact_sum(shaped.raw), ep.outcome.episode_reward);
  }
}

TEST(JoinLogs, InnerJoinCountsUnmatched) {
  const std::vector<Trajectory> sel = {trajectory_with(1, {0, 1}), trajectory_with(2, {3, 4, 5})};
  const std::vector<RewardRecord> rew = {reward_for(2, {{4, 0.2}}), reward_for(3, {})};
  const auto j = join_logs(sel, rew);
  ASSERT_EQ(j.samples.size(), 3u);
  for (const auto& smp : j.samples) EXPECT_EQ(smp.query_id, 2u);
  EXPECT_EQ(j.samples[1].raw_reward, 0.2);
  EXPECT_EQ(j.unmatched_selections + j.unmatched_rewards, 2u);
  EXPECT_EQ(j.matched.size(), 1u);

  const auto empty = join_logs(sel, std::vector<RewardRecord>{});
  EXPECT_TRUE(empty.samples.empty());
  EXPECT_EQ(empty.unmatched_selections, 2u);

  const std::vector<Trajectory> dup = {trajectory_with(1, {0}), trajectory_with(1, {1})};
  EXPECT_THROW(join_logs(dup, rew), IntegrityError);
  const std::vector<RewardRecord> dup_r = {reward_for(2, {}), reward_for(2, {})};
  EXPECT_THROW(join_logs(sel, dup_r), IntegrityError);
}

TEST(JoinLogs, ThousandEpisodesOfHundredSteps) {
  std::vector<Trajectory> sel;
  std::vector<RewardRecord> rew;
  std::vector<CandidateId> picks(100);
  std::iota(picks.begin(), picks.end(), 0);
  for (QueryId q = 0; q < 1000; ++q) {
    sel.push_back(trajectory_with(q, picks));
    rew.push_back(reward_for(999 - q, {}));
  }
  const auto j = join_logs(sel, rew);
  EXPECT_EQ(j.samples.size(), 100000u);
  EXPECT_EQ(j.unmatched_selections + j.unmatched_rewards, 0u);
}

TEST(EpisodeLogs, RoundTripThroughFiles) {
  const auto dir = scratch("logs");
  const std::vector<Trajectory> sel = {trajectory_with(4, {1, 2}), trajectory_with(5, {7})};
  const std::vector<RewardRecord> rew = {reward_for(4, {{2, 0.125}}), reward_for(5, {})};
  {
    std::ofstream a(dir / "s.jsonl"), b(dir / "r.jsonl");
    for (const auto& t : sel) write_selection_record(a, t);
    for (const auto& r : rew) write_reward_record(b, r);
  }
  EXPECT_EQ(read_selection_log(dir / "s.jsonl"), sel);
  EXPECT_EQ(read_reward_log(dir / "r.jsonl"), rew);
  std::ofstream(dir / "bad.jsonl") << "{\"query_id\": 1}\n";
  EXPECT_THROW(read_reward_log(dir / "bad.jsonl"), SchemaError);
  EXPECT_THROW(read_selection_log(dir / "missing.jsonl"), Error);
  fs::remove_all(dir);
}

TEST(Train, ZeroRewardLeavesParametersUnchanged) {
  Scenario s;
  s.env.reserve = 1e9;  // nothing clears the reserve, so nothing is shown
  const auto init = initial_checkpoint(s.world, s.upstream, s.config);
  const auto r = train(s.world, s.upstream, s.env, s.agent, s.config);
  EXPECT_EQ(r.checkpoint.params, init.params);
  EXPECT_EQ(r.checkpoint.training_step, 3u);
  for (const auto& p : r.curve) {
    EXPECT_EQ(p.loss, 0.0);
    EXPECT_EQ(p.mean_reward, 0.0);
  }
}

TEST(Train, SampleCountsFollowSubsampling) {
  Scenario s;
  s.config.max_steps = 1;
  s.config.states_per_query = 7;
  const auto r = train(s.world, s.upstream, s.env, s.agent, s.config);
  // Recount: every non-pass-through episode contributes min(7, |actions|).
  std::uint64_t want = 0;
  for (std::uint32_t b = 0; b < s.config.batch_size; ++b) {
    const Query q = query_at(s.world, s.config.seed, stream_tag("train-query"), b);
    const auto set = retrieve(s.world, q, s.upstream);
    if (set.size() > s.agent.k) want += std::min<std::uint64_t>(7, s.agent.k);
  }
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve[0].num_samples, want);
  EXPECT_LE(r.curve[0].num_samples, 7u * s.config.batch_size);
  EXPECT_GT(r.curve[0].loss, 0.0);
}

TEST(Train, IdenticalAcrossWorkerCounts) {
  Scenario s;
  const auto inline_run = train(s.world, s.upstream, s.env, s.agent, s.config);
  s.config.workers = 2;
  s.config.queue_capacity = 3;
  const auto threaded = train(s.world, s.upstream, s.env, s.agent, s.config);
  EXPECT_EQ(inline_run.checkpoint, threaded.checkpoint);
  ASSERT_EQ(inline_run.curve.size(), threaded.curve.size());
  for (std::size_t i = 0; i < inline_run.curve.size(); ++i) {
    EXPECT_EQ(inline_run.curve[i].loss, threaded.curve[i].loss);
    EXPECT_EQ(inline_run.curve[i].mean_reward, threaded.curve[i].mean_reward);
  }
  EXPECT_NE(inline_run.checkpoint.params, initial_checkpoint(s.world, s.upstream, s.config).params);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  Scenario s;
  s.config.max_steps = 4;
  const auto full = train(s.world, s.upstream, s.env, s.agent, s.config);
  const auto dir = scratch("resume");
  s.config.max_steps = 2;
  s.config.checkpoint_every = 1;
  TrainOptions first;
  first.out_dir = dir;
  train(s.world, s.upstream, s.env, s.agent, s.config, first);
  EXPECT_TRUE(fs::exists(dir / "checkpoint-1.json"));
  EXPECT_TRUE(fs::exists(dir / "checkpoint-2.json"));
  TrainOptions second;
  second.out_dir = dir;
  second.resume = load_checkpoint(dir / "checkpoint-final.json");
  const auto resumed = train(s.world, s.upstream, s.env, s.agent, s.config, second);
  EXPECT_EQ(resumed.checkpoint, full.checkpoint);
  EXPECT_EQ(resumed.curve.front().step, 3u);
  EXPECT_EQ(count_lines(dir / "curve.jsonl"), 4u);
  fs::remove_all(dir);
}

TEST(Train, ResumeChecksSchemaAndWidth) {
  Scenario s;
  auto ckpt = initial_checkpoint(s.world, s.upstream, s.config);
  TrainOptions opt;
  opt.resume = ckpt;
  s.config.hidden_dim = 9;
  EXPECT_THROW(train(s.world, s.upstream, s.env, s.agent, s.config, opt), SchemaError);
  s.config.hidden_dim = 8;
  opt.resume->schema = FeatureSchema::identity(s.world.embedding_dim + 1);
  EXPECT_THROW(train(s.world, s.upstream, s.env, s.agent, s.config, opt), SchemaError);
}

TEST(Train, NonFiniteParametersAbortWithDump) {
  Scenario s;
  auto ckpt = initial_checkpoint(s.world, s.upstream, s.config);
  for (auto& v : ckpt.params.w2()) v = std::numeric_limits<double>::quiet_NaN();
  const auto dir = scratch("nan");
  TrainOptions opt;
  opt.resume = ckpt;
  opt.out_dir = dir;
  try {
    train(s.world, s.upstream, s.env, s.agent, s.config, opt);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.exit_code(), 3);
  }
  EXPECT_TRUE(fs::exists(dir / "nonfinite-step-0.json"));
  fs::remove_all(dir);
}

TEST(Train, WritesCurveAndEpisodeLogs) {
  Scenario s;
  s.config.eval_every = 2;
  s.config.eval_queries = 5;
  const auto dir = scratch("outputs");
  TrainOptions opt;
  opt.out_dir = dir;
  opt.write_episode_logs = true;
  std::vector<std::uint64_t> seen;
  opt.on_update = [&](const CurvePoint& p) { seen.push_back(p.step); };
  const auto r = train(s.world, s.upstream, s.env, s.agent, s.config, opt);
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(count_lines(dir / "curve.jsonl"), 3u);
  EXPECT_EQ(count_lines(dir / "selection.jsonl"), 3u * s.config.batch_size);
  EXPECT_TRUE(fs::exists(dir / "checkpoint-final.json"));
  EXPECT_FALSE(r.curve[0].eval_fresh);
  EXPECT_TRUE(r.curve[1].eval_fresh);
  EXPECT_TRUE(r.curve[2].eval_fresh);
  EXPECT_TRUE(std::isnan(r.curve[0].eval_recall));
  EXPECT_LE(r.curve[2].eval_recall, 1.0);

  // Logs written during training rejoin into the same sample counts.
  const auto sel = read_selection_log(dir / "selection.jsonl");
  const auto rew = read_reward_log(dir / "reward.jsonl");
  std::size_t actions = 0;
  for (std::size_t b = 0; b < s.config.batch_size; ++b) actions += sel[b].actions.size();
  const auto joined = join_logs(std::span(sel).first(s.config.batch_size), std::span(rew).first(s.config.batch_size));
  EXPECT_EQ(joined.samples.size(), actions);
  fs::remove_all(dir);
}

TEST(EvaluatePolicy, RecallBoundedByKOverJ) {
  Scenario s;
  const auto snap = snapshot_of(initial_checkpoint(s.world, s.upstream, s.config));
  const auto ev = evaluate_policy(s.world, snap, s.upstream, s.env, s.agent, 20, 1, 30);
  EXPECT_EQ(ev.queries, 20u);
  ASSERT_GT(ev.pruned_queries, 0u);
  EXPECT_LE(ev.mean_recall, 20.0 / 30.0 + 1e-12);
  EXPECT_GE(ev.mean_recall, 0.0);
  EXPECT_GT(ev.mean_ecpm, 0.0);
  EXPECT_EQ(ev.mean_ecpm, evaluate_policy(s.world, snap, s.upstream, s.env, s.agent, 20, 1, 30).mean_ecpm);
}

TEST(TrainConfig, ValidationNamesField) {
  TrainConfig c;
  c.batch_size = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "batch_size");
  }
}
