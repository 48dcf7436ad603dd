#pragma once

// Policy-gradient training loop. Episode workers run sampled episodes against
// a published parameter snapshot and emit a selection record and a reward
// record per query; the trainer joins the two logs, shapes rewards, subsamples
// states and applies one Adam step per batch.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "adprune/episode.hpp"
#include "adprune/policy.hpp"

namespace adprune {

// Multi-producer multi-consumer FIFO with back-pressure: push blocks while
// full, pop blocks while empty. After close(), push fails and pop drains.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

struct RewardRecord {
  QueryId query_id = 0;
  std::vector<std::pair<CandidateId, double>> shown;  // (candidate id, ecpm) in slot order
  double episode_reward = 0.0;
  bool operator==(const RewardRecord&) const = default;
};

RewardRecord reward_record(const AuctionOutcome& outcome);

struct ShapedRewards {
  std::vector<double> raw;       // ecpm of the step's ad if shown, else 0
  std::vector<double> training;  // log(1 + raw)
};

// IntegrityError when the two records belong to different queries.
ShapedRewards shape_rewards(const Trajectory& trajectory, const RewardRecord& reward);
ShapedRewards shape_rewards(const Trajectory& trajectory, const AuctionOutcome& outcome);

struct TrainingSample {
  QueryId query_id = 0;
  std::uint32_t step = 0;
  std::uint32_t action_index = 0;  // into the unselected list at `step`
  double log_prob = 0.0;
  double raw_reward = 0.0;
  double shaped_reward = 0.0;
};

struct JoinResult {
  std::vector<TrainingSample> samples;  // selection-log order, then step order
  std::vector<std::pair<std::size_t, std::size_t>> matched;  // (selection index, reward index)
  std::size_t unmatched_selections = 0;
  std::size_t unmatched_rewards = 0;
};

// Inner join on query id. A duplicate id within either log is an IntegrityError.
JoinResult join_logs(std::span<const Trajectory> selection_log, std::span<const RewardRecord> reward_log);

void write_selection_record(std::ostream& out, const Trajectory& trajectory);
void write_reward_record(std::ostream& out, const RewardRecord& record);
std::vector<Trajectory> read_selection_log(const std::filesystem::path& path);
std::vector<RewardRecord> read_reward_log(const std::filesystem::path& path);

struct TrainConfig {
  std::uint32_t hidden_dim = 32;
  double learning_rate = 1e-4;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint32_t batch_size = 128;
  std::uint32_t states_per_query = 50;
  std::uint64_t max_steps = 1000;  // updates per invocation
  std::uint64_t checkpoint_every = 10000;
  std::uint64_t eval_every = 100;  // 0 disables periodic evaluation
  std::uint32_t eval_queries = 2000;
  std::uint32_t recall_j = 110;
  std::uint32_t schema_fit_queries = 200;
  bool normalize_features = true;
  std::uint32_t workers = 0;  // episode worker threads; 0 runs episodes inline
  std::uint32_t queue_capacity = 64;
  std::uint64_t seed = 1;
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct CurvePoint {
  std::uint64_t step = 0;  // training step after this update
  double loss = 0.0;
  double mean_reward = 0.0;  // mean episode reward of the batch
  std::uint64_t num_samples = 0;
  std::uint64_t unmatched = 0;
  bool eval_fresh = false;   // eval fields were computed at this step
  double eval_recall = 0.0;  // latest evaluation, NaN before the first
  double eval_ecpm = 0.0;
};

void write_curve_point(std::ostream& out, const CurvePoint& point);

struct EvalSummary {
  std::uint32_t queries = 0;
  std::uint32_t pruned_queries = 0;  // |X| > K
  double mean_ecpm = 0.0;            // over all queries
  double mean_recall = 0.0;          // over pruned queries; NaN if none
  std::uint64_t scoring_ops = 0;
};

// Greedy episodes on the held-out evaluation stream (seed, i).
EvalSummary evaluate_policy(const World& world, const PolicySnapshot& snapshot, const UpstreamConfig& upstream,
                            const EnvConfig& env, const AgentConfig& agent, std::uint32_t num_queries,
                            std::uint64_t seed, std::uint32_t recall_j);

struct TrainOptions {
  std::optional<Checkpoint> resume;
  std::optional<std::filesystem::path> out_dir;  // checkpoints, curve, dumps
  bool write_episode_logs = false;                // selection/reward logs under out_dir
  std::function<void(const CurvePoint&)> on_update;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<CurvePoint> curve;
};

TrainResult train(const World& world, const UpstreamConfig& upstream, const EnvConfig& env,
                  const AgentConfig& agent, const TrainConfig& config, const TrainOptions& options = {});

// Fresh checkpoint: fitted (or identity) schema and Glorot-initialized params.
Checkpoint initial_checkpoint(const World& world, const UpstreamConfig& upstream, const TrainConfig& config);

PolicySnapshot snapshot_of(const Checkpoint& checkpoint);

}  // namespace adprune
