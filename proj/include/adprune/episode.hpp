#pragma once

// The sequential selection loop of one episode: K picks from the retrieved
// candidates, each pick conditioning the next through the dynamic features,
// followed by the downstream evaluation of the picked set.
//
// Two engines produce identical trajectories. SelectionKernel keeps every
// candidate's static pre-activation and, after a pick, rescores only the rows
// whose dynamic features changed (the picked ad's advertiser). The reference
// engine rebuilds the full feature matrix from EpisodeState at every step.

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "adprune/downstream.hpp"
#include "adprune/features.hpp"
#include "adprune/policy.hpp"
#include "adprune/upstream.hpp"

namespace adprune {

struct AgentConfig {
  std::uint32_t k = 100;
  // Prior-knowledge cap: once this many ads of one advertiser are picked, its
  // remaining candidates are masked and never scored again. 0 disables.
  std::uint32_t selection_cap = 0;
  void validate() const;
  bool operator==(const AgentConfig&) const = default;
};

// Parameters and normalization published to episode workers. Immutable once
// shared; `id` names the snapshot in every action digest.
struct PolicySnapshot {
  PolicyParams params;
  FeatureSchema schema;
  std::uint64_t id = 0;
};

struct ActionRecord {
  std::uint32_t step = 0;          // 1-based
  std::uint32_t chosen_index = 0;  // into the unselected list at this step
  CandidateId chosen_candidate_id = 0;
  double log_prob = 0.0;
  // Identifies the feature matrix the action was taken on: the matrix is a
  // function of (schema, query, candidate set, picks so far).
  std::uint64_t feature_matrix_digest = 0;
  bool operator==(const ActionRecord&) const = default;
};

struct Trajectory {
  QueryId query_id = 0;
  std::vector<ActionRecord> actions;
  std::vector<CandidateId> selected_candidate_ids;
  std::uint64_t param_snapshot_id = 0;
  bool pass_through = false;
  bool operator==(const Trajectory&) const = default;
};

struct Selection {
  Trajectory trajectory;
  std::uint64_t scoring_ops = 0;  // candidate rows pushed through the network
};

class SelectionKernel {
 public:
  SelectionKernel(const PolicySnapshot& snapshot, const Query& query, std::span<const AdCandidate> candidates,
                  std::uint32_t selection_cap);

  std::size_t size() const noexcept { return candidates_.size(); }
  bool has_action() const noexcept { return available_ > 0; }
  std::span<const double> scores() const noexcept { return scores_; }
  const std::vector<bool>& masked() const noexcept { return masked_; }
  std::vector<double> distribution() const { return action_distribution(scores_, masked_); }
  // Position of `row` in the unselected list (rows in original order minus picks).
  std::size_t unselected_index(std::size_t row) const;
  std::span<const double> hidden(std::size_t row) const;
  // Normalized feature row (static ++ dynamic) as it stands now.
  std::span<const double> features(std::size_t row) const;
  void select(std::size_t row);
  std::uint64_t scoring_ops() const noexcept { return scoring_ops_; }
  std::uint32_t step() const noexcept { return step_; }

 private:
  void rescore(std::size_t row);

  const PolicyParams& params_;
  const FeatureSchema& schema_;
  std::span<const AdCandidate> candidates_;
  std::uint32_t selection_cap_;
  std::size_t static_len_;
  std::size_t feature_len_;
  std::size_t hidden_dim_;
  Matrix features_;
  Matrix static_hidden_;
  Matrix hidden_;
  std::vector<double> scores_;
  std::vector<bool> selected_;
  std::vector<bool> masked_;
  std::size_t available_ = 0;
  std::unordered_map<AdvertiserId, std::vector<std::size_t>> rows_by_advertiser_;
  std::unordered_map<AdvertiserId, double> ecpm_acc_;
  std::unordered_map<AdvertiserId, std::uint32_t> picked_;
  std::uint64_t scoring_ops_ = 0;
  std::uint32_t step_ = 1;
};

std::uint64_t action_digest(std::uint64_t snapshot_id, QueryId query_id, std::uint32_t step,
                            std::uint64_t picks_hash);

// Picks min(K, |X|) candidates (fewer if the selection cap exhausts the
// support). |X| <= K is a pass-through: everything is forwarded, no actions.
// Greedy mode never reads rng.
Selection select_candidates(const PolicySnapshot& snapshot, const Query& query, const CandidateSet& candidates,
                            const AgentConfig& agent, SelectionMode mode, RandomStream& rng);

Selection select_candidates_reference(const PolicySnapshot& snapshot, const Query& query,
                                      const CandidateSet& candidates, const AgentConfig& agent, SelectionMode mode,
                                      RandomStream& rng);

std::vector<AdCandidate> picked_candidates(const CandidateSet& candidates, const Trajectory& trajectory);

struct EpisodeResult {
  Query query;
  CandidateSet candidates;
  Trajectory trajectory;
  AuctionOutcome outcome;
  std::uint64_t scoring_ops = 0;
};

EpisodeResult run_episode(const World& world, const PolicySnapshot& snapshot, const Query& query,
                          const UpstreamConfig& upstream, const EnvConfig& env, const AgentConfig& agent,
                          SelectionMode mode, RandomStream& rng);

// Sum over steps t of weights[t-1] * grad log pi(a_t | s_t), replaying the
// trajectory through SelectionKernel and accumulating one outer product per
// candidate row at the end. Steps with zero weight cost nothing beyond the
// replay. `grad` is added to, not overwritten.
void accumulate_episode_gradient(const PolicySnapshot& snapshot, const Query& query,
                                 const CandidateSet& candidates, const Trajectory& trajectory,
                                 std::span<const double> weights, std::uint32_t selection_cap, PolicyParams& grad);

// Same quantity built from grad_log_prob on freshly extracted state matrices.
void accumulate_episode_gradient_reference(const PolicySnapshot& snapshot, const Query& query,
                                           const CandidateSet& candidates, const Trajectory& trajectory,
                                           std::span<const double> weights, std::uint32_t selection_cap,
                                           PolicyParams& grad);

}  // namespace adprune
