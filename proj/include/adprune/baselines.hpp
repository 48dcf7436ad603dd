#pragma once

// Rule-based pruning baselines, the exhaustive subset oracle and the
// recall-of-top-J diagnostic.

#include <cstdint>
#include <deque>
#include <span>
#include <unordered_map>
#include <vector>

#include "adprune/downstream.hpp"
#include "adprune/upstream.hpp"

namespace adprune {

// Top-k by coarse_ectr * bid, ties to the lower candidate id, returned in
// ranked order.
std::vector<AdCandidate> baseline_ectr_bid(const CandidateSet& candidates, std::uint32_t k);

struct SrqConfig {
  std::uint32_t window = 10000;  // episodes
  double s0 = 1.0;
  double r0 = 20.0;
  void validate() const;
  bool operator==(const SrqConfig&) const = default;
};

// Rolling per-creative counts of (episodes retrieved, episodes shown) over
// the last `window` recorded episodes.
class ShowHistory {
 public:
  struct Counts {
    std::uint64_t retrieved = 0;
    std::uint64_t shown = 0;
  };

  explicit ShowHistory(SrqConfig config = {});

  // (shown + s0) / (retrieved + r0); 0 when both the counts and priors are 0.
  double srq(CreativeId creative) const;
  Counts counts(CreativeId creative) const;
  std::size_t window_length() const { return episodes_.size(); }
  const SrqConfig& config() const { return config_; }

  void record(const CandidateSet& candidates, const AuctionOutcome& outcome);

 private:
  struct Episode {
    std::vector<CreativeId> retrieved;
    std::vector<CreativeId> shown;
  };
  SrqConfig config_;
  std::deque<Episode> episodes_;
  std::unordered_map<CreativeId, Counts> counts_;
};

std::vector<AdCandidate> baseline_ectr_bid_srq(const CandidateSet& candidates, const ShowHistory& history,
                                               std::uint32_t k);

void update_show_history(ShowHistory& history, const CandidateSet& candidates, const AuctionOutcome& outcome);

// k candidates drawn uniformly without replacement, in candidate order.
std::vector<AdCandidate> random_selection(const CandidateSet& candidates, std::uint32_t k, RandomStream& rng);

struct OracleResult {
  std::vector<CandidateId> subset;  // ascending
  double reward = 0.0;
  std::uint64_t subsets_evaluated = 0;
};

inline constexpr std::uint64_t kOracleMaxSubsets = 1'000'000;

// Saturating binomial coefficient.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

// Every k-subset through evaluate(); the best episode reward wins, ties to
// the lexicographically smallest id tuple. SizeError above max_subsets.
OracleResult oracle_best_subset(const World& world, const CandidateSet& candidates, const Query& query,
                                std::uint32_t k, const EnvConfig& env,
                                std::uint64_t max_subsets = kOracleMaxSubsets);

// |selected ∩ TopJ(coarse_ectr * bid)| / min(j, |candidates|), matched by
// candidate id.
double recall_top_j(std::span<const CandidateId> selected, const CandidateSet& candidates, std::uint32_t j);

}  // namespace adprune
