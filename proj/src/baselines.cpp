#include "adprune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "adprune/errors.hpp"

namespace adprune {

namespace {

std::vector<AdCandidate> top_k_by(const CandidateSet& candidates, std::uint32_t k,
                                  const std::vector<double>& key) {
  if (k < 1) throw ConfigError("k", "must be >= 1");
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  const auto before = [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return candidates.candidates[a].candidate_id < candidates.candidates[b].candidate_id;
  };
  const std::size_t take = std::min<std::size_t>(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);
  std::vector<AdCandidate> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(candidates.candidates[order[i]]);
  return out;
}

std::vector<double> expected_charge(const CandidateSet& candidates) {
  std::vector<double> key;
  key.reserve(candidates.size());
  for (const auto& c : candidates.candidates) key.push_back(c.coarse_ectr * c.bid);
  return key;
}

}  // namespace

std::vector<AdCandidate> baseline_ectr_bid(const CandidateSet& candidates, std::uint32_t k) {
  return top_k_by(candidates, k, expected_charge(candidates));
}

void SrqConfig::validate() const {
  if (window < 1) throw ConfigError("srq.window", "must be >= 1");
  if (!(std::isfinite(s0) && s0 >= 0.0)) throw ConfigError("srq.s0", "must be >= 0");
  if (!(std::isfinite(r0) && r0 >= 0.0)) throw ConfigError("srq.r0", "must be >= 0");
}

ShowHistory::ShowHistory(SrqConfig config) : config_(config) { config_.validate(); }

double ShowHistory::srq(CreativeId creative) const {
  const Counts c = counts(creative);
  const double den = static_cast<double>(c.retrieved) + config_.r0;
  if (den == 0.0) return 0.0;
  return (static_cast<double>(c.shown) + config_.s0) / den;
}

ShowHistory::Counts ShowHistory::counts(CreativeId creative) const {
  const auto it = counts_.find(creative);
  return it == counts_.end() ? Counts{} : it->second;
}

void ShowHistory::record(const CandidateSet& candidates, const AuctionOutcome& outcome) {
  Episode ep;
  ep.retrieved.reserve(candidates.size());
  for (const auto& c : candidates.candidates) ep.retrieved.push_back(c.creative_id);
  // A creative appears at most once per candidate set, so each counts once.
  std::sort(ep.retrieved.begin(), ep.retrieved.end());
  ep.retrieved.erase(std::unique(ep.retrieved.begin(), ep.retrieved.end()), ep.retrieved.end());
  for (const auto& s : outcome.shown) ep.shown.push_back(s.creative_id);
  std::sort(ep.shown.begin(), ep.shown.end());
  ep.shown.erase(std::unique(ep.shown.begin(), ep.shown.end()), ep.shown.end());

  for (CreativeId id : ep.retrieved) ++counts_[id].retrieved;
  for (CreativeId id : ep.shown) ++counts_[id].shown;
  episodes_.push_back(std::move(ep));
  while (episodes_.size() > config_.window) {
    const Episode& old = episodes_.front();
    for (CreativeId id : old.retrieved) --counts_[id].retrieved;
    for (CreativeId id : old.shown) --counts_[id].shown;
    for (CreativeId id : old.retrieved) {
      const auto it = counts_.find(id);
      if (it != counts_.end() && it->second.retrieved == 0 && it->second.shown == 0) counts_.erase(it);
    }
    episodes_.pop_front();
  }
}

std::vector<AdCandidate> baseline_ectr_bid_srq(const CandidateSet& candidates, const ShowHistory& history,
                                               std::uint32_t k) {
  auto key = expected_charge(candidates);
  for (std::size_t i = 0; i < key.size(); ++i) key[i] *= history.srq(candidates.candidates[i].creative_id);
  return top_k_by(candidates, k, key);
}

void update_show_history(ShowHistory& history, const CandidateSet& candidates, const AuctionOutcome& outcome) {
  history.record(candidates, outcome);
}

std::vector<AdCandidate> random_selection(const CandidateSet& candidates, std::uint32_t k, RandomStream& rng) {
  const std::size_t n = candidates.size();
  if (k >= n) return candidates.candidates;
  // Partial Fisher-Yates over indices, then restore candidate order.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<AdCandidate> out;
  out.reserve(k);
  for (std::size_t i : idx) out.push_back(candidates.candidates[i]);
  return out;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > UINT64_MAX) return UINT64_MAX;
  }
  return static_cast<std::uint64_t>(r);
}

OracleResult oracle_best_subset(const World& world, const CandidateSet& candidates, const Query& query,
                                std::uint32_t k, const EnvConfig& env, std::uint64_t max_subsets) {
  if (k < 1) throw ConfigError("k", "must be >= 1");
  const std::size_t n = candidates.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return candidates.candidates[a].candidate_id < candidates.candidates[b].candidate_id;
  });
  const std::size_t kk = std::min<std::size_t>(k, n);
  const std::uint64_t total = binomial(n, kk);
  if (total > max_subsets)
    throw SizeError("oracle instance too large: C(" + std::to_string(n) + ", " + std::to_string(kk) + ") = " +
                    std::to_string(total) + " subsets exceeds " + std::to_string(max_subsets));

  OracleResult best;
  bool have = false;
  std::vector<std::size_t> pos(kk);
  std::iota(pos.begin(), pos.end(), 0);
  std::vector<AdCandidate> subset(kk);
  while (true) {
    for (std::size_t i = 0; i < kk; ++i) subset[i] = candidates.candidates[order[pos[i]]];
    const double reward = evaluate(world, subset, query, env).episode_reward;
    ++best.subsets_evaluated;
    // Lexicographic enumeration: the first subset reaching a reward wins ties.
    if (!have || reward > best.reward) {
      have = true;
      best.reward = reward;
      best.subset.clear();
      for (const auto& c : subset) best.subset.push_back(c.candidate_id);
    }
    std::size_t i = kk;
    while (i > 0 && pos[i - 1] == n - kk + i - 1) --i;
    if (i == 0) break;
    ++pos[i - 1];
    for (std::size_t j = i; j < kk; ++j) pos[j] = pos[j - 1] + 1;
  }
  return best;
}

double recall_top_j(std::span<const CandidateId> selected, const CandidateSet& candidates, std::uint32_t j) {
  if (j < 1) throw ConfigError("j", "must be >= 1");
  if (candidates.size() == 0) return 0.0;
  const auto top = baseline_ectr_bid(candidates, j);
  std::unordered_set<CandidateId> top_ids;
  for (const auto& c : top) top_ids.insert(c.candidate_id);
  std::unordered_set<CandidateId> seen;
  std::size_t hits = 0;
  for (CandidateId id : selected) {
    if (top_ids.contains(id) && seen.insert(id).second) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(top.size());
}

}  // namespace adprune
