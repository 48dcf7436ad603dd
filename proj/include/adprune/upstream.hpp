#pragma once

// Keyword matching and multi-phase retrieval expansion
// (keyword -> (advertiser, group) -> creative), capped at N candidates.

#include <cstdint>
#include <ostream>
#include <vector>

#include "adprune/catalog.hpp"

namespace adprune {

using CandidateId = std::uint32_t;

struct AdCandidate {
  CandidateId candidate_id = 0;  // position in the owning CandidateSet
  KeywordId keyword_id = 0;
  AdvertiserId advertiser_id = 0;
  GroupId group_id = 0;
  CreativeId creative_id = 0;
  double bid = 0.0;
  double coarse_ectr = 0.0;  // pre-style, noisy
  double relevance = 0.0;
  bool strong_style_compatible = false;
  std::vector<double> ad_embedding;
  bool operator==(const AdCandidate&) const = default;
};

struct CandidateSet {
  QueryId query_id = 0;
  std::vector<AdCandidate> candidates;
  bool truncated = false;
  std::size_t size() const { return candidates.size(); }
  bool operator==(const CandidateSet&) const = default;
};

struct UpstreamConfig {
  double similarity_threshold = 0.3;
  std::uint32_t max_keywords = 100;  // 0: unlimited
  std::uint32_t n_max = 1000;
  void validate() const;
  bool operator==(const UpstreamConfig&) const = default;
};

// Keywords with cosine(query, keyword) >= threshold, most similar first
// (ties by keyword id), at most max_keywords of them (0 = no limit).
std::vector<KeywordId> match_keywords(const World& world, const Query& query, double similarity_threshold,
                                      std::uint32_t max_keywords = 0);

// Walks the keyword-unit index in keyword-rank order, drops groups whose
// geo/hour targeting rejects the query, keeps one tuple per creative (the
// most relevant keyword) and stops after n_max candidates.
CandidateSet expand_candidates(const World& world, const Query& query, const std::vector<KeywordId>& keywords,
                               std::uint32_t n_max);

CandidateSet retrieve(const World& world, const Query& query, const UpstreamConfig& config);

// Deterministic multiplicative noise exp(U(-eta, eta)) of a (keyword, creative)
// tuple; fixed for the lifetime of the world.
double coarse_noise_factor(const World& world, KeywordId keyword, CreativeId creative);

// One JSON object per line, one line per candidate.
void write_candidates_jsonl(std::ostream& out, const CandidateSet& set);

}  // namespace adprune
