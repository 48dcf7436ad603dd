#pragma once

// The black-box downstream: style equipping, refined CTR, filtering rules
// and a GSP auction over at most M slots. The episode reward is the sum of
// the winners' eCPM = refined eCTR x charge.

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "adprune/catalog.hpp"
#include "adprune/random.hpp"
#include "adprune/upstream.hpp"

namespace adprune {

struct EnvConfig {
  std::uint32_t m_slots = 4;
  double reserve = 0.01;
  std::uint32_t diversity_cap = 1;
  double quality_threshold = 0.05;
  double style_noise = 0.05;
  void validate() const;
  bool operator==(const EnvConfig&) const = default;
};

struct FullAd {
  AdCandidate candidate;
  StyleId style_id = 0;
  double refined_ectr = 0.0;
  bool quality_pass = true;
  double rank_score() const { return refined_ectr * candidate.bid; }
};

struct StyledAds {
  std::vector<FullAd> ads;
  std::vector<CandidateId> dropped;  // no style usable for the query class
};

struct ShownAd {
  CandidateId candidate_id = 0;
  CreativeId creative_id = 0;
  AdvertiserId advertiser_id = 0;
  StyleId style_id = 0;
  double bid = 0.0;
  double refined_ectr = 0.0;
  std::uint32_t position = 0;  // 1-based
  double charge = 0.0;         // per click
  double ecpm = 0.0;           // refined_ectr * charge
  bool operator==(const ShownAd&) const = default;
};

struct AuctionOutcome {
  QueryId query_id = 0;
  std::vector<ShownAd> shown;
  std::uint32_t num_slots_filled = 0;
  double episode_reward = 0.0;
  bool operator==(const AuctionOutcome&) const = default;
};

struct UserFeedback {
  std::vector<std::uint8_t> clicked;  // parallel to outcome.shown
  std::uint32_t clicks = 0;
  double revenue = 0.0;
};

// Pairs every candidate with its best available compatible style (highest
// style bonus for the query class, ties to the lower style id) and sets the
// refined eCTR to the position-1 click probability times exp(U(-s, s)),
// s = style_noise, fixed per (world, query, creative).
StyledAds equip_styles(const World& world, std::span<const AdCandidate> selected, const Query& query,
                       const EnvConfig& env);

// Blacklist, quality check, then at most diversity_cap ads per advertiser
// (highest rank score kept, ties to the lower candidate id). Input order is
// preserved among survivors.
std::vector<FullAd> apply_filters(const World& world, std::span<const FullAd> full_ads, const Query& query,
                                  std::uint32_t diversity_cap);

AuctionOutcome run_auction(std::span<const FullAd> full_ads, std::uint32_t m_slots, double reserve);

AuctionOutcome evaluate(const World& world, std::span<const AdCandidate> selected, const Query& query,
                        const EnvConfig& env);

double ground_truth_click_prob(const World& world, const FullAd& ad, const Query& query, std::uint32_t position);

UserFeedback simulate_user(const World& world, const AuctionOutcome& outcome, const Query& query,
                           RandomStream& rng);

// One JSON object per shown ad: query_id, candidate_id, position, charge, ecpm.
void write_outcome_jsonl(std::ostream& out, const AuctionOutcome& outcome);

}  // namespace adprune
