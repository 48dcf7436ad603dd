#include "adprune/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "json.hpp"

#include "adprune/errors.hpp"
#include "adprune/numeric.hpp"

namespace adprune {

void EnvConfig::validate() const {
  if (m_slots < 1) throw ConfigError("m_slots", "must be >= 1");
  if (!(std::isfinite(reserve) && reserve >= 0.0)) throw ConfigError("reserve", "must be >= 0");
  if (diversity_cap < 1) throw ConfigError("diversity_cap", "must be >= 1");
  if (!std::isfinite(quality_threshold)) throw ConfigError("quality_threshold", "must be finite");
  if (!(std::isfinite(style_noise) && style_noise >= 0.0)) throw ConfigError("style_noise", "must be >= 0");
}

namespace {

double refined_noise_factor(const World& world, const Query& query, CreativeId creative, double style_noise) {
  if (style_noise == 0.0) return 1.0;
  const double u = unit_from_bits(hash_keys(world.seed, stream_tag("refined-ectr"), query.query_id, creative));
  return std::exp(style_noise * (2.0 * u - 1.0));
}

bool ranks_before(const FullAd& a, const FullAd& b) {
  const double ra = a.rank_score();
  const double rb = b.rank_score();
  return ra != rb ? ra > rb : a.candidate.candidate_id < b.candidate.candidate_id;
}

}  // namespace

StyledAds equip_styles(const World& world, std::span<const AdCandidate> selected, const Query& query,
                       const EnvConfig& env) {
  StyledAds out;
  out.ads.reserve(selected.size());
  for (const auto& cand : selected) {
    const auto& ad = world.creative(cand.creative_id);
    bool found = false;
    StyleId best_style = 0;
    double best_bonus = 0.0;
    for (StyleId s : ad.compatible_style_ids) {
      const auto& st = world.style(s);
      if (!st.available_by_class.at(query.query_class)) continue;
      const double bonus = st.bonus_by_class[query.query_class];
      if (!found || bonus > best_bonus) {
        found = true;
        best_style = s;
        best_bonus = bonus;
      }
    }
    if (!found) {
      out.dropped.push_back(cand.candidate_id);
      continue;
    }
    FullAd full;
    full.candidate = cand;
    full.style_id = best_style;
    const double truth = click_prob(world, cand.advertiser_id, cand.creative_id, best_style, query, 1);
    full.refined_ectr =
        std::clamp(truth * refined_noise_factor(world, query, cand.creative_id, env.style_noise), 0.0, 1.0);
    full.quality_pass = world.advertiser(cand.advertiser_id).quality_score >= env.quality_threshold;
    out.ads.push_back(std::move(full));
  }
  return out;
}

std::vector<FullAd> apply_filters(const World& world, std::span<const FullAd> full_ads, const Query& query,
                                  std::uint32_t diversity_cap) {
  if (diversity_cap < 1) throw ConfigError("diversity_cap", "must be >= 1");
  std::vector<std::size_t> passing;
  for (std::size_t i = 0; i < full_ads.size(); ++i) {
    const auto& ad = full_ads[i];
    if (!ad.quality_pass) continue;
    if (world.blacklisted(ad.candidate.advertiser_id, query.query_class)) continue;
    passing.push_back(i);
  }
  // Rank within each advertiser; keep the first diversity_cap.
  std::vector<std::size_t> by_rank(passing);
  std::sort(by_rank.begin(), by_rank.end(),
            [&](std::size_t a, std::size_t b) { return ranks_before(full_ads[a], full_ads[b]); });
  std::unordered_map<AdvertiserId, std::uint32_t> kept_per_advertiser;
  std::vector<bool> keep(full_ads.size(), false);
  for (std::size_t i : by_rank) {
    auto& n = kept_per_advertiser[full_ads[i].candidate.advertiser_id];
    if (n < diversity_cap) {
      ++n;
      keep[i] = true;
    }
  }
  std::vector<FullAd> out;
  for (std::size_t i : passing) {
    if (keep[i]) out.push_back(full_ads[i]);
  }
  return out;
}

AuctionOutcome run_auction(std::span<const FullAd> full_ads, std::uint32_t m_slots, double reserve) {
  if (m_slots < 1) throw ConfigError("m_slots", "must be >= 1");
  if (!(reserve >= 0.0)) throw ConfigError("reserve", "must be >= 0");
  std::vector<const FullAd*> ranked;
  for (const auto& ad : full_ads) {
    if (!(ad.refined_ectr > 0.0)) continue;
    if (ad.rank_score() < reserve * ad.refined_ectr) continue;
    ranked.push_back(&ad);
  }
  std::sort(ranked.begin(), ranked.end(), [](const FullAd* a, const FullAd* b) { return ranks_before(*a, *b); });

  AuctionOutcome outcome;
  const std::size_t winners = std::min<std::size_t>(m_slots, ranked.size());
  std::vector<double> ecpms;
  for (std::size_t i = 0; i < winners; ++i) {
    const FullAd& ad = *ranked[i];
    double charge = reserve;
    if (i + 1 < ranked.size()) charge = std::max(reserve, ranked[i + 1]->rank_score() / ad.refined_ectr);
    // rank_{i+1} <= rank_i = ectr_i * bid_i; the division can still round one
    // ulp above the bid.
    charge = std::min(charge, ad.candidate.bid);
    ShownAd s;
    s.candidate_id = ad.candidate.candidate_id;
    s.creative_id = ad.candidate.creative_id;
    s.advertiser_id = ad.candidate.advertiser_id;
    s.style_id = ad.style_id;
    s.bid = ad.candidate.bid;
    s.refined_ectr = ad.refined_ectr;
    s.position = static_cast<std::uint32_t>(i + 1);
    s.charge = charge;
    s.ecpm = ad.refined_ectr * charge;
    ecpms.push_back(s.ecpm);
    outcome.shown.push_back(s);
  }
  outcome.num_slots_filled = static_cast<std::uint32_t>(winners);
  outcome.episode_reward = exact_sum(ecpms);
  return outcome;
}

AuctionOutcome evaluate(const World& world, std::span<const AdCandidate> selected, const Query& query,
                        const EnvConfig& env) {
  AuctionOutcome outcome;
  if (!selected.empty()) {
    const auto styled = equip_styles(world, selected, query, env);
    const auto survivors = apply_filters(world, styled.ads, query, env.diversity_cap);
    outcome = run_auction(survivors, env.m_slots, env.reserve);
  }
  outcome.query_id = query.query_id;
  return outcome;
}

double ground_truth_click_prob(const World& world, const FullAd& ad, const Query& query, std::uint32_t position) {
  return click_prob(world, ad.candidate.advertiser_id, ad.candidate.creative_id, ad.style_id, query, position);
}

UserFeedback simulate_user(const World& world, const AuctionOutcome& outcome, const Query& query,
                           RandomStream& rng) {
  UserFeedback fb;
  fb.clicked.reserve(outcome.shown.size());
  for (const auto& s : outcome.shown) {
    const double p = click_prob(world, s.advertiser_id, s.creative_id, s.style_id, query, s.position);
    const bool click = rng.bernoulli(p);
    fb.clicked.push_back(click ? 1 : 0);
    if (click) {
      ++fb.clicks;
      fb.revenue += s.charge;
    }
  }
  return fb;
}

void write_outcome_jsonl(std::ostream& out, const AuctionOutcome& outcome) {
  for (const auto& s : outcome.shown) {
    nlohmann::json j{{"query_id", outcome.query_id},
                     {"candidate_id", s.candidate_id},
                     {"position", s.position},
                     {"charge", s.charge},
                     {"ecpm", s.ecpm}};
    out << j.dump() << '\n';
  }
}

}  // namespace adprune
