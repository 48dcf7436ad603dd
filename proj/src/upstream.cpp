#include "adprune/upstream.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "json.hpp"

#include "adprune/errors.hpp"
#include "adprune/numeric.hpp"

namespace adprune {

void UpstreamConfig::validate() const {
  if (n_max < 1) throw ConfigError("n_max", "must be >= 1");
  if (!std::isfinite(similarity_threshold)) throw ConfigError("similarity_threshold", "must be finite");
}

std::vector<KeywordId> match_keywords(const World& world, const Query& query, double similarity_threshold,
                                      std::uint32_t max_keywords) {
  std::vector<std::pair<double, KeywordId>> scored;
  for (const auto& kw : world.keywords) {
    const double sim = cosine(query.query_embedding, kw.embedding);
    if (sim >= similarity_threshold) scored.emplace_back(sim, kw.keyword_id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (max_keywords > 0 && scored.size() > max_keywords) scored.resize(max_keywords);
  std::vector<KeywordId> out;
  out.reserve(scored.size());
  for (const auto& [sim, id] : scored) out.push_back(id);
  return out;
}

double coarse_noise_factor(const World& world, KeywordId keyword, CreativeId creative) {
  const double eta = world.config.coarse_noise;
  if (eta == 0.0) return 1.0;
  const double u = unit_from_bits(hash_keys(world.seed, stream_tag("coarse-ectr"), keyword, creative));
  return std::exp(eta * (2.0 * u - 1.0));
}

CandidateSet expand_candidates(const World& world, const Query& query, const std::vector<KeywordId>& keywords,
                               std::uint32_t n_max) {
  if (n_max < 1) throw ConfigError("n_max", "must be >= 1");
  struct Tuple {
    KeywordId keyword;
    UnitRef unit;
    const AdCreativeEntry* ad;
    double relevance;
  };
  std::vector<Tuple> tuples;
  std::unordered_map<CreativeId, std::size_t> best;
  for (KeywordId kw_id : keywords) {
    const auto& kw = world.keyword(kw_id);
    const double kw_sim = cosine(query.query_embedding, kw.embedding);
    for (const auto& unit : world.keyword_unit_index[kw_id]) {
      const auto& grp = world.group(unit.group_id);
      if (!grp.target_constraints.allows(query.geo, query.timestamp)) continue;
      for (const auto& ad : grp.ads) {
        const double ad_sim = cosine(query.query_embedding, ad.creative_embedding);
        const double relevance = std::clamp(0.25 * (2.0 + kw_sim + ad_sim), 0.0, 1.0);
        const auto [it, inserted] = best.try_emplace(ad.creative_id, tuples.size());
        if (!inserted && relevance > tuples[it->second].relevance) it->second = tuples.size();
        tuples.push_back(Tuple{kw_id, unit, &ad, relevance});
      }
    }
  }

  CandidateSet set;
  set.query_id = query.query_id;
  set.truncated = best.size() > n_max;
  for (std::size_t i = 0; i < tuples.size() && set.candidates.size() < n_max; ++i) {
    const auto& t = tuples[i];
    if (best.at(t.ad->creative_id) != i) continue;
    AdCandidate c;
    c.candidate_id = static_cast<CandidateId>(set.candidates.size());
    c.keyword_id = t.keyword;
    c.advertiser_id = t.unit.advertiser_id;
    c.group_id = t.unit.group_id;
    c.creative_id = t.ad->creative_id;
    c.bid = t.ad->bid;
    c.relevance = t.relevance;
    c.strong_style_compatible = t.ad->strong_style_compatible;
    c.ad_embedding = t.ad->creative_embedding;
    const double truth = click_prob_first_position(world, c.advertiser_id, c.creative_id, 0.0, query);
    c.coarse_ectr = std::clamp(truth * coarse_noise_factor(world, c.keyword_id, c.creative_id), 0.0, 1.0);
    set.candidates.push_back(std::move(c));
  }
  return set;
}

CandidateSet retrieve(const World& world, const Query& query, const UpstreamConfig& config) {
  const auto keywords = match_keywords(world, query, config.similarity_threshold, config.max_keywords);
  return expand_candidates(world, query, keywords, config.n_max);
}

void write_candidates_jsonl(std::ostream& out, const CandidateSet& set) {
  for (const auto& c : set.candidates) {
    nlohmann::json j{{"query_id", set.query_id},
                     {"candidate_id", c.candidate_id},
                     {"keyword_id", c.keyword_id},
                     {"advertiser_id", c.advertiser_id},
                     {"group_id", c.group_id},
                     {"creative_id", c.creative_id},
                     {"bid", c.bid},
                     {"coarse_ectr", c.coarse_ectr},
                     {"relevance", c.relevance},
                     {"strong_style_compatible", c.strong_style_compatible},
                     {"ad_embedding", c.ad_embedding},
                     {"truncated", set.truncated}};
    out << j.dump() << '\n';
  }
}

}  // namespace adprune
