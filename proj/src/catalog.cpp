#include "adprune/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "adprune/errors.hpp"
#include "adprune/numeric.hpp"

namespace adprune {

namespace {

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

bool unit_interval(double x) { return x >= 0.0 && x <= 1.0; }

std::vector<double> random_unit_vector(RandomStream& rng, std::uint32_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  normalize_in_place(v);
  return v;
}

// Unit vector scattered around `center` with noise of norm ~spread.
std::vector<double> scatter(RandomStream& rng, const std::vector<double>& center, double spread) {
  const double sd = spread / std::sqrt(static_cast<double>(center.size()));
  std::vector<double> v(center);
  for (double& x : v) x += sd * rng.normal();
  normalize_in_place(v);
  return v;
}

}  // namespace

void WorldConfig::validate() const {
  require(num_advertisers >= 1, "num_advertisers", "must be >= 1");
  require(campaigns_per_advertiser >= 1, "campaigns_per_advertiser", "must be >= 1");
  require(groups_per_advertiser >= 1, "groups_per_advertiser", "must be >= 1");
  require(ads_per_group >= 1, "ads_per_group", "must be >= 1");
  require(keywords_per_group >= 1, "keywords_per_group", "must be >= 1");
  require(num_keywords >= 1, "num_keywords", "must be >= 1");
  require(num_styles >= 1, "num_styles", "must be >= 1");
  require(num_strong_styles <= num_styles, "num_strong_styles", "must be <= num_styles");
  require(max_styles_per_ad >= 1, "max_styles_per_ad", "must be >= 1");
  require(num_query_classes >= 1, "num_query_classes", "must be >= 1");
  require(class_weights.empty() || class_weights.size() == num_query_classes, "class_weights",
          "must be empty or have one weight per query class");
  double total = 0.0;
  for (double w : class_weights) {
    require(std::isfinite(w) && w >= 0.0, "class_weights", "weights must be finite and >= 0");
    total += w;
  }
  require(class_weights.empty() || total > 0.0, "class_weights", "weights must not all be zero");
  require(embedding_dim >= 2, "embedding_dim", "must be >= 2");
  require(num_geos >= 1 && num_geos <= 32, "num_geos", "must be in [1, 32]");
  require(unit_interval(whale_fraction), "whale_fraction", "must be in [0, 1]");
  require(whale_group_multiplier >= 1, "whale_group_multiplier", "must be >= 1");
  require(whale_ad_multiplier >= 1, "whale_ad_multiplier", "must be >= 1");
  require(std::isfinite(whale_bid_multiplier) && whale_bid_multiplier > 0.0, "whale_bid_multiplier",
          "must be > 0");
  require(std::isfinite(bid_log_mean), "bid_log_mean", "must be finite");
  require(std::isfinite(bid_log_sd) && bid_log_sd >= 0.0, "bid_log_sd", "must be >= 0");
  require(std::isfinite(min_bid) && min_bid > 0.0, "min_bid", "must be > 0");
  require(unit_interval(cross_class_keyword_rate), "cross_class_keyword_rate", "must be in [0, 1]");
  require(unit_interval(geo_restrict_rate), "geo_restrict_rate", "must be in [0, 1]");
  require(unit_interval(time_restrict_rate), "time_restrict_rate", "must be in [0, 1]");
  require(unit_interval(blacklist_rate), "blacklist_rate", "must be in [0, 1]");
  require(unit_interval(budget_rate), "budget_rate", "must be in [0, 1]");
  require(unit_interval(style_unavailable_rate), "style_unavailable_rate", "must be in [0, 1]");
  require(class_spread >= 0.0, "class_spread", "must be >= 0");
  require(advertiser_spread >= 0.0, "advertiser_spread", "must be >= 0");
  require(creative_spread >= 0.0, "creative_spread", "must be >= 0");
  require(std::isfinite(click_intercept), "click_intercept", "must be finite");
  require(std::isfinite(click_sim_weight), "click_sim_weight", "must be finite");
  require(std::isfinite(click_quality_weight) && click_quality_weight > 0.0, "click_quality_weight",
          "must be > 0");
  require(std::isfinite(position_decay) && position_decay >= 0.0, "position_decay", "must be >= 0");
  require(weak_style_bonus_max >= 0.0, "weak_style_bonus_max", "must be >= 0");
  require(strong_style_bonus_min >= weak_style_bonus_max, "strong_style_bonus_min",
          "must be >= weak_style_bonus_max");
  require(strong_style_bonus_max >= strong_style_bonus_min, "strong_style_bonus_max",
          "must be >= strong_style_bonus_min");
  require(std::isfinite(coarse_noise) && coarse_noise >= 0.0, "coarse_noise", "must be >= 0");
}

void World::finalize() {
  if (embedding_dim < 2) throw ConfigError("embedding_dim", "must be >= 2");
  const auto num_classes = static_cast<std::uint32_t>(class_centroids.size());
  if (num_classes == 0) throw ConfigError("class_centroids", "at least one query class required");
  if (class_weights.size() != num_classes) throw ConfigError("class_weights", "one weight per class");
  for (const auto& c : class_centroids) {
    if (c.size() != embedding_dim) throw ConfigError("class_centroids", "embedding length mismatch");
  }

  for (std::size_t i = 0; i < keywords.size(); ++i) {
    if (keywords[i].keyword_id != i) throw LookupError("keyword ids must be dense and ordered");
    if (keywords[i].embedding.size() != embedding_dim)
      throw ConfigError("keywords", "embedding length mismatch for keyword " + std::to_string(i));
  }
  for (std::size_t i = 0; i < styles.size(); ++i) {
    if (styles[i].style_id != i) throw LookupError("style ids must be dense and ordered");
    if (styles[i].bonus_by_class.size() != num_classes ||
        styles[i].available_by_class.size() != num_classes)
      throw ConfigError("styles", "per-class tables must cover every query class");
  }

  std::size_t total_groups = 0;
  std::size_t total_creatives = 0;
  for (const auto& adv : advertisers) {
    for (const auto& camp : adv.campaigns) {
      total_groups += camp.groups.size();
      for (const auto& g : camp.groups) total_creatives += g.ads.size();
    }
  }
  constexpr std::uint32_t kUnset = ~0u;
  creative_refs_.assign(total_creatives, CreativeRef{kUnset, 0, 0, 0});
  group_refs_.assign(total_groups, CreativeRef{kUnset, 0, 0, 0});
  keyword_unit_index.assign(keywords.size(), {});

  for (std::uint32_t a = 0; a < advertisers.size(); ++a) {
    const auto& adv = advertisers[a];
    if (adv.advertiser_id != a) throw LookupError("advertiser ids must be dense and ordered");
    if (!(adv.quality_score >= 0.0 && adv.quality_score <= 1.0))
      throw ConfigError("quality_score", "advertiser " + std::to_string(a) + " outside [0, 1]");
    for (std::uint32_t c = 0; c < adv.campaigns.size(); ++c) {
      const auto& camp = adv.campaigns[c];
      for (std::uint32_t g = 0; g < camp.groups.size(); ++g) {
        const auto& grp = camp.groups[g];
        if (grp.group_id >= total_groups || group_refs_[grp.group_id].advertiser != kUnset)
          throw LookupError("group id " + std::to_string(grp.group_id) + " is out of range or duplicated");
        group_refs_[grp.group_id] = CreativeRef{a, c, g, 0};
        if (grp.keyword_ids.empty() || grp.ads.empty())
          throw ConfigError("groups", "group " + std::to_string(grp.group_id) +
                                          " needs at least one keyword and one ad");
        for (KeywordId kw : grp.keyword_ids) {
          if (kw >= keywords.size())
            throw LookupError("group " + std::to_string(grp.group_id) + " references unknown keyword");
          keyword_unit_index[kw].push_back(UnitRef{a, grp.group_id});
        }
        for (std::uint32_t i = 0; i < grp.ads.size(); ++i) {
          const auto& ad = grp.ads[i];
          if (ad.creative_id >= total_creatives || creative_refs_[ad.creative_id].advertiser != kUnset)
            throw LookupError("creative id " + std::to_string(ad.creative_id) +
                              " is out of range or duplicated");
          creative_refs_[ad.creative_id] = CreativeRef{a, c, g, i};
          if (!(std::isfinite(ad.bid) && ad.bid > 0.0))
            throw ConfigError("bid", "creative " + std::to_string(ad.creative_id) + " must bid > 0");
          if (ad.creative_embedding.size() != embedding_dim)
            throw ConfigError("creative_embedding", "length mismatch for creative " +
                                                        std::to_string(ad.creative_id));
          if (ad.compatible_style_ids.empty())
            throw ConfigError("compatible_style_ids", "creative " + std::to_string(ad.creative_id) +
                                                          " has no compatible style");
          bool any_strong = false;
          for (StyleId s : ad.compatible_style_ids) {
            if (s >= styles.size()) throw LookupError("creative references unknown style");
            any_strong = any_strong || styles[s].strong;
          }
          if (any_strong != ad.strong_style_compatible)
            throw ConfigError("strong_style_compatible", "flag disagrees with compatible styles");
        }
      }
    }
  }
  for (const auto& [adv, cls] : blacklist) {
    if (adv >= advertisers.size() || cls >= num_classes)
      throw LookupError("blacklist entry references unknown advertiser or class");
  }
}

const Advertiser& World::advertiser(AdvertiserId id) const {
  if (id >= advertisers.size()) throw LookupError("unknown advertiser id " + std::to_string(id));
  return advertisers[id];
}

const CreativeRef& World::creative_ref(CreativeId id) const {
  if (id >= creative_refs_.size()) throw LookupError("unknown creative id " + std::to_string(id));
  return creative_refs_[id];
}

const AdCreativeEntry& World::creative(CreativeId id) const {
  const auto& r = creative_ref(id);
  return advertisers[r.advertiser].campaigns[r.campaign].groups[r.group].ads[r.ad];
}

const Group& World::group(GroupId id) const {
  if (id >= group_refs_.size()) throw LookupError("unknown group id " + std::to_string(id));
  const auto& r = group_refs_[id];
  return advertisers[r.advertiser].campaigns[r.campaign].groups[r.group];
}

AdvertiserId World::group_owner(GroupId id) const {
  if (id >= group_refs_.size()) throw LookupError("unknown group id " + std::to_string(id));
  return group_refs_[id].advertiser;
}

const Style& World::style(StyleId id) const {
  if (id >= styles.size()) throw LookupError("unknown style id " + std::to_string(id));
  return styles[id];
}

const Keyword& World::keyword(KeywordId id) const {
  if (id >= keywords.size()) throw LookupError("unknown keyword id " + std::to_string(id));
  return keywords[id];
}

World generate_world(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  World w;
  w.config = config;
  w.seed = seed;
  w.embedding_dim = config.embedding_dim;
  w.class_spread = config.class_spread;
  w.num_geos = config.num_geos;
  w.click_model_params = ClickModelParams{config.click_intercept, config.click_sim_weight,
                                          config.click_quality_weight, config.position_decay};
  const std::uint32_t dim = config.embedding_dim;
  const std::uint32_t num_classes = config.num_query_classes;

  RandomStream class_rng = RandomStream::derive(seed, stream_tag("world-classes"));
  for (std::uint32_t c = 0; c < num_classes; ++c) w.class_centroids.push_back(random_unit_vector(class_rng, dim));
  w.class_weights = config.class_weights.empty() ? std::vector<double>(num_classes, 1.0) : config.class_weights;
  const double weight_total = std::accumulate(w.class_weights.begin(), w.class_weights.end(), 0.0);
  for (double& x : w.class_weights) x /= weight_total;

  RandomStream kw_rng = RandomStream::derive(seed, stream_tag("world-keywords"));
  std::vector<std::vector<KeywordId>> keywords_by_class(num_classes);
  for (std::uint32_t k = 0; k < config.num_keywords; ++k) {
    Keyword kw;
    kw.keyword_id = k;
    kw.query_class = k % num_classes;
    kw.embedding = scatter(kw_rng, w.class_centroids[kw.query_class], config.class_spread);
    keywords_by_class[kw.query_class].push_back(k);
    w.keywords.push_back(std::move(kw));
  }

  RandomStream style_rng = RandomStream::derive(seed, stream_tag("world-styles"));
  for (std::uint32_t s = 0; s < config.num_styles; ++s) {
    Style st;
    st.style_id = s;
    st.strong = s < config.num_strong_styles;
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      st.bonus_by_class.push_back(st.strong ? style_rng.uniform(config.strong_style_bonus_min,
                                                                config.strong_style_bonus_max)
                                            : style_rng.uniform(0.0, config.weak_style_bonus_max));
      const bool dropped = !st.strong && style_rng.uniform() < config.style_unavailable_rate;
      st.available_by_class.push_back(!dropped);
    }
    w.styles.push_back(std::move(st));
  }

  // Whales are a fixed count, chosen by a seeded shuffle.
  const auto num_whales =
      static_cast<std::uint32_t>(std::floor(config.whale_fraction * config.num_advertisers));
  std::vector<bool> is_whale(config.num_advertisers, false);
  {
    RandomStream whale_rng = RandomStream::derive(seed, stream_tag("world-whales"));
    std::vector<std::uint32_t> order(config.num_advertisers);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[whale_rng.uniform_index(i)]);
    for (std::uint32_t i = 0; i < num_whales; ++i) is_whale[order[i]] = true;
  }

  RandomStream adv_rng = RandomStream::derive(seed, stream_tag("world-advertisers"));
  GroupId next_group = 0;
  CreativeId next_creative = 0;
  const std::uint32_t kw_per_group = std::min(config.keywords_per_group, config.num_keywords);
  for (std::uint32_t a = 0; a < config.num_advertisers; ++a) {
    Advertiser adv;
    adv.advertiser_id = a;
    adv.home_class = static_cast<QueryClass>(adv_rng.discrete(w.class_weights));
    adv.quality_score = adv_rng.uniform();
    if (adv_rng.uniform() < config.budget_rate) adv.daily_budget = 50.0 + 450.0 * adv_rng.uniform();
    const auto centroid = scatter(adv_rng, w.class_centroids[adv.home_class], config.advertiser_spread);

    const bool whale = is_whale[a];
    const std::uint32_t num_groups = config.groups_per_advertiser * (whale ? config.whale_group_multiplier : 1);
    const std::uint32_t ads_per_group = config.ads_per_group * (whale ? config.whale_ad_multiplier : 1);
    const double bid_scale = whale ? config.whale_bid_multiplier : 1.0;
    const std::uint32_t num_campaigns = std::min(config.campaigns_per_advertiser, num_groups);
    for (std::uint32_t c = 0; c < num_campaigns; ++c) adv.campaigns.push_back(Campaign{c, {}});

    const auto& home_keywords = keywords_by_class[adv.home_class];
    for (std::uint32_t g = 0; g < num_groups; ++g) {
      Group grp;
      grp.group_id = next_group++;
      while (grp.keyword_ids.size() < kw_per_group) {
        KeywordId kw;
        if (!home_keywords.empty() && adv_rng.uniform() >= config.cross_class_keyword_rate) {
          kw = home_keywords[adv_rng.uniform_index(home_keywords.size())];
        } else {
          kw = static_cast<KeywordId>(adv_rng.uniform_index(config.num_keywords));
        }
        if (std::find(grp.keyword_ids.begin(), grp.keyword_ids.end(), kw) == grp.keyword_ids.end())
          grp.keyword_ids.push_back(kw);
      }
      if (adv_rng.uniform() < config.geo_restrict_rate) {
        std::uint32_t mask = 0;
        while (mask == 0) mask = static_cast<std::uint32_t>(adv_rng.next_u64()) & ((config.num_geos == 32)
                                                                                       ? ~0u
                                                                                       : ((1u << config.num_geos) - 1u));
        grp.target_constraints.geo_mask = mask;
      }
      if (adv_rng.uniform() < config.time_restrict_rate) {
        const auto start = static_cast<std::uint32_t>(adv_rng.uniform_index(kHoursPerDay));
        std::uint32_t mask = 0;
        for (std::uint32_t h = 0; h < kHoursPerDay / 2; ++h) mask |= 1u << ((start + h) % kHoursPerDay);
        grp.target_constraints.hour_mask = mask;
      }
      for (std::uint32_t i = 0; i < ads_per_group; ++i) {
        AdCreativeEntry ad;
        ad.creative_id = next_creative++;
        ad.creative_embedding = scatter(adv_rng, centroid, config.creative_spread);
        ad.bid = std::max(config.min_bid, std::exp(config.bid_log_mean + config.bid_log_sd * adv_rng.normal())) *
                 bid_scale;
        const auto n_styles = static_cast<std::uint32_t>(
            1 + adv_rng.uniform_index(std::min(config.max_styles_per_ad, config.num_styles)));
        while (ad.compatible_style_ids.size() < n_styles) {
          const auto s = static_cast<StyleId>(adv_rng.uniform_index(config.num_styles));
          if (std::find(ad.compatible_style_ids.begin(), ad.compatible_style_ids.end(), s) ==
              ad.compatible_style_ids.end())
            ad.compatible_style_ids.push_back(s);
        }
        std::sort(ad.compatible_style_ids.begin(), ad.compatible_style_ids.end());
        ad.strong_style_compatible = std::any_of(ad.compatible_style_ids.begin(), ad.compatible_style_ids.end(),
                                                 [&](StyleId s) { return w.styles[s].strong; });
        grp.ads.push_back(std::move(ad));
      }
      adv.campaigns[g % num_campaigns].groups.push_back(std::move(grp));
    }
    w.advertisers.push_back(std::move(adv));
  }

  RandomStream bl_rng = RandomStream::derive(seed, stream_tag("world-blacklist"));
  for (std::uint32_t a = 0; a < config.num_advertisers; ++a) {
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      if (bl_rng.uniform() < config.blacklist_rate) w.blacklist.insert({a, c});
    }
  }

  w.finalize();
  return w;
}

Query sample_query(const World& world, RandomStream& rng, QueryId query_id) {
  Query q;
  q.query_id = query_id;
  q.query_class = static_cast<QueryClass>(rng.discrete(world.class_weights));
  q.query_embedding = scatter(rng, world.class_centroids[q.query_class], world.class_spread);
  q.geo = static_cast<std::uint32_t>(rng.uniform_index(world.num_geos));
  q.timestamp = rng.uniform_index(7 * kHoursPerDay);
  return q;
}

Query query_at(const World& world, std::uint64_t seed, std::uint64_t tag, QueryId index) {
  RandomStream rng = RandomStream::derive(seed, tag, index);
  return sample_query(world, rng, index);
}

double style_bonus(const World& world, StyleId style, QueryClass query_class) {
  const auto& st = world.style(style);
  if (query_class >= st.bonus_by_class.size()) throw LookupError("unknown query class");
  return st.bonus_by_class[query_class];
}

double click_prob_first_position(const World& world, AdvertiserId advertiser, CreativeId creative,
                                 double bonus, const Query& query) {
  const auto& adv = world.advertiser(advertiser);
  const auto& ad = world.creative(creative);
  if (world.creative_ref(creative).advertiser != advertiser)
    throw LookupError("creative " + std::to_string(creative) + " does not belong to advertiser " +
                      std::to_string(advertiser));
  const auto& p = world.click_model_params;
  const double logit = p.intercept + p.sim_weight * cosine(query.query_embedding, ad.creative_embedding) +
                       p.quality_weight * adv.quality_score + bonus;
  return sigmoid(logit);
}

double click_prob(const World& world, AdvertiserId advertiser, CreativeId creative,
                  std::optional<StyleId> style, const Query& query, std::uint32_t position) {
  if (position < 1) throw LookupError("position must be >= 1");
  const double bonus = style ? style_bonus(world, *style, query.query_class) : 0.0;
  const double p1 = click_prob_first_position(world, advertiser, creative, bonus, query);
  const double decay = std::pow(static_cast<double>(position), -world.click_model_params.position_decay);
  return std::clamp(p1 * decay, 0.0, 1.0);
}

}  // namespace adprune
