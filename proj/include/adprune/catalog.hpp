#pragma once

// Synthetic ad ecosystem: advertiser accounts (campaigns, groups, creatives),
// the keyword inventory, display styles, the query mixture and the hidden
// click model. Everything here is fixed once a World has been generated.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "adprune/random.hpp"

namespace adprune {

using AdvertiserId = std::uint32_t;
using CampaignId = std::uint32_t;
using GroupId = std::uint32_t;
using CreativeId = std::uint32_t;
using KeywordId = std::uint32_t;
using StyleId = std::uint32_t;
using QueryClass = std::uint32_t;
using QueryId = std::uint64_t;

inline constexpr std::uint32_t kHoursPerDay = 24;
inline constexpr std::uint32_t kAllHours = (1u << kHoursPerDay) - 1u;

struct WorldConfig {
  std::uint32_t num_advertisers = 400;
  std::uint32_t campaigns_per_advertiser = 2;
  std::uint32_t groups_per_advertiser = 4;
  std::uint32_t ads_per_group = 3;
  std::uint32_t keywords_per_group = 6;
  std::uint32_t num_keywords = 2000;
  std::uint32_t num_styles = 10;
  std::uint32_t num_strong_styles = 3;
  std::uint32_t max_styles_per_ad = 3;
  std::uint32_t num_query_classes = 8;
  std::vector<double> class_weights;  // empty: uniform
  std::uint32_t embedding_dim = 8;
  std::uint32_t num_geos = 4;

  // Heavy-tailed account sizes: a fraction of advertisers own many more
  // groups and creatives and bid higher.
  double whale_fraction = 0.05;
  std::uint32_t whale_group_multiplier = 8;
  std::uint32_t whale_ad_multiplier = 3;
  double whale_bid_multiplier = 2.5;

  double bid_log_mean = 0.0;
  double bid_log_sd = 0.5;
  double min_bid = 0.05;
  double cross_class_keyword_rate = 0.15;
  double geo_restrict_rate = 0.1;
  double time_restrict_rate = 0.1;
  double blacklist_rate = 0.03;
  double budget_rate = 0.0;  // daily budgets are generated but never enforced

  double class_spread = 0.45;       // query / keyword scatter around class centroid
  double advertiser_spread = 0.5;   // advertiser centroid scatter around home class
  double creative_spread = 0.35;    // creative scatter around advertiser centroid

  double click_intercept = -3.0;
  double click_sim_weight = 1.5;
  double click_quality_weight = 1.0;
  double position_decay = 0.8;  // gamma in 1 / position^gamma
  double weak_style_bonus_max = 0.25;
  double strong_style_bonus_min = 0.5;
  double strong_style_bonus_max = 1.0;
  double style_unavailable_rate = 0.0;

  double coarse_noise = 0.25;  // eta: coarse eCTR = truth * exp(U(-eta, eta))

  // Throws ConfigError naming the first offending field.
  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

struct TargetConstraints {
  std::uint32_t geo_mask = ~0u;
  std::uint32_t hour_mask = kAllHours;
  bool allows(std::uint32_t geo, std::uint64_t timestamp) const {
    return ((geo_mask >> (geo % 32)) & 1u) && ((hour_mask >> (timestamp % kHoursPerDay)) & 1u);
  }
  bool operator==(const TargetConstraints&) const = default;
};

struct AdCreativeEntry {
  CreativeId creative_id = 0;
  double bid = 0.0;
  std::vector<double> creative_embedding;
  bool strong_style_compatible = false;
  std::vector<StyleId> compatible_style_ids;
  bool operator==(const AdCreativeEntry&) const = default;
};

struct Group {
  GroupId group_id = 0;
  std::vector<KeywordId> keyword_ids;
  std::vector<AdCreativeEntry> ads;
  TargetConstraints target_constraints;
  bool operator==(const Group&) const = default;
};

struct Campaign {
  CampaignId campaign_id = 0;
  std::vector<Group> groups;
  bool operator==(const Campaign&) const = default;
};

struct Advertiser {
  AdvertiserId advertiser_id = 0;
  std::vector<Campaign> campaigns;
  double quality_score = 0.5;
  std::optional<double> daily_budget;
  QueryClass home_class = 0;
  bool operator==(const Advertiser&) const = default;
};

struct Keyword {
  KeywordId keyword_id = 0;
  std::vector<double> embedding;
  QueryClass query_class = 0;
  bool operator==(const Keyword&) const = default;
};

struct Style {
  StyleId style_id = 0;
  bool strong = false;
  std::vector<double> bonus_by_class;  // logit bonus, >= 0
  std::vector<bool> available_by_class;
  bool operator==(const Style&) const = default;
};

struct ClickModelParams {
  double intercept = -3.0;
  double sim_weight = 1.5;
  double quality_weight = 1.0;
  double position_decay = 0.8;
  bool operator==(const ClickModelParams&) const = default;
};

struct UnitRef {
  AdvertiserId advertiser_id = 0;
  GroupId group_id = 0;
  bool operator==(const UnitRef&) const = default;
};

struct Query {
  QueryId query_id = 0;
  QueryClass query_class = 0;
  std::vector<double> query_embedding;
  std::uint32_t geo = 0;
  std::uint64_t timestamp = 0;
  bool operator==(const Query&) const = default;
};

// Location of a creative inside the account hierarchy.
struct CreativeRef {
  std::uint32_t advertiser = 0;
  std::uint32_t campaign = 0;
  std::uint32_t group = 0;
  std::uint32_t ad = 0;
  bool operator==(const CreativeRef&) const = default;
};

class World {
 public:
  WorldConfig config;
  std::uint64_t seed = 0;
  std::uint32_t embedding_dim = 0;
  std::vector<Advertiser> advertisers;
  std::vector<Keyword> keywords;
  std::vector<Style> styles;
  std::set<std::pair<AdvertiserId, QueryClass>> blacklist;
  ClickModelParams click_model_params;
  std::vector<std::vector<double>> class_centroids;
  std::vector<double> class_weights;
  double class_spread = 0.0;
  std::uint32_t num_geos = 1;

  // Derived by finalize(); not serialized.
  std::vector<std::vector<UnitRef>> keyword_unit_index;

  // Rebuilds the indexes and checks every invariant (referential integrity,
  // embedding lengths, positive bids). Throws LookupError / ConfigError.
  void finalize();

  const Advertiser& advertiser(AdvertiserId id) const;
  const Group& group(GroupId id) const;
  const AdCreativeEntry& creative(CreativeId id) const;
  const CreativeRef& creative_ref(CreativeId id) const;
  AdvertiserId group_owner(GroupId id) const;
  const Style& style(StyleId id) const;
  const Keyword& keyword(KeywordId id) const;
  bool blacklisted(AdvertiserId advertiser, QueryClass query_class) const {
    return blacklist.contains({advertiser, query_class});
  }
  std::size_t num_creatives() const { return creative_refs_.size(); }
  std::size_t num_groups() const { return group_refs_.size(); }

  bool operator==(const World&) const = default;

 private:
  std::vector<CreativeRef> creative_refs_;
  std::vector<CreativeRef> group_refs_;  // .ad unused
};

World generate_world(const WorldConfig& config, std::uint64_t seed);

// Query drawn from the class mixture: class by weight, embedding scattered
// around the class centroid, uniform geo and hour.
Query sample_query(const World& world, RandomStream& rng, QueryId query_id = 0);

// Query i of the stream identified by (seed, tag); independent of how many
// other queries were drawn.
Query query_at(const World& world, std::uint64_t seed, std::uint64_t tag, QueryId index);

// Hidden click model, logistic in (query/creative similarity, advertiser
// quality, style bonus) with a 1 / position^gamma decay.
double click_prob_first_position(const World& world, AdvertiserId advertiser,
                                 CreativeId creative, double style_bonus, const Query& query);
double click_prob(const World& world, AdvertiserId advertiser, CreativeId creative,
                  std::optional<StyleId> style, const Query& query, std::uint32_t position);
double style_bonus(const World& world, StyleId style, QueryClass query_class);

// Archive I/O. The archive carries a format version, the seed and the
// generating config; saving the same World always yields the same bytes.
std::string serialize_world(const World& world);
World deserialize_world(const std::string& text);
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

}  // namespace adprune
