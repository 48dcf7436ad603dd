#pragma once

#include <cmath>
#include <vector>

#include "adprune/catalog.hpp"
#include "adprune/downstream.hpp"
#include "adprune/errors.hpp"
#include "adprune/upstream.hpp"

namespace adprune::fixtures {

// Hand-assembled worlds for tests that need exact control over geometry,
// bids and styles. One campaign per advertiser.
class WorldBuilder {
 public:
  explicit WorldBuilder(std::uint32_t dim = 2, std::uint32_t num_classes = 1) {
    world_.embedding_dim = dim;
    world_.config.embedding_dim = dim;
    world_.config.num_query_classes = num_classes;
    world_.config.coarse_noise = 0.0;
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      std::vector<double> centroid(dim, 0.0);
      centroid[c % dim] = 1.0;
      world_.class_centroids.push_back(centroid);
    }
    world_.class_weights.assign(num_classes, 1.0 / num_classes);
    world_.class_spread = 0.0;
  }

  ClickModelParams& click_model() { return world_.click_model_params; }
  WorldConfig& config() { return world_.config; }

  KeywordId keyword(std::vector<double> embedding, QueryClass cls = 0) {
    const auto id = static_cast<KeywordId>(world_.keywords.size());
    world_.keywords.push_back(Keyword{id, std::move(embedding), cls});
    return id;
  }

  StyleId style(bool strong, double bonus, bool available = true) {
    const auto id = static_cast<StyleId>(world_.styles.size());
    const auto n = world_.class_centroids.size();
    world_.styles.push_back(Style{id, strong, std::vector<double>(n, bonus), std::vector<bool>(n, available)});
    return id;
  }

  AdvertiserId advertiser(double quality = 0.5) {
    const auto id = static_cast<AdvertiserId>(world_.advertisers.size());
    Advertiser a;
    a.advertiser_id = id;
    a.quality_score = quality;
    a.campaigns.push_back(Campaign{0, {}});
    world_.advertisers.push_back(std::move(a));
    return id;
  }

  GroupId group(AdvertiserId adv, std::vector<KeywordId> keywords, TargetConstraints target = {}) {
    const auto id = next_group_++;
    Group g;
    g.group_id = id;
    g.keyword_ids = std::move(keywords);
    g.target_constraints = target;
    world_.advertisers[adv].campaigns[0].groups.push_back(std::move(g));
    group_owner_.push_back(adv);
    return id;
  }

  CreativeId ad(GroupId group, double bid, std::vector<double> embedding, std::vector<StyleId> styles) {
    const auto id = next_creative_++;
    AdCreativeEntry e;
    e.creative_id = id;
    e.bid = bid;
    e.creative_embedding = std::move(embedding);
    e.compatible_style_ids = std::move(styles);
    for (StyleId s : e.compatible_style_ids) e.strong_style_compatible = e.strong_style_compatible || world_.styles[s].strong;
    for (auto& g : world_.advertisers[group_owner_[group]].campaigns[0].groups) {
      if (g.group_id == group) g.ads.push_back(std::move(e));
    }
    return id;
  }

  void blacklist(AdvertiserId adv, QueryClass cls) { world_.blacklist.insert({adv, cls}); }

  World build(std::uint64_t seed = 1) {
    World w = world_;
    w.seed = seed;
    w.finalize();
    return w;
  }

 private:
  World world_;
  GroupId next_group_ = 0;
  CreativeId next_creative_ = 0;
  std::vector<AdvertiserId> group_owner_;
};

inline Query make_query(std::vector<double> embedding, QueryClass cls = 0, QueryId id = 0) {
  Query q;
  q.query_id = id;
  q.query_class = cls;
  q.query_embedding = std::move(embedding);
  return q;
}

// Candidate detached from any world, for auction/baseline arithmetic.
inline AdCandidate make_candidate(CandidateId id, AdvertiserId adv, double bid, double coarse_ectr,
                                  CreativeId creative = 0, std::uint32_t dim = 2) {
  AdCandidate c;
  c.candidate_id = id;
  c.advertiser_id = adv;
  c.creative_id = creative;
  c.bid = bid;
  c.coarse_ectr = coarse_ectr;
  c.relevance = 0.5;
  c.ad_embedding.assign(dim, 0.0);
  return c;
}

inline FullAd make_full_ad(CandidateId id, AdvertiserId adv, double bid, double refined_ectr) {
  FullAd f;
  f.candidate = make_candidate(id, adv, bid, refined_ectr, id);
  f.refined_ectr = refined_ectr;
  return f;
}

// Small generated world that keeps tests fast but exercises every path.
inline WorldConfig small_world_config() {
  WorldConfig c;
  c.num_advertisers = 60;
  c.num_keywords = 300;
  c.groups_per_advertiser = 3;
  c.whale_fraction = 0.1;
  c.whale_group_multiplier = 4;
  c.whale_ad_multiplier = 2;
  return c;
}

inline UpstreamConfig small_upstream() {
  UpstreamConfig u;
  u.n_max = 200;
  u.max_keywords = 40;
  return u;
}

}  // namespace adprune::fixtures
