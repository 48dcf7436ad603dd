#pragma once

// JSON bindings for the configuration structs shared by the archive format,
// checkpoints and the run config file.

#include "json.hpp"

#include "adprune/baselines.hpp"
#include "adprune/catalog.hpp"
#include "adprune/downstream.hpp"
#include "adprune/episode.hpp"
#include "adprune/gate.hpp"
#include "adprune/trainer.hpp"
#include "adprune/upstream.hpp"

namespace adprune {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    WorldConfig, num_advertisers, campaigns_per_advertiser, groups_per_advertiser, ads_per_group,
    keywords_per_group, num_keywords, num_styles, num_strong_styles, max_styles_per_ad,
    num_query_classes, class_weights, embedding_dim, num_geos, whale_fraction,
    whale_group_multiplier, whale_ad_multiplier, whale_bid_multiplier, bid_log_mean, bid_log_sd,
    min_bid, cross_class_keyword_rate, geo_restrict_rate, time_restrict_rate, blacklist_rate,
    budget_rate, class_spread, advertiser_spread, creative_spread, click_intercept,
    click_sim_weight, click_quality_weight, position_decay, weak_style_bonus_max,
    strong_style_bonus_min, strong_style_bonus_max, style_unavailable_rate, coarse_noise)

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(UpstreamConfig, similarity_threshold, max_keywords, n_max)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnvConfig, m_slots, reserve, diversity_cap, quality_threshold,
                                                style_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AgentConfig, k, selection_cap)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, hidden_dim, learning_rate, beta1, beta2, epsilon,
                                                batch_size, states_per_query, max_steps, checkpoint_every,
                                                eval_every, eval_queries, recall_j, schema_fit_queries,
                                                normalize_features, workers, queue_capacity, seed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SrqConfig, window, s0, r0)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GateConfig, eval_queries, traffic_fraction, cpm_tolerance, seed)

}  // namespace adprune
