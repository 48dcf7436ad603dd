#pragma once

// Per-candidate feature rows: a static block fixed for the whole episode and
// a dynamic block describing what has already been selected.
//
//   static  = [coarse_ectr, relevance, log(1+bid), query_embedding,
//              ad_embedding, strong_style_flag]
//   dynamic = [same_advertiser_selected, log(1+accumulated coarse_ectr*bid)]

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "adprune/catalog.hpp"
#include "adprune/numeric.hpp"
#include "adprune/upstream.hpp"

namespace adprune {

inline constexpr int kFeatureSchemaVersion = 1;
inline constexpr std::size_t kDynamicFeatureLen = 2;

constexpr std::size_t static_feature_len(std::uint32_t embedding_dim) { return 4 + 2 * std::size_t{embedding_dim}; }

// Column layout plus fixed affine normalization x' = (x - offset) * scale.
struct FeatureSchema {
  int version = kFeatureSchemaVersion;
  std::uint32_t embedding_dim = 0;
  std::vector<double> offset;
  std::vector<double> scale;

  std::size_t static_len() const { return static_feature_len(embedding_dim); }
  std::size_t dynamic_len() const { return kDynamicFeatureLen; }
  std::size_t length() const { return static_len() + dynamic_len(); }

  static FeatureSchema identity(std::uint32_t embedding_dim);
  // Normalizes a row (or the static / dynamic part, selected by `first`).
  void apply(std::span<double> values, std::size_t first = 0) const;
  bool operator==(const FeatureSchema&) const = default;
};

struct FeatureVector {
  std::vector<double> values;
  int schema_version = kFeatureSchemaVersion;
};

struct EpisodeState {
  Query query;
  std::vector<AdCandidate> unselected;
  std::vector<AdCandidate> selected;
  std::uint32_t step = 1;
  std::map<AdvertiserId, double> per_advertiser_ecpm_acc;  // key present iff selected

  static EpisodeState initial(const Query& query, const CandidateSet& candidates);
  // Moves unselected[index] to the end of `selected` and advances the step.
  void select(std::size_t unselected_index);
};

std::vector<double> static_features(const AdCandidate& candidate, const Query& query);
std::vector<double> dynamic_features(const AdCandidate& candidate, const EpisodeState& state);
FeatureVector feature_vector(const AdCandidate& candidate, const EpisodeState& state);

// One normalized row per unselected candidate, in unselected order.
Matrix state_features(const EpisodeState& state, const FeatureSchema& schema);

// Fits per-column normalization on the candidates retrieved for a fixed
// sample of queries. Dynamic columns stay unnormalized.
FeatureSchema fit_schema(const World& world, const UpstreamConfig& upstream, std::uint32_t num_queries,
                         std::uint64_t seed);

}  // namespace adprune
