#include "adprune/features.hpp"

#include <cmath>
#include <string>

#include "adprune/errors.hpp"

namespace adprune {

namespace {

void require_finite(double x, const char* field) {
  if (!std::isfinite(x)) throw FeatureError(std::string("non-finite feature input: ") + field);
}

}  // namespace

FeatureSchema FeatureSchema::identity(std::uint32_t embedding_dim) {
  FeatureSchema s;
  s.embedding_dim = embedding_dim;
  s.offset.assign(s.length(), 0.0);
  s.scale.assign(s.length(), 1.0);
  return s;
}

void FeatureSchema::apply(std::span<double> values, std::size_t first) const {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = (values[i] - offset[first + i]) * scale[first + i];
}

EpisodeState EpisodeState::initial(const Query& query, const CandidateSet& candidates) {
  EpisodeState s;
  s.query = query;
  s.unselected = candidates.candidates;
  return s;
}

void EpisodeState::select(std::size_t unselected_index) {
  if (unselected_index >= unselected.size()) throw LookupError("selection index out of range");
  AdCandidate c = std::move(unselected[unselected_index]);
  unselected.erase(unselected.begin() + static_cast<std::ptrdiff_t>(unselected_index));
  per_advertiser_ecpm_acc[c.advertiser_id] += c.coarse_ectr * c.bid;
  selected.push_back(std::move(c));
  ++step;
}

std::vector<double> static_features(const AdCandidate& c, const Query& query) {
  require_finite(c.coarse_ectr, "coarse_ectr");
  require_finite(c.relevance, "relevance");
  require_finite(c.bid, "bid");
  if (c.bid <= -1.0) throw FeatureError("non-finite feature input: bid");
  if (!all_finite(query.query_embedding)) throw FeatureError("non-finite feature input: query_embedding");
  if (!all_finite(c.ad_embedding)) throw FeatureError("non-finite feature input: ad_embedding");
  if (query.query_embedding.size() != c.ad_embedding.size())
    throw FeatureError("embedding dimension mismatch between query and ad");

  std::vector<double> out;
  out.reserve(4 + 2 * c.ad_embedding.size());
  out.push_back(c.coarse_ectr);
  out.push_back(c.relevance);
  out.push_back(std::log1p(c.bid));
  out.insert(out.end(), query.query_embedding.begin(), query.query_embedding.end());
  out.insert(out.end(), c.ad_embedding.begin(), c.ad_embedding.end());
  out.push_back(c.strong_style_compatible ? 1.0 : 0.0);
  return out;
}

std::vector<double> dynamic_features(const AdCandidate& c, const EpisodeState& state) {
  const auto it = state.per_advertiser_ecpm_acc.find(c.advertiser_id);
  if (it == state.per_advertiser_ecpm_acc.end()) return {0.0, 0.0};
  return {1.0, std::log1p(it->second)};
}

FeatureVector feature_vector(const AdCandidate& c, const EpisodeState& state) {
  FeatureVector fv;
  fv.values = static_features(c, state.query);
  const auto dyn = dynamic_features(c, state);
  fv.values.insert(fv.values.end(), dyn.begin(), dyn.end());
  return fv;
}

Matrix state_features(const EpisodeState& state, const FeatureSchema& schema) {
  const std::size_t len = schema.length();
  Matrix m(state.unselected.size(), len);
  for (std::size_t i = 0; i < state.unselected.size(); ++i) {
    const auto fv = feature_vector(state.unselected[i], state);
    if (fv.values.size() != len) throw ShapeError("feature row length does not match schema");
    auto row = m.row(i);
    std::copy(fv.values.begin(), fv.values.end(), row.begin());
    schema.apply(row);
  }
  return m;
}

FeatureSchema fit_schema(const World& world, const UpstreamConfig& upstream, std::uint32_t num_queries,
                         std::uint64_t seed) {
  FeatureSchema schema = FeatureSchema::identity(world.embedding_dim);
  const std::size_t ls = schema.static_len();
  std::vector<double> sum(ls, 0.0);
  std::vector<double> sum_sq(ls, 0.0);
  std::size_t count = 0;
  for (std::uint32_t q = 0; q < num_queries; ++q) {
    const Query query = query_at(world, seed, stream_tag("schema-fit"), q);
    const auto set = retrieve(world, query, upstream);
    for (const auto& c : set.candidates) {
      const auto row = static_features(c, query);
      for (std::size_t j = 0; j < ls; ++j) {
        sum[j] += row[j];
        sum_sq[j] += row[j] * row[j];
      }
      ++count;
    }
  }
  if (count < 2) return schema;
  for (std::size_t j = 0; j < ls; ++j) {
    const double mean = sum[j] / static_cast<double>(count);
    const double var = std::max(0.0, sum_sq[j] / static_cast<double>(count) - mean * mean);
    const double sd = std::sqrt(var);
    schema.offset[j] = mean;
    schema.scale[j] = sd > 1e-9 ? 1.0 / sd : 1.0;
  }
  return schema;
}

}  // namespace adprune
