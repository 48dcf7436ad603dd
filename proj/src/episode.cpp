#include "adprune/episode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "adprune/errors.hpp"

namespace adprune {

void AgentConfig::validate() const {
  if (k < 1) throw ConfigError("k", "must be >= 1");
}

SelectionKernel::SelectionKernel(const PolicySnapshot& snapshot, const Query& query,
                                 std::span<const AdCandidate> candidates, std::uint32_t selection_cap)
    : params_(snapshot.params),
      schema_(snapshot.schema),
      candidates_(candidates),
      selection_cap_(selection_cap),
      static_len_(snapshot.schema.static_len()),
      feature_len_(snapshot.schema.length()),
      hidden_dim_(snapshot.params.hidden_dim()) {
  if (params_.feature_len() != feature_len_)
    throw ShapeError("policy expects " + std::to_string(params_.feature_len()) + " features, schema has " +
                     std::to_string(feature_len_));
  const std::size_t n = candidates.size();
  features_ = Matrix(n, feature_len_);
  static_hidden_ = Matrix(n, hidden_dim_);
  hidden_ = Matrix(n, hidden_dim_);
  scores_.assign(n, 0.0);
  selected_.assign(n, false);
  masked_.assign(n, false);
  available_ = n;
  const auto b1 = params_.b1();
  for (std::size_t i = 0; i < n; ++i) {
    const auto stat = static_features(candidates[i], query);
    if (stat.size() != static_len_) throw ShapeError("static feature length does not match schema");
    auto row = features_.row(i);
    std::copy(stat.begin(), stat.end(), row.begin());
    schema_.apply(row.first(static_len_), 0);
    schema_.apply(row.subspan(static_len_), static_len_);
    auto sh = static_hidden_.row(i);
    std::copy(b1.begin(), b1.end(), sh.begin());
    accumulate_hidden(params_, row.first(static_len_), 0, sh);
    rows_by_advertiser_[candidates[i].advertiser_id].push_back(i);
    rescore(i);
  }
}

void SelectionKernel::rescore(std::size_t row) {
  auto h = hidden_.row(row);
  const auto sh = static_hidden_.row(row);
  std::copy(sh.begin(), sh.end(), h.begin());
  accumulate_hidden(params_, features_.row(row).subspan(static_len_), static_len_, h);
  scores_[row] = output_from_hidden(params_, h);
  ++scoring_ops_;
}

std::size_t SelectionKernel::unselected_index(std::size_t row) const {
  std::size_t idx = 0;
  for (std::size_t r = 0; r < row; ++r) idx += selected_[r] ? 0 : 1;
  return idx;
}

std::span<const double> SelectionKernel::hidden(std::size_t row) const { return hidden_.row(row); }

std::span<const double> SelectionKernel::features(std::size_t row) const { return features_.row(row); }

void SelectionKernel::select(std::size_t row) {
  if (row >= candidates_.size() || masked_[row]) throw Error("selection of a masked or unknown candidate row");
  selected_[row] = true;
  masked_[row] = true;
  --available_;
  const auto& c = candidates_[row];
  const AdvertiserId adv = c.advertiser_id;
  ecpm_acc_[adv] += c.coarse_ectr * c.bid;
  const std::uint32_t picked = ++picked_[adv];
  const auto& rows = rows_by_advertiser_[adv];
  if (selection_cap_ > 0 && picked >= selection_cap_) {
    for (std::size_t r : rows) {
      if (!masked_[r]) {
        masked_[r] = true;
        --available_;
      }
    }
  } else {
    const double acc = std::log1p(ecpm_acc_[adv]);
    for (std::size_t r : rows) {
      if (masked_[r]) continue;
      auto dyn = features_.row(r).subspan(static_len_);
      dyn[0] = 1.0;
      dyn[1] = acc;
      schema_.apply(dyn, static_len_);
      rescore(r);
    }
  }
  ++step_;
}

std::uint64_t action_digest(std::uint64_t snapshot_id, QueryId query_id, std::uint32_t step,
                            std::uint64_t picks_hash) {
  return hash_keys(snapshot_id, query_id, step, picks_hash);
}

namespace {

std::vector<std::size_t> rows_by_id(const CandidateSet& set, const Trajectory& trajectory) {
  std::unordered_map<CandidateId, std::size_t> index;
  index.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) index.emplace(set.candidates[i].candidate_id, i);
  std::vector<std::size_t> rows;
  rows.reserve(trajectory.selected_candidate_ids.size());
  for (CandidateId id : trajectory.selected_candidate_ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw LookupError("trajectory refers to unknown candidate " + std::to_string(id));
    rows.push_back(it->second);
  }
  return rows;
}

Selection pass_through(const PolicySnapshot& snapshot, const Query& query, const CandidateSet& candidates) {
  Selection out;
  out.trajectory.query_id = query.query_id;
  out.trajectory.param_snapshot_id = snapshot.id;
  out.trajectory.pass_through = true;
  for (const auto& c : candidates.candidates) out.trajectory.selected_candidate_ids.push_back(c.candidate_id);
  return out;
}

}  // namespace

Selection select_candidates(const PolicySnapshot& snapshot, const Query& query, const CandidateSet& candidates,
                            const AgentConfig& agent, SelectionMode mode, RandomStream& rng) {
  if (candidates.size() <= agent.k) return pass_through(snapshot, query, candidates);
  Selection out;
  auto& traj = out.trajectory;
  traj.query_id = query.query_id;
  traj.param_snapshot_id = snapshot.id;
  SelectionKernel kernel(snapshot, query, candidates.candidates, agent.selection_cap);
  std::uint64_t picks = 0;
  while (traj.actions.size() < agent.k && kernel.has_action()) {
    const auto dist = kernel.distribution();
    const auto choice = select_action(dist, mode, rng);
    ActionRecord rec;
    rec.step = kernel.step();
    rec.chosen_index = static_cast<std::uint32_t>(kernel.unselected_index(choice.index));
    rec.chosen_candidate_id = candidates.candidates[choice.index].candidate_id;
    rec.log_prob = choice.log_prob;
    rec.feature_matrix_digest = action_digest(snapshot.id, query.query_id, rec.step, picks);
    kernel.select(choice.index);
    picks = hash_combine(picks, rec.chosen_candidate_id);
    traj.selected_candidate_ids.push_back(rec.chosen_candidate_id);
    traj.actions.push_back(rec);
  }
  out.scoring_ops = kernel.scoring_ops();
  return out;
}

namespace {

std::vector<bool> cap_mask(const EpisodeState& state, std::uint32_t selection_cap) {
  std::vector<bool> mask(state.unselected.size(), false);
  if (selection_cap == 0) return mask;
  std::unordered_map<AdvertiserId, std::uint32_t> picked;
  for (const auto& c : state.selected) ++picked[c.advertiser_id];
  for (std::size_t i = 0; i < state.unselected.size(); ++i) {
    const auto it = picked.find(state.unselected[i].advertiser_id);
    mask[i] = it != picked.end() && it->second >= selection_cap;
  }
  return mask;
}

bool all_masked(const std::vector<bool>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](bool m) { return m; });
}

}  // namespace

Selection select_candidates_reference(const PolicySnapshot& snapshot, const Query& query,
                                      const CandidateSet& candidates, const AgentConfig& agent, SelectionMode mode,
                                      RandomStream& rng) {
  if (candidates.size() <= agent.k) return pass_through(snapshot, query, candidates);
  Selection out;
  auto& traj = out.trajectory;
  traj.query_id = query.query_id;
  traj.param_snapshot_id = snapshot.id;
  EpisodeState state = EpisodeState::initial(query, candidates);
  std::uint64_t picks = 0;
  while (traj.actions.size() < agent.k && !state.unselected.empty()) {
    const auto mask = cap_mask(state, agent.selection_cap);
    if (all_masked(mask)) break;
    const Matrix features = state_features(state, snapshot.schema);
    out.scoring_ops += features.rows();
    const auto scores = score(snapshot.params, features);
    const auto dist = action_distribution(scores, mask);
    const auto choice = select_action(dist, mode, rng);
    ActionRecord rec;
    rec.step = state.step;
    rec.chosen_index = static_cast<std::uint32_t>(choice.index);
    rec.chosen_candidate_id = state.unselected[choice.index].candidate_id;
    rec.log_prob = choice.log_prob;
    rec.feature_matrix_digest = action_digest(snapshot.id, query.query_id, rec.step, picks);
    state.select(choice.index);
    picks = hash_combine(picks, rec.chosen_candidate_id);
    traj.selected_candidate_ids.push_back(rec.chosen_candidate_id);
    traj.actions.push_back(rec);
  }
  return out;
}

std::vector<AdCandidate> picked_candidates(const CandidateSet& candidates, const Trajectory& trajectory) {
  std::vector<AdCandidate> out;
  const auto rows = rows_by_id(candidates, trajectory);
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(candidates.candidates[r]);
  return out;
}

EpisodeResult run_episode(const World& world, const PolicySnapshot& snapshot, const Query& query,
                          const UpstreamConfig& upstream, const EnvConfig& env, const AgentConfig& agent,
                          SelectionMode mode, RandomStream& rng) {
  EpisodeResult r;
  r.query = query;
  r.candidates = retrieve(world, query, upstream);
  auto sel = select_candidates(snapshot, query, r.candidates, agent, mode, rng);
  r.trajectory = std::move(sel.trajectory);
  r.scoring_ops = sel.scoring_ops;
  r.outcome = evaluate(world, picked_candidates(r.candidates, r.trajectory), query, env);
  return r;
}

namespace {

void check_weights(const Trajectory& trajectory, std::span<const double> weights) {
  if (weights.size() != trajectory.actions.size())
    throw ShapeError("one weight per action expected: " + std::to_string(trajectory.actions.size()) + " actions, " +
                     std::to_string(weights.size()) + " weights");
}

}  // namespace

void accumulate_episode_gradient(const PolicySnapshot& snapshot, const Query& query,
                                 const CandidateSet& candidates, const Trajectory& trajectory,
                                 std::span<const double> weights, std::uint32_t selection_cap, PolicyParams& grad) {
  check_weights(trajectory, weights);
  if (trajectory.pass_through || trajectory.actions.empty()) return;
  if (!grad.same_shape(snapshot.params)) throw ShapeError("gradient shape does not match parameters");
  const auto last = std::find_if(weights.rbegin(), weights.rend(), [](double w) { return w != 0.0; });
  if (last == weights.rend()) return;
  const std::size_t steps = static_cast<std::size_t>(weights.rend() - last);

  const auto& params = snapshot.params;
  const std::size_t h_dim = params.hidden_dim();
  const std::size_t ls = snapshot.schema.static_len();
  const std::size_t len = params.feature_len();
  const std::size_t n = candidates.size();
  const auto rows = rows_by_id(candidates, trajectory);
  const auto w2 = params.w2();
  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();

  // Per-row coefficients of the W1 outer products. Static inputs never change
  // within an episode, so their coefficients accumulate across steps; the
  // dynamic block is flushed whenever the row's dynamic features change.
  Matrix acc_static(n, h_dim);
  Matrix acc_dyn(n, h_dim);
  std::vector<bool> touched(n, false);
  std::vector<bool> dyn_touched(n, false);
  std::unordered_map<AdvertiserId, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < n; ++i) rows_of[candidates.candidates[i].advertiser_id].push_back(i);

  SelectionKernel kernel(snapshot, query, candidates.candidates, selection_cap);
  const auto flush_dyn = [&](std::size_t r) {
    if (!dyn_touched[r]) return;
    const auto x = kernel.features(r);
    auto a = acc_dyn.row(r);
    for (std::size_t l = ls; l < len; ++l) {
      double* g = gw1.data() + l * h_dim;
      for (std::size_t h = 0; h < h_dim; ++h) g[h] += x[l] * a[h];
    }
    std::fill(a.begin(), a.end(), 0.0);
    dyn_touched[r] = false;
  };

  for (std::size_t t = 0; t < steps; ++t) {
    const std::size_t chosen = rows[t];
    const double w = weights[t];
    if (w != 0.0) {
      const auto dist = kernel.distribution();
      const auto& masked = kernel.masked();
      for (std::size_t i = 0; i < n; ++i) {
        if (masked[i]) continue;
        const double c = w * ((i == chosen ? 1.0 : 0.0) - dist[i]);
        if (c == 0.0) continue;
        const auto hid = kernel.hidden(i);
        auto as = acc_static.row(i);
        auto ad = acc_dyn.row(i);
        for (std::size_t h = 0; h < h_dim; ++h) {
          if (hid[h] <= 0.0) continue;
          gw2[h] += c * hid[h];
          const double d = c * w2[h];
          gb1[h] += d;
          as[h] += d;
          ad[h] += d;
        }
        touched[i] = true;
        dyn_touched[i] = true;
      }
    }
    for (std::size_t r : rows_of[candidates.candidates[chosen].advertiser_id]) flush_dyn(r);
    kernel.select(chosen);
  }
  for (std::size_t i = 0; i < n; ++i) {
    flush_dyn(i);
    if (!touched[i]) continue;
    const auto x = kernel.features(i);
    const auto a = acc_static.row(i);
    for (std::size_t l = 0; l < ls; ++l) {
      double* g = gw1.data() + l * h_dim;
      for (std::size_t h = 0; h < h_dim; ++h) g[h] += x[l] * a[h];
    }
  }
}

void accumulate_episode_gradient_reference(const PolicySnapshot& snapshot, const Query& query,
                                           const CandidateSet& candidates, const Trajectory& trajectory,
                                           std::span<const double> weights, std::uint32_t selection_cap,
                                           PolicyParams& grad) {
  check_weights(trajectory, weights);
  if (trajectory.pass_through) return;
  EpisodeState state = EpisodeState::initial(query, candidates);
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    const auto& action = trajectory.actions[t];
    if (weights[t] != 0.0) {
      const Matrix features = state_features(state, snapshot.schema);
      const auto mask = cap_mask(state, selection_cap);
      grad.add_scaled(grad_log_prob(snapshot.params, features, mask, action.chosen_index), weights[t]);
    }
    state.select(action.chosen_index);
  }
}

}  // namespace adprune
