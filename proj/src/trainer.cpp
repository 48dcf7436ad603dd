#include "adprune/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>

#include "json.hpp"

#include "adprune/baselines.hpp"
#include "adprune/errors.hpp"

namespace adprune {

using nlohmann::json;

RewardRecord reward_record(const AuctionOutcome& outcome) {
  RewardRecord r;
  r.query_id = outcome.query_id;
  for (const auto& s : outcome.shown) r.shown.emplace_back(s.candidate_id, s.ecpm);
  r.episode_reward = outcome.episode_reward;
  return r;
}

ShapedRewards shape_rewards(const Trajectory& trajectory, const RewardRecord& reward) {
  if (trajectory.query_id != reward.query_id)
    throw IntegrityError("join error: selection for query " + std::to_string(trajectory.query_id) +
                         " paired with reward for query " + std::to_string(reward.query_id));
  std::unordered_map<CandidateId, double> shown;
  for (const auto& [id, ecpm] : reward.shown) shown.emplace(id, ecpm);
  ShapedRewards out;
  out.raw.reserve(trajectory.actions.size());
  out.training.reserve(trajectory.actions.size());
  for (const auto& a : trajectory.actions) {
    const auto it = shown.find(a.chosen_candidate_id);
    const double r = it == shown.end() ? 0.0 : it->second;
    out.raw.push_back(r);
    out.training.push_back(std::log1p(r));
  }
  return out;
}

ShapedRewards shape_rewards(const Trajectory& trajectory, const AuctionOutcome& outcome) {
  return shape_rewards(trajectory, reward_record(outcome));
}

JoinResult join_logs(std::span<const Trajectory> selection_log, std::span<const RewardRecord> reward_log) {
  std::unordered_map<QueryId, std::size_t> rewards;
  for (std::size_t i = 0; i < reward_log.size(); ++i) {
    if (!rewards.emplace(reward_log[i].query_id, i).second)
      throw IntegrityError("duplicate query id " + std::to_string(reward_log[i].query_id) + " in reward log");
  }
  std::unordered_map<QueryId, std::size_t> selections;
  for (std::size_t i = 0; i < selection_log.size(); ++i) {
    if (!selections.emplace(selection_log[i].query_id, i).second)
      throw IntegrityError("duplicate query id " + std::to_string(selection_log[i].query_id) +
                           " in selection log");
  }
  JoinResult out;
  for (std::size_t i = 0; i < selection_log.size(); ++i) {
    const auto& traj = selection_log[i];
    const auto it = rewards.find(traj.query_id);
    if (it == rewards.end()) {
      ++out.unmatched_selections;
      continue;
    }
    out.matched.emplace_back(i, it->second);
    const auto shaped = shape_rewards(traj, reward_log[it->second]);
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
      const auto& a = traj.actions[t];
      out.samples.push_back({traj.query_id, a.step, a.chosen_index, a.log_prob, shaped.raw[t], shaped.training[t]});
    }
  }
  for (const auto& r : reward_log) {
    if (!selections.contains(r.query_id)) ++out.unmatched_rewards;
  }
  return out;
}

void write_selection_record(std::ostream& out, const Trajectory& t) {
  json actions = json::array();
  for (const auto& a : t.actions) {
    actions.push_back({{"step", a.step},
                       {"chosen_index", a.chosen_index},
                       {"candidate_id", a.chosen_candidate_id},
                       {"log_prob", a.log_prob},
                       {"digest", a.feature_matrix_digest}});
  }
  json j{{"query_id", t.query_id},
         {"snapshot_id", t.param_snapshot_id},
         {"pass_through", t.pass_through},
         {"selected", t.selected_candidate_ids},
         {"actions", std::move(actions)}};
  out << j.dump() << '\n';
  out.flush();
}

void write_reward_record(std::ostream& out, const RewardRecord& r) {
  json shown = json::array();
  for (const auto& [id, ecpm] : r.shown) shown.push_back({{"candidate_id", id}, {"ecpm", ecpm}});
  json j{{"query_id", r.query_id}, {"shown", std::move(shown)}, {"episode_reward", r.episode_reward}};
  out << j.dump() << '\n';
  out.flush();
}

namespace {

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<Trajectory> read_selection_log(const std::filesystem::path& path) {
  std::vector<Trajectory> out;
  for_each_line(path, [&](const json& j) {
    Trajectory t;
    t.query_id = j.at("query_id").get<QueryId>();
    t.param_snapshot_id = j.at("snapshot_id").get<std::uint64_t>();
    t.pass_through = j.at("pass_through").get<bool>();
    t.selected_candidate_ids = j.at("selected").get<std::vector<CandidateId>>();
    for (const auto& a : j.at("actions")) {
      t.actions.push_back({a.at("step").get<std::uint32_t>(), a.at("chosen_index").get<std::uint32_t>(),
                           a.at("candidate_id").get<CandidateId>(), a.at("log_prob").get<double>(),
                           a.at("digest").get<std::uint64_t>()});
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::vector<RewardRecord> read_reward_log(const std::filesystem::path& path) {
  std::vector<RewardRecord> out;
  for_each_line(path, [&](const json& j) {
    RewardRecord r;
    r.query_id = j.at("query_id").get<QueryId>();
    for (const auto& s : j.at("shown"))
      r.shown.emplace_back(s.at("candidate_id").get<CandidateId>(), s.at("ecpm").get<double>());
    r.episode_reward = j.at("episode_reward").get<double>();
    out.push_back(std::move(r));
  });
  return out;
}

void TrainConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("hidden_dim", "must be >= 1");
  if (!(learning_rate > 0.0 && std::isfinite(learning_rate))) throw ConfigError("learning_rate", "must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
  if (states_per_query < 1) throw ConfigError("states_per_query", "must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every", "must be >= 1");
  if (eval_every > 0 && eval_queries < 1) throw ConfigError("eval_queries", "must be >= 1 when evaluating");
  if (recall_j < 1) throw ConfigError("recall_j", "must be >= 1");
}

void write_curve_point(std::ostream& out, const CurvePoint& p) {
  json j{{"step", p.step},
         {"loss", p.loss},
         {"mean_reward", p.mean_reward},
         {"num_samples", p.num_samples},
         {"unmatched", p.unmatched},
         {"eval_fresh", p.eval_fresh}};
  if (std::isfinite(p.eval_recall)) {
    j["recall"] = p.eval_recall;
    j["eval_ecpm"] = p.eval_ecpm;
  }
  out << j.dump() << '\n';
}

EvalSummary evaluate_policy(const World& world, const PolicySnapshot& snapshot, const UpstreamConfig& upstream,
                            const EnvConfig& env, const AgentConfig& agent, std::uint32_t num_queries,
                            std::uint64_t seed, std::uint32_t recall_j) {
  EvalSummary s;
  s.queries = num_queries;
  double ecpm = 0.0;
  double recall = 0.0;
  RandomStream unused(0);
  for (std::uint32_t i = 0; i < num_queries; ++i) {
    const Query q = query_at(world, seed, stream_tag("eval-query"), i);
    const auto ep = run_episode(world, snapshot, q, upstream, env, agent, SelectionMode::kGreedy, unused);
    ecpm += ep.outcome.episode_reward;
    s.scoring_ops += ep.scoring_ops;
    if (!ep.trajectory.pass_through) {
      ++s.pruned_queries;
      recall += recall_top_j(ep.trajectory.selected_candidate_ids, ep.candidates, recall_j);
    }
  }
  s.mean_ecpm = num_queries ? ecpm / num_queries : 0.0;
  s.mean_recall = s.pruned_queries ? recall / s.pruned_queries : std::numeric_limits<double>::quiet_NaN();
  return s;
}

Checkpoint initial_checkpoint(const World& world, const UpstreamConfig& upstream, const TrainConfig& config) {
  Checkpoint c;
  c.world_seed = world.seed;
  c.schema = config.normalize_features
                 ? fit_schema(world, upstream, config.schema_fit_queries, config.seed)
                 : FeatureSchema::identity(world.embedding_dim);
  auto rng = RandomStream::derive(config.seed, stream_tag("policy-init"));
  c.params = PolicyParams::glorot(c.schema.length(), config.hidden_dim, rng, c.schema.version);
  c.adam = AdamState::for_params(c.params, config.learning_rate, config.beta1, config.beta2, config.epsilon);
  return c;
}

PolicySnapshot snapshot_of(const Checkpoint& c) { return PolicySnapshot{c.params, c.schema, c.training_step}; }

namespace {

struct EpisodeRequest {
  std::shared_ptr<const PolicySnapshot> snapshot;
  std::uint64_t step = 0;
  std::uint32_t slot = 0;
};

struct EpisodeDone {
  std::uint32_t slot = 0;
  EpisodeResult result;
};

EpisodeDone run_request(const World& world, const UpstreamConfig& upstream, const EnvConfig& env,
                        const AgentConfig& agent, const TrainConfig& config, const EpisodeRequest& req) {
  const QueryId qid = req.step * config.batch_size + req.slot;
  const Query q = query_at(world, config.seed, stream_tag("train-query"), qid);
  auto rng = RandomStream::derive(config.seed, stream_tag("train-episode"), req.step, req.slot);
  return {req.slot, run_episode(world, *req.snapshot, q, upstream, env, agent, SelectionMode::kSample, rng)};
}

// Indices of min(m, n) steps drawn uniformly without replacement.
std::vector<bool> subsample(std::size_t n, std::size_t m, RandomStream& rng) {
  std::vector<bool> keep(n, false);
  if (m >= n) {
    keep.assign(n, true);
    return keep;
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
    keep[idx[i]] = true;
  }
  return keep;
}

std::filesystem::path dump_non_finite(const std::optional<std::filesystem::path>& out_dir, std::uint64_t step,
                                      double loss_sum, std::uint64_t samples, const PolicyParams& params,
                                      const std::vector<double>& episode_rewards) {
  json j{{"step", step},
         {"loss_sum", std::isfinite(loss_sum) ? json(loss_sum) : json(std::to_string(loss_sum))},
         {"num_samples", samples},
         {"params_finite", all_finite(params.flat())},
         {"episode_rewards_finite", all_finite(episode_rewards)}};
  if (!out_dir) return {};
  const auto path = *out_dir / ("nonfinite-step-" + std::to_string(step) + ".json");
  std::ofstream(path) << j.dump(2) << '\n';
  return path;
}

}  // namespace

TrainResult train(const World& world, const UpstreamConfig& upstream, const EnvConfig& env,
                  const AgentConfig& agent, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  agent.validate();
  env.validate();
  upstream.validate();

  TrainResult result;
  Checkpoint& ckpt = result.checkpoint;
  if (options.resume) {
    ckpt = *options.resume;
    check_schema(ckpt, FeatureSchema::identity(world.embedding_dim));
    if (ckpt.params.hidden_dim() != config.hidden_dim)
      throw SchemaError("checkpoint hidden width " + std::to_string(ckpt.params.hidden_dim()) +
                        " does not match configured " + std::to_string(config.hidden_dim));
  } else {
    ckpt = initial_checkpoint(world, upstream, config);
  }

  std::ofstream selection_log, reward_log, curve_out;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    const auto mode = options.resume ? std::ios::app : std::ios::trunc;
    curve_out.open(*options.out_dir / "curve.jsonl", std::ios::out | mode);
    if (options.write_episode_logs) {
      selection_log.open(*options.out_dir / "selection.jsonl", std::ios::out | mode);
      reward_log.open(*options.out_dir / "reward.jsonl", std::ios::out | mode);
    }
  }

  BoundedQueue<EpisodeRequest> requests(config.queue_capacity);
  BoundedQueue<EpisodeDone> done(std::max<std::size_t>(config.queue_capacity, config.batch_size));
  std::vector<std::thread> workers;
  std::exception_ptr worker_failure;
  std::mutex failure_mutex;
  for (std::uint32_t w = 0; w < config.workers; ++w) {
    workers.emplace_back([&] {
      while (auto req = requests.pop()) {
        try {
          if (!done.push(run_request(world, upstream, env, agent, config, *req))) return;
        } catch (...) {
          {
            std::lock_guard lock(failure_mutex);
            if (!worker_failure) worker_failure = std::current_exception();
          }
          requests.close();
          done.close();
          return;
        }
      }
    });
  }
  const auto shutdown = [&] {
    requests.close();
    done.close();
    for (auto& t : workers) t.join();
    workers.clear();
  };

  double latest_recall = std::numeric_limits<double>::quiet_NaN();
  double latest_ecpm = 0.0;
  try {
    for (std::uint64_t iter = 0; iter < config.max_steps; ++iter) {
      const std::uint64_t step = ckpt.training_step;
      auto snapshot = std::make_shared<const PolicySnapshot>(snapshot_of(ckpt));

      std::vector<EpisodeResult> batch(config.batch_size);
      if (workers.empty()) {
        for (std::uint32_t b = 0; b < config.batch_size; ++b)
          batch[b] = run_request(world, upstream, env, agent, config, {snapshot, step, b}).result;
      } else {
        for (std::uint32_t b = 0; b < config.batch_size; ++b) requests.push({snapshot, step, b});
        for (std::uint32_t b = 0; b < config.batch_size; ++b) {
          auto item = done.pop();
          if (!item) break;
          batch[item->slot] = std::move(item->result);
        }
        std::lock_guard lock(failure_mutex);
        if (worker_failure) std::rethrow_exception(worker_failure);
      }

      std::vector<Trajectory> selections;
      std::vector<RewardRecord> rewards;
      std::vector<double> episode_rewards;
      for (const auto& ep : batch) {
        selections.push_back(ep.trajectory);
        rewards.push_back(reward_record(ep.outcome));
        episode_rewards.push_back(ep.outcome.episode_reward);
        if (selection_log.is_open()) write_selection_record(selection_log, selections.back());
        if (reward_log.is_open()) write_reward_record(reward_log, rewards.back());
      }
      const JoinResult joined = join_logs(selections, rewards);

      // Per-episode step weights: shaped reward on subsampled steps, else 0.
      std::vector<std::vector<double>> weights(batch.size());
      std::uint64_t num_samples = 0;
      double loss_sum = 0.0;
      for (const auto& [si, ri] : joined.matched) {
        const auto& traj = selections[si];
        if (traj.pass_through || traj.actions.empty()) continue;
        const auto shaped = shape_rewards(traj, rewards[ri]);
        auto rng = RandomStream::derive(config.seed, stream_tag("train-subsample"), step, si);
        const auto keep = subsample(traj.actions.size(), config.states_per_query, rng);
        auto& w = weights[si];
        w.assign(traj.actions.size(), 0.0);
        for (std::size_t t = 0; t < keep.size(); ++t) {
          if (!keep[t]) continue;
          ++num_samples;
          w[t] = shaped.training[t];
          loss_sum += traj.actions[t].log_prob * shaped.training[t];
        }
      }
      const double loss = num_samples ? -loss_sum / static_cast<double>(num_samples) : 0.0;
      if (!std::isfinite(loss)) {
        const auto path = dump_non_finite(options.out_dir, step, loss_sum, num_samples, ckpt.params, episode_rewards);
        throw NumericError("non-finite training loss at step " + std::to_string(step) +
                           (path.empty() ? std::string() : "; diagnostics in " + path.string()));
      }

      std::vector<PolicyParams> partial(batch.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1u, config.workers))
      for (std::int64_t e = 0; e < static_cast<std::int64_t>(batch.size()); ++e) {
        if (weights[e].empty()) continue;
        partial[e] = PolicyParams(ckpt.params.feature_len(), ckpt.params.hidden_dim(), ckpt.params.schema_version());
        accumulate_episode_gradient(*snapshot, batch[e].query, batch[e].candidates, batch[e].trajectory, weights[e],
                                    agent.selection_cap, partial[e]);
      }
      PolicyParams grad(ckpt.params.feature_len(), ckpt.params.hidden_dim(), ckpt.params.schema_version());
      for (const auto& g : partial) {
        if (g.size() > 0) grad.add_scaled(g, 1.0);
      }
      if (num_samples > 0) {
        for (double& v : grad.flat()) v /= static_cast<double>(num_samples);
      }
      adam_step(ckpt.params, ckpt.adam, grad);
      ckpt.training_step = step + 1;

      CurvePoint point;
      point.step = ckpt.training_step;
      point.loss = loss;
      point.mean_reward = exact_sum(episode_rewards) / static_cast<double>(batch.size());
      point.num_samples = num_samples;
      point.unmatched = joined.unmatched_selections + joined.unmatched_rewards;
      const bool last = iter + 1 == config.max_steps;
      if (config.eval_every > 0 && (ckpt.training_step % config.eval_every == 0 || last)) {
        const auto ev = evaluate_policy(world, snapshot_of(ckpt), upstream, env, agent, config.eval_queries,
                                        config.seed, config.recall_j);
        latest_recall = ev.mean_recall;
        latest_ecpm = ev.mean_ecpm;
        point.eval_fresh = true;
      }
      point.eval_recall = latest_recall;
      point.eval_ecpm = latest_ecpm;
      result.curve.push_back(point);
      if (curve_out.is_open()) {
        write_curve_point(curve_out, point);
        curve_out.flush();
      }
      if (options.on_update) options.on_update(point);
      if (options.out_dir && ckpt.training_step % config.checkpoint_every == 0)
        save_checkpoint(ckpt, *options.out_dir / ("checkpoint-" + std::to_string(ckpt.training_step) + ".json"));
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  if (options.out_dir) save_checkpoint(ckpt, *options.out_dir / "checkpoint-final.json");
  return result;
}

}  // namespace adprune
