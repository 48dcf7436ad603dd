#include "adprune/gate.hpp"

#include <cmath>

#include "adprune/errors.hpp"

namespace adprune {

void GateConfig::validate() const {
  if (eval_queries < 1) throw ConfigError("gate.eval_queries", "must be >= 1");
  if (!(traffic_fraction > 0.0 && traffic_fraction <= 1.0))
    throw ConfigError("gate.traffic_fraction", "must be in (0, 1]");
  if (!(cpm_tolerance >= 0.0 && std::isfinite(cpm_tolerance)))
    throw ConfigError("gate.cpm_tolerance", "must be >= 0");
}

GateReport gate_decision(double candidate_ecpm, std::optional<double> incumbent_ecpm, double candidate_cpm,
                         std::optional<double> incumbent_cpm, double cpm_tolerance) {
  GateReport r;
  r.ecpm = {!incumbent_ecpm || candidate_ecpm > *incumbent_ecpm, candidate_ecpm, incumbent_ecpm};
  r.cpm = {!incumbent_cpm || candidate_cpm >= *incumbent_cpm * (1.0 - cpm_tolerance), candidate_cpm,
           incumbent_cpm};
  r.promote = r.ecpm.pass && r.cpm.pass;
  return r;
}

double realized_cpm(const World& world, const PolicySnapshot& snapshot, const UpstreamConfig& upstream,
                    const EnvConfig& env, const AgentConfig& agent, std::uint32_t num_queries, std::uint64_t seed) {
  double revenue = 0.0;
  RandomStream unused(0);
  for (std::uint32_t i = 0; i < num_queries; ++i) {
    const Query q = query_at(world, seed, stream_tag("gate-traffic"), i);
    const auto ep = run_episode(world, snapshot, q, upstream, env, agent, SelectionMode::kGreedy, unused);
    auto user = RandomStream::derive(seed, stream_tag("gate-user"), i);
    revenue += simulate_user(world, ep.outcome, q, user).revenue;
  }
  return num_queries ? 1000.0 * revenue / num_queries : 0.0;
}

GateReport gate_model(const Checkpoint& candidate, const std::optional<Checkpoint>& incumbent, const World& world,
                      const UpstreamConfig& upstream, const EnvConfig& env, const AgentConfig& agent,
                      const GateConfig& config) {
  config.validate();
  const auto expected = FeatureSchema::identity(world.embedding_dim);
  check_schema(candidate, expected);
  if (incumbent) check_schema(*incumbent, expected);

  const auto traffic = static_cast<std::uint32_t>(
      std::max(1.0, std::round(config.traffic_fraction * static_cast<double>(config.eval_queries))));
  const auto measure = [&](const Checkpoint& c) {
    const auto snap = snapshot_of(c);
    const double ecpm =
        evaluate_policy(world, snap, upstream, env, agent, config.eval_queries, config.seed, 1).mean_ecpm;
    return std::pair{ecpm, realized_cpm(world, snap, upstream, env, agent, traffic, config.seed)};
  };
  const auto [cand_ecpm, cand_cpm] = measure(candidate);
  if (!incumbent) return gate_decision(cand_ecpm, std::nullopt, cand_cpm, std::nullopt, config.cpm_tolerance);
  const auto [inc_ecpm, inc_cpm] = measure(*incumbent);
  return gate_decision(cand_ecpm, inc_ecpm, cand_cpm, inc_cpm, config.cpm_tolerance);
}

}  // namespace adprune
