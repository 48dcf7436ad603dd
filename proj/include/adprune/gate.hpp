#pragma once

// Two-stage promotion check for a newly trained checkpoint: simulated eCPM
// must strictly beat the incumbent, then realized CPM on a small slice of
// traffic must not fall more than a tolerance below it.

#include <cstdint>
#include <optional>

#include "adprune/trainer.hpp"

namespace adprune {

struct GateConfig {
  std::uint32_t eval_queries = 2000;
  double traffic_fraction = 0.05;  // share of eval_queries replayed with simulated users
  double cpm_tolerance = 0.01;     // relative
  std::uint64_t seed = 7;
  void validate() const;
};

struct GateStage {
  bool pass = false;
  double candidate = 0.0;
  std::optional<double> incumbent;
};

struct GateReport {
  GateStage ecpm;  // stage 1
  GateStage cpm;   // stage 2
  bool promote = false;
};

// Pure decision from the measured values. Without an incumbent both stages pass.
GateReport gate_decision(double candidate_ecpm, std::optional<double> incumbent_ecpm, double candidate_cpm,
                         std::optional<double> incumbent_cpm, double cpm_tolerance);

// Realized revenue per 1000 searches of greedy episodes on queries
// (seed, i), clicks drawn from streams keyed by (seed, i).
double realized_cpm(const World& world, const PolicySnapshot& snapshot, const UpstreamConfig& upstream,
                    const EnvConfig& env, const AgentConfig& agent, std::uint32_t num_queries, std::uint64_t seed);

GateReport gate_model(const Checkpoint& candidate, const std::optional<Checkpoint>& incumbent, const World& world,
                      const UpstreamConfig& upstream, const EnvConfig& env, const AgentConfig& agent,
                      const GateConfig& config);

}  // namespace adprune
