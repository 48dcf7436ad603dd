#pragma once

// Run configuration shared by every CLI command. Values come from defaults,
// then an optional JSON file, then environment variables, then flags.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"

#include "adprune/ab_test.hpp"
#include "adprune/gate.hpp"
#include "adprune/trainer.hpp"

namespace adprune {

struct RunConfig {
  std::uint64_t seed = 1;  // world seed
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> world_path;
  std::uint32_t workers = 0;
  WorldConfig world;
  UpstreamConfig upstream;
  EnvConfig env;
  AgentConfig agent;
  TrainConfig train;
  GateConfig gate;
  SrqConfig srq;
  std::uint32_t ab_queries = 50000;
  std::uint64_t ab_seed = 11;

  // Cross-field checks (K <= N_max) plus every section's own validate().
  void validate() const;
};

// Unknown keys and wrong types are ConfigErrors naming "section.field".
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
nlohmann::json to_json(const RunConfig& config);

// ADPRUNE_SEED and ADPRUNE_OUT_DIR. `getenv` is injectable for tests.
void apply_env_overrides(RunConfig& config,
                         const std::function<const char*(const char*)>& getenv = [](const char* name) {
                           return std::getenv(name);
                         });

}  // namespace adprune
