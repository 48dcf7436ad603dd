#include "adprune/config.hpp"

#include <cstdlib>
#include <fstream>

#include "adprune/errors.hpp"
#include "adprune/json_io.hpp"

namespace adprune {

using nlohmann::json;

void RunConfig::validate() const {
  world.validate();
  upstream.validate();
  env.validate();
  agent.validate();
  train.validate();
  gate.validate();
  srq.validate();
  if (agent.k > upstream.n_max) throw ConfigError("agent.k", "must not exceed upstream.n_max");
  if (ab_queries < 1) throw ConfigError("ab_queries", "must be >= 1");
}

namespace {

// Merges the keys present in `patch` into `target`, rejecting unknown keys.
template <typename T>
void merge_section(const json& root, const char* section, T& target) {
  if (!root.contains(section)) return;
  const json& patch = root.at(section);
  if (!patch.is_object()) throw ConfigError(section, "must be an object");
  json current = target;
  for (const auto& [key, value] : patch.items()) {
    if (!current.contains(key)) throw ConfigError(std::string(section) + "." + key, "unknown field");
    try {
      json probe = current;
      probe[key] = value;
      (void)probe.get<T>();
      current[key] = value;
    } catch (const json::exception& e) {
      throw ConfigError(std::string(section) + "." + key, e.what());
    }
  }
  target = current.get<T>();
}

template <typename T>
void read_scalar(const json& root, const char* key, T& target) {
  if (!root.contains(key)) return;
  try {
    target = root.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("<root>", "config must be a JSON object");
  static const char* const known[] = {"seed",  "out_dir", "world_path", "workers", "world", "upstream", "env",
                                      "agent", "train",   "gate",       "srq",     "ab_queries", "ab_seed"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ConfigError(key, "unknown field");
  }
  read_scalar(j, "seed", c.seed);
  read_scalar(j, "workers", c.workers);
  read_scalar(j, "ab_queries", c.ab_queries);
  read_scalar(j, "ab_seed", c.ab_seed);
  if (j.contains("out_dir")) {
    std::string s;
    read_scalar(j, "out_dir", s);
    c.out_dir = s;
  }
  if (j.contains("world_path")) {
    std::string s;
    read_scalar(j, "world_path", s);
    c.world_path = s;
  }
  merge_section(j, "world", c.world);
  merge_section(j, "upstream", c.upstream);
  merge_section(j, "env", c.env);
  merge_section(j, "agent", c.agent);
  merge_section(j, "train", c.train);
  merge_section(j, "gate", c.gate);
  merge_section(j, "srq", c.srq);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
  return run_config_from_json(j, std::move(base));
}

json to_json(const RunConfig& c) {
  json j{{"seed", c.seed},     {"out_dir", c.out_dir.string()}, {"workers", c.workers}, {"world", c.world},
         {"upstream", c.upstream}, {"env", c.env},            {"agent", c.agent},     {"train", c.train},
         {"gate", c.gate},     {"srq", c.srq},                  {"ab_queries", c.ab_queries},
         {"ab_seed", c.ab_seed}};
  if (c.world_path) j["world_path"] = c.world_path->string();
  return j;
}

void apply_env_overrides(RunConfig& c, const std::function<const char*(const char*)>& getenv) {
  if (const char* s = getenv("ADPRUNE_SEED"); s && *s) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (*end != '\0') throw ConfigError("ADPRUNE_SEED", std::string("not an unsigned integer: ") + s);
    c.seed = v;
  }
  if (const char* s = getenv("ADPRUNE_OUT_DIR"); s && *s) c.out_dir = s;
}

}  // namespace adprune
