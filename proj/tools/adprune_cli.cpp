// adprune: world generation, training, gating, offline A/B tests and oracle
// checks. Exit codes: 0 success, 1 usage, 2 data/schema error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "adprune/ab_test.hpp"
#include "adprune/baselines.hpp"
#include "adprune/config.hpp"
#include "adprune/errors.hpp"
#include "adprune/gate.hpp"
#include "adprune/json_io.hpp"
#include "adprune/trainer.hpp"

namespace fs = std::filesystem;
using namespace adprune;

namespace {

struct CommonFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> world;
  std::optional<std::uint32_t> workers;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config");
  cmd->add_option("--seed", f.seed, "World / run seed (env ADPRUNE_SEED)");
  cmd->add_option("--out-dir", f.out_dir, "Output directory (env ADPRUNE_OUT_DIR)");
  cmd->add_option("--workers", f.workers, "Worker threads (default: available cores)");
}

void add_world(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--world", f.world, "World archive (default: <out-dir>/world.json)");
}

// defaults < config file < environment < flags
RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  c.workers = std::max(1u, std::thread::hardware_concurrency());
  if (f.config) {
    if (!fs::exists(*f.config)) throw ConfigError("config", "config file not found: " + *f.config);
    c = load_run_config(*f.config, c);
  }
  apply_env_overrides(c);
  if (f.seed) c.seed = *f.seed;
  if (f.out_dir) c.out_dir = *f.out_dir;
  if (f.world) c.world_path = *f.world;
  if (f.workers) c.workers = *f.workers;
  return c;
}

World load_world_for(const RunConfig& c) {
  const fs::path p = c.world_path ? *c.world_path : c.out_dir / "world.json";
  if (!fs::exists(p)) throw Error("world archive not found: " + p.string());
  return load_world(p);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_gen_world(const CommonFlags& f, const std::optional<std::string>& out_name) {
  RunConfig c = resolve(f);
  c.world.validate();
  fs::create_directories(c.out_dir);
  const World world = generate_world(c.world, c.seed);
  const fs::path path = c.out_dir / out_name.value_or("world.json");
  save_world(world, path);
  std::cout << "world: " << world.advertisers.size() << " advertisers, " << world.num_groups() << " groups, "
            << world.num_creatives() << " creatives, " << world.keywords.size() << " keywords -> " << path.string()
            << '\n';
  return 0;
}

struct TrainFlags {
  std::optional<std::uint64_t> max_steps;
  std::optional<std::string> resume;
  std::optional<std::uint32_t> k, n_max, batch, states, hidden, cap;
  std::optional<double> lr;
  std::optional<std::uint64_t> train_seed;
  bool episode_logs = false;
};

int cmd_train(const CommonFlags& f, const TrainFlags& t) {
  RunConfig c = resolve(f);
  if (t.max_steps) c.train.max_steps = *t.max_steps;
  if (t.k) c.agent.k = *t.k;
  if (t.n_max) c.upstream.n_max = *t.n_max;
  if (t.batch) c.train.batch_size = *t.batch;
  if (t.states) c.train.states_per_query = *t.states;
  if (t.hidden) c.train.hidden_dim = *t.hidden;
  if (t.cap) c.agent.selection_cap = *t.cap;
  if (t.lr) c.train.learning_rate = *t.lr;
  if (t.train_seed) c.train.seed = *t.train_seed;
  c.train.workers = c.workers;
  c.validate();
  const World world = load_world_for(c);
  fs::create_directories(c.out_dir);
  write_json(c.out_dir / "train-config.json", to_json(c));
  std::cout << "K=" << c.agent.k << " N_max=" << c.upstream.n_max << " batch=" << c.train.batch_size
            << " states_per_query=" << c.train.states_per_query << " H=" << c.train.hidden_dim
            << " lr=" << c.train.learning_rate << " beta1=" << c.train.beta1 << " beta2=" << c.train.beta2
            << " max_steps=" << c.train.max_steps << " workers=" << c.workers << '\n';

  TrainOptions opts;
  opts.out_dir = c.out_dir;
  opts.write_episode_logs = t.episode_logs;
  if (t.resume) {
    if (!fs::exists(*t.resume)) throw Error("checkpoint not found: " + *t.resume);
    opts.resume = load_checkpoint(*t.resume);
    std::cout << "resuming at step " << opts.resume->training_step << '\n';
  }
  opts.on_update = [](const CurvePoint& p) {
    if (p.eval_fresh)
      std::cout << "step " << p.step << " loss " << p.loss << " batch_reward " << p.mean_reward << " eval_ecpm "
                << p.eval_ecpm << " recall " << p.eval_recall << std::endl;
  };
  const auto result = train(world, c.upstream, c.env, c.agent, c.train, opts);
  std::cout << "final step " << result.checkpoint.training_step << "; checkpoint "
            << (c.out_dir / "checkpoint-final.json").string() << '\n';
  return 0;
}

Checkpoint load_checked(const std::string& path, const World& world) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path);
  Checkpoint ck = load_checkpoint(path);
  check_schema(ck, FeatureSchema::identity(world.embedding_dim));
  return ck;
}

int cmd_eval_gate(const CommonFlags& f, const std::string& candidate, const std::optional<std::string>& incumbent) {
  RunConfig c = resolve(f);
  c.validate();
  const World world = load_world_for(c);
  const Checkpoint cand = load_checked(candidate, world);
  std::optional<Checkpoint> inc;
  if (incumbent) inc = load_checked(*incumbent, world);
  const auto r = gate_model(cand, inc, world, c.upstream, c.env, c.agent, c.gate);
  const auto stage = [](const GateStage& s) {
    nlohmann::json j{{"pass", s.pass}, {"candidate", s.candidate}};
    if (s.incumbent) j["incumbent"] = *s.incumbent;
    return j;
  };
  fs::create_directories(c.out_dir);
  write_json(c.out_dir / "gate.json", {{"ecpm_stage", stage(r.ecpm)}, {"cpm_stage", stage(r.cpm)},
                                       {"promote", r.promote}});
  std::cout << "stage 1 (eCPM): " << (r.ecpm.pass ? "pass" : "fail") << "  candidate " << r.ecpm.candidate;
  if (r.ecpm.incumbent) std::cout << " incumbent " << *r.ecpm.incumbent;
  std::cout << "\nstage 2 (CPM):  " << (r.cpm.pass ? "pass" : "fail") << "  candidate " << r.cpm.candidate;
  if (r.cpm.incumbent) std::cout << " incumbent " << *r.cpm.incumbent;
  std::cout << '\n' << (r.promote ? "PROMOTE" : "REJECT") << '\n';
  return 0;
}

int cmd_ab_test(const CommonFlags& f, const std::optional<std::string>& checkpoint,
                std::optional<std::uint32_t> num_queries, std::optional<std::uint64_t> ab_seed,
                std::optional<std::uint32_t> cap) {
  RunConfig c = resolve(f);
  if (num_queries) c.ab_queries = *num_queries;
  if (ab_seed) c.ab_seed = *ab_seed;
  c.validate();
  const World world = load_world_for(c);
  const std::string ckpt_path = checkpoint.value_or((c.out_dir / "checkpoint-final.json").string());
  const Checkpoint ck = load_checked(ckpt_path, world);

  std::vector<PolicySpec> policies;
  policies.push_back({"agent-greedy", PolicyKind::kAgent, std::make_shared<const PolicySnapshot>(snapshot_of(ck)),
                      cap.value_or(c.agent.selection_cap)});
  policies.push_back({"ectr-bid", PolicyKind::kEctrBid, nullptr, 0});
  policies.push_back({"ectr-bid-srq", PolicyKind::kEctrBidSrq, nullptr, 0});
  policies.push_back({"random", PolicyKind::kRandom, nullptr, 0});
  AbConfig ab;
  ab.num_queries = c.ab_queries;
  ab.seed = c.ab_seed;
  ab.k = c.agent.k;
  ab.srq = c.srq;
  ab.workers = static_cast<int>(c.workers);
  const auto reports = ab_test(world, policies, c.upstream, c.env, ab);
  const auto deltas = relative_deltas(reports, "agent-greedy");

  fs::create_directories(c.out_dir);
  {
    std::ofstream out(c.out_dir / "ab_report.jsonl");
    write_reports_jsonl(out, reports);
  }
  {
    std::ofstream out(c.out_dir / "ab_delta.jsonl");
    write_delta_jsonl(out, "agent-greedy", deltas);
  }
  {
    std::ofstream out(c.out_dir / "ab_report.txt");
    write_reports_table(out, reports);
    out << '\n';
    write_delta_table(out, "agent-greedy", deltas);
  }
  write_reports_table(std::cout, reports);
  std::cout << '\n';
  write_delta_table(std::cout, "agent-greedy", deltas);
  return 0;
}

int cmd_oracle_check(const CommonFlags& f, const std::optional<std::string>& checkpoint, std::uint32_t queries) {
  RunConfig c = resolve(f);
  c.validate();
  const World world = load_world_for(c);
  std::optional<PolicySnapshot> snap;
  if (checkpoint) snap = snapshot_of(load_checked(*checkpoint, world));

  fs::create_directories(c.out_dir);
  std::ofstream out(c.out_dir / "oracle.jsonl");
  double sum_oracle = 0.0, sum_base = 0.0, sum_agent = 0.0;
  std::uint32_t violations = 0;
  RandomStream unused(0);
  for (std::uint32_t i = 0; i < queries; ++i) {
    const Query q = query_at(world, c.ab_seed, stream_tag("oracle-query"), i);
    const auto set = retrieve(world, q, c.upstream);
    const auto best = oracle_best_subset(world, set, q, c.agent.k, c.env);
    const double base = evaluate(world, baseline_ectr_bid(set, c.agent.k), q, c.env).episode_reward;
    nlohmann::json j{{"query_id", q.query_id},
                     {"candidates", set.size()},
                     {"oracle_reward", best.reward},
                     {"oracle_subset", best.subset},
                     {"ectr_bid_reward", base}};
    if (base > best.reward) ++violations;
    sum_oracle += best.reward;
    sum_base += base;
    if (snap) {
      const auto sel = select_candidates(*snap, q, set, c.agent, SelectionMode::kGreedy, unused);
      const double agent = evaluate(world, picked_candidates(set, sel.trajectory), q, c.env).episode_reward;
      j["agent_reward"] = agent;
      if (agent > best.reward) ++violations;
      sum_agent += agent;
    }
    out << j.dump() << '\n';
  }
  std::cout << "queries " << queries << "  mean oracle " << sum_oracle / queries << "  mean ectr-bid "
            << sum_base / queries;
  if (snap) std::cout << "  mean agent " << sum_agent / queries;
  std::cout << "\noracle dominance violations: " << violations << '\n';
  return violations == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sponsored-search candidate pruning simulator"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, gate_f, ab_f, oracle_f;
  std::optional<std::string> gen_out;
  auto* gen = app.add_subcommand("gen-world", "Generate a world archive");
  add_common(gen, gen_f);
  gen->add_option("--out", gen_out, "Archive file name inside --out-dir (default world.json)");

  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "Train the pruning agent");
  add_common(tr, train_f);
  add_world(tr, train_f);
  tr->add_option("--max-steps", tf.max_steps, "Updates to run");
  tr->add_option("--resume", tf.resume, "Checkpoint to continue from");
  tr->add_option("--k", tf.k, "Selection count K")->check(CLI::PositiveNumber);
  tr->add_option("--n-max", tf.n_max, "Upstream candidate cap N")->check(CLI::PositiveNumber);
  tr->add_option("--batch", tf.batch, "Queries per update")->check(CLI::PositiveNumber);
  tr->add_option("--states-per-query", tf.states, "Subsampled states per query")->check(CLI::PositiveNumber);
  tr->add_option("--hidden", tf.hidden, "Hidden width H")->check(CLI::PositiveNumber);
  tr->add_option("--selection-cap", tf.cap, "Per-advertiser selection cap (0 = off)");
  tr->add_option("--lr", tf.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--train-seed", tf.train_seed, "Training seed");
  tr->add_flag("--episode-logs", tf.episode_logs, "Write selection/reward logs");

  std::string gate_candidate;
  std::optional<std::string> gate_incumbent;
  auto* gate = app.add_subcommand("eval-gate", "Two-stage promotion check of a checkpoint");
  add_common(gate, gate_f);
  add_world(gate, gate_f);
  gate->add_option("--candidate", gate_candidate, "Candidate checkpoint")->required();
  gate->add_option("--incumbent", gate_incumbent, "Incumbent checkpoint (absent: first model)");

  std::optional<std::string> ab_ckpt;
  std::optional<std::uint32_t> ab_queries, ab_cap;
  std::optional<std::uint64_t> ab_seed;
  auto* ab = app.add_subcommand("ab-test", "Paired offline A/B test against the baselines");
  add_common(ab, ab_f);
  add_world(ab, ab_f);
  ab->add_option("--checkpoint", ab_ckpt, "Agent checkpoint (default <out-dir>/checkpoint-final.json)");
  ab->add_option("--num-queries", ab_queries, "Paired queries")->check(CLI::PositiveNumber);
  ab->add_option("--ab-seed", ab_seed, "Query / user stream seed");
  ab->add_option("--selection-cap", ab_cap, "Per-advertiser selection cap for the agent");

  std::optional<std::string> oracle_ckpt;
  std::uint32_t oracle_queries = 20;
  auto* oracle = app.add_subcommand("oracle-check", "Compare policies with the exhaustive subset oracle");
  add_common(oracle, oracle_f);
  add_world(oracle, oracle_f);
  oracle->add_option("--checkpoint", oracle_ckpt, "Agent checkpoint");
  oracle->add_option("--queries", oracle_queries, "Queries to check")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_world(gen_f, gen_out);
    if (*tr) return cmd_train(train_f, tf);
    if (*gate) return cmd_eval_gate(gate_f, gate_candidate, gate_incumbent);
    if (*ab) return cmd_ab_test(ab_f, ab_ckpt, ab_queries, ab_seed, ab_cap);
    if (*oracle) return cmd_oracle_check(oracle_f, oracle_ckpt, oracle_queries);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
