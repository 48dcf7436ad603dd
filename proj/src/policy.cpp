#include "adprune/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "adprune/errors.hpp"

namespace adprune {

PolicyParams::PolicyParams(std::size_t feature_len, std::size_t hidden_dim, int schema_version)
    : feature_len_(feature_len),
      hidden_dim_(hidden_dim),
      schema_version_(schema_version),
      values_((feature_len + 2) * hidden_dim + 1, 0.0) {
  if (feature_len == 0 || hidden_dim == 0) throw ShapeError("policy dimensions must be positive");
}

PolicyParams PolicyParams::glorot(std::size_t feature_len, std::size_t hidden_dim, RandomStream& rng,
                                  int schema_version) {
  PolicyParams p(feature_len, hidden_dim, schema_version);
  const double a1 = std::sqrt(6.0 / static_cast<double>(feature_len + hidden_dim));
  for (double& w : p.w1()) w = rng.uniform(-a1, a1);
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + 1));
  for (double& w : p.w2()) w = rng.uniform(-a2, a2);
  return p;
}

void PolicyParams::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

void PolicyParams::add_scaled(const PolicyParams& other, double factor) {
  if (!same_shape(other)) throw ShapeError("parameter shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += factor * other.values_[i];
}

AdamState AdamState::for_params(const PolicyParams& params, double learning_rate, double beta1, double beta2,
                                double epsilon) {
  AdamState s;
  s.first_moment.assign(params.size(), 0.0);
  s.second_moment.assign(params.size(), 0.0);
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  return s;
}

void accumulate_hidden(const PolicyParams& params, std::span<const double> x, std::size_t first,
                       std::span<double> hidden) {
  const std::size_t h_dim = params.hidden_dim();
  const auto w1 = params.w1();
  for (std::size_t l = 0; l < x.size(); ++l) {
    const double xl = x[l];
    const double* w = w1.data() + (first + l) * h_dim;
    for (std::size_t h = 0; h < h_dim; ++h) hidden[h] += w[h] * xl;
  }
}

double output_from_hidden(const PolicyParams& params, std::span<const double> hidden) {
  const auto w2 = params.w2();
  double s = params.b2();
  for (std::size_t h = 0; h < hidden.size(); ++h) s += w2[h] * std::max(0.0, hidden[h]);
  return s;
}

double score_row(const PolicyParams& params, std::span<const double> row, std::span<double> hidden) {
  const auto b1 = params.b1();
  std::copy(b1.begin(), b1.end(), hidden.begin());
  accumulate_hidden(params, row, 0, hidden);
  return output_from_hidden(params, hidden);
}

std::vector<double> score(const PolicyParams& params, const Matrix& features) {
  if (features.cols() != params.feature_len())
    throw ShapeError("feature matrix has " + std::to_string(features.cols()) + " columns, policy expects " +
                     std::to_string(params.feature_len()));
  std::vector<double> hidden(params.hidden_dim());
  std::vector<double> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = score_row(params, features.row(i), hidden);
  return out;
}

std::vector<double> action_distribution(std::span<const double> scores, const std::vector<bool>& masked) {
  if (masked.size() != scores.size()) throw ShapeError("mask length does not match scores");
  double max_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (masked[i]) continue;
    any = true;
    max_score = std::max(max_score, scores[i]);
  }
  if (!any) throw Error("action_distribution: every candidate is masked (empty support)");
  std::vector<double> p(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (masked[i]) continue;
    p[i] = std::exp(scores[i] - max_score);
    total += p[i];
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!masked[i]) p[i] /= total;
  }
  return p;
}

ActionChoice select_action(std::span<const double> dist, SelectionMode mode, RandomStream& rng) {
  if (dist.empty()) throw Error("select_action: empty distribution");
  std::size_t chosen = 0;
  if (mode == SelectionMode::kGreedy) {
    for (std::size_t i = 1; i < dist.size(); ++i) {
      if (dist[i] > dist[chosen]) chosen = i;
    }
  } else {
    const double u = rng.uniform();
    double acc = 0.0;
    bool found = false;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= 0.0) continue;
      acc += dist[i];
      last_positive = i;
      if (u < acc) {
        chosen = i;
        found = true;
        break;
      }
    }
    if (!found) chosen = last_positive;
  }
  return ActionChoice{chosen, std::log(dist[chosen])};
}

PolicyParams grad_log_prob(const PolicyParams& params, const Matrix& features, const std::vector<bool>& masked,
                           std::size_t chosen_index) {
  if (features.cols() != params.feature_len()) throw ShapeError("feature matrix width does not match policy");
  if (masked.size() != features.rows()) throw ShapeError("mask length does not match feature rows");
  if (chosen_index >= features.rows() || masked[chosen_index])
    throw Error("grad_log_prob: chosen index must be an unmasked row");

  const std::size_t n = features.rows();
  const std::size_t h_dim = params.hidden_dim();
  const std::size_t len = params.feature_len();
  Matrix hidden(n, h_dim);
  std::vector<double> scores(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i]) continue;
    scores[i] = score_row(params, features.row(i), hidden.row(i));
  }
  const auto p = action_distribution(scores, masked);

  PolicyParams grad(len, h_dim, params.schema_version());
  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();
  const auto w2 = params.w2();
  for (std::size_t i = 0; i < n; ++i) {
    if (masked[i]) continue;
    const double g = (i == chosen_index ? 1.0 : 0.0) - p[i];
    if (g == 0.0) continue;
    const auto hid = hidden.row(i);
    const auto x = features.row(i);
    for (std::size_t h = 0; h < h_dim; ++h) {
      if (hid[h] <= 0.0) continue;
      gw2[h] += g * hid[h];
      const double delta = g * w2[h];
      gb1[h] += delta;
      for (std::size_t l = 0; l < len; ++l) gw1[l * h_dim + h] += delta * x[l];
    }
  }
  grad.b2() = 0.0;
  return grad;
}

void adam_step(PolicyParams& params, AdamState& state, const PolicyParams& gradient) {
  if (!params.same_shape(gradient)) throw ShapeError("gradient shape does not match parameters");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("Adam moments do not match parameters");
  if (!all_finite(gradient.flat())) throw NumericError("adam_step: non-finite gradient rejected");

  const std::uint64_t t = state.step_count + 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(t));
  auto theta = params.flat();
  const auto g = gradient.flat();
  for (std::size_t i = 0; i < theta.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g[i];
    v = state.beta2 * v + (1.0 - state.beta2) * g[i] * g[i];
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    theta[i] += state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  state.step_count = t;
}

namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "adprune-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  json j{{"format", kCheckpointFormat},
         {"version", kCheckpointVersion},
         {"training_step", c.training_step},
         {"world_seed", c.world_seed},
         {"schema",
          {{"version", c.schema.version},
           {"embedding_dim", c.schema.embedding_dim},
           {"offset", c.schema.offset},
           {"scale", c.schema.scale}}},
         {"params",
          {{"feature_len", c.params.feature_len()},
           {"hidden_dim", c.params.hidden_dim()},
           {"schema_version", c.params.schema_version()},
           {"values", std::vector<double>(c.params.flat().begin(), c.params.flat().end())}}},
         {"adam",
          {{"first_moment", c.adam.first_moment},
           {"second_moment", c.adam.second_moment},
           {"step_count", c.adam.step_count},
           {"beta1", c.adam.beta1},
           {"beta2", c.adam.beta2},
           {"learning_rate", c.adam.learning_rate},
           {"epsilon", c.adam.epsilon}}}};
  return j.dump();
}

Checkpoint deserialize_checkpoint(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != kCheckpointFormat) throw SchemaError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) throw SchemaError("unsupported checkpoint version");
    Checkpoint c;
    c.training_step = j.at("training_step").get<std::uint64_t>();
    c.world_seed = j.at("world_seed").get<std::uint64_t>();
    const auto& s = j.at("schema");
    c.schema.version = s.at("version").get<int>();
    c.schema.embedding_dim = s.at("embedding_dim").get<std::uint32_t>();
    c.schema.offset = s.at("offset").get<std::vector<double>>();
    c.schema.scale = s.at("scale").get<std::vector<double>>();
    if (c.schema.offset.size() != c.schema.length() || c.schema.scale.size() != c.schema.length())
      throw SchemaError("checkpoint schema normalization has the wrong length");
    const auto& p = j.at("params");
    c.params = PolicyParams(p.at("feature_len").get<std::size_t>(), p.at("hidden_dim").get<std::size_t>(),
                            p.at("schema_version").get<int>());
    const auto values = p.at("values").get<std::vector<double>>();
    if (values.size() != c.params.size()) throw SchemaError("checkpoint parameter count mismatch");
    std::copy(values.begin(), values.end(), c.params.flat().begin());
    const auto& a = j.at("adam");
    c.adam.first_moment = a.at("first_moment").get<std::vector<double>>();
    c.adam.second_moment = a.at("second_moment").get<std::vector<double>>();
    c.adam.step_count = a.at("step_count").get<std::uint64_t>();
    c.adam.beta1 = a.at("beta1").get<double>();
    c.adam.beta2 = a.at("beta2").get<double>();
    c.adam.learning_rate = a.at("learning_rate").get<double>();
    c.adam.epsilon = a.at("epsilon").get<double>();
    if (c.adam.first_moment.size() != c.params.size() || c.adam.second_moment.size() != c.params.size())
      throw SchemaError("checkpoint optimizer state does not match parameters");
    return c;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << serialize_checkpoint(ckpt);
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void check_schema(const Checkpoint& ckpt, const FeatureSchema& expected) {
  if (ckpt.schema.version != expected.version || ckpt.params.schema_version() != expected.version)
    throw SchemaError("feature schema version mismatch: checkpoint " + std::to_string(ckpt.schema.version) +
                      ", expected " + std::to_string(expected.version));
  if (ckpt.params.feature_len() != expected.length() || ckpt.schema.length() != expected.length())
    throw SchemaError("feature length mismatch: checkpoint " + std::to_string(ckpt.params.feature_len()) +
                      ", expected " + std::to_string(expected.length()));
}

}  // namespace adprune
