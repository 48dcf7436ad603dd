#pragma once

// Two-layer scoring network, masked softmax over candidates, action
// selection, the analytic gradient of log pi(a|s) and Adam (ascent).

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adprune/features.hpp"
#include "adprune/numeric.hpp"
#include "adprune/random.hpp"

namespace adprune {

// Flat parameter vector laid out as [W1 (L x H, row-major) | b1 (H) | W2 (H) | b2].
// Gradients use the same type.
class PolicyParams {
 public:
  PolicyParams() = default;
  PolicyParams(std::size_t feature_len, std::size_t hidden_dim, int schema_version = kFeatureSchemaVersion);

  // Glorot-uniform weights, zero biases.
  static PolicyParams glorot(std::size_t feature_len, std::size_t hidden_dim, RandomStream& rng,
                             int schema_version = kFeatureSchemaVersion);

  std::size_t feature_len() const noexcept { return feature_len_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  int schema_version() const noexcept { return schema_version_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> w1() { return {values_.data(), feature_len_ * hidden_dim_}; }
  std::span<const double> w1() const { return {values_.data(), feature_len_ * hidden_dim_}; }
  std::span<double> b1() { return {values_.data() + feature_len_ * hidden_dim_, hidden_dim_}; }
  std::span<const double> b1() const { return {values_.data() + feature_len_ * hidden_dim_, hidden_dim_}; }
  std::span<double> w2() { return {values_.data() + (feature_len_ + 1) * hidden_dim_, hidden_dim_}; }
  std::span<const double> w2() const { return {values_.data() + (feature_len_ + 1) * hidden_dim_, hidden_dim_}; }
  double& b2() { return values_.back(); }
  double b2() const { return values_.back(); }

  std::span<double> flat() noexcept { return values_; }
  std::span<const double> flat() const noexcept { return values_; }

  bool same_shape(const PolicyParams& o) const noexcept {
    return feature_len_ == o.feature_len_ && hidden_dim_ == o.hidden_dim_;
  }
  void set_zero();
  void add_scaled(const PolicyParams& other, double factor);
  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t feature_len_ = 0;
  std::size_t hidden_dim_ = 0;
  int schema_version_ = kFeatureSchemaVersion;
  std::vector<double> values_;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step_count = 0;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double learning_rate = 1e-4;
  double epsilon = 1e-8;

  static AdamState for_params(const PolicyParams& params, double learning_rate = 1e-4, double beta1 = 0.99,
                              double beta2 = 0.999, double epsilon = 1e-8);
  bool operator==(const AdamState&) const = default;
};

// --- Row kernels. Every scoring path goes through these three so cached and
// uncached evaluation agree to the bit.
// h = b1 + sum_l W1[l] * x[l] over the given columns, starting at column `first`.
void accumulate_hidden(const PolicyParams& params, std::span<const double> x, std::size_t first,
                       std::span<double> hidden);
double output_from_hidden(const PolicyParams& params, std::span<const double> hidden);
double score_row(const PolicyParams& params, std::span<const double> row, std::span<double> hidden_scratch);

// score_i = W2 . relu(W1^T row_i + b1) + b2
std::vector<double> score(const PolicyParams& params, const Matrix& features);

// masked[i] == true excludes entry i. Softmax over the rest, max-subtracted;
// masked entries get exactly 0.
std::vector<double> action_distribution(std::span<const double> scores, const std::vector<bool>& masked);

enum class SelectionMode { kSample, kGreedy };

struct ActionChoice {
  std::size_t index = 0;
  double log_prob = 0.0;
};

// Sample draws one uniform from rng; greedy is argmax (lowest index on ties)
// and never touches rng.
ActionChoice select_action(std::span<const double> dist, SelectionMode mode, RandomStream& rng);

// d log pi(chosen | rows) / d params, normalizer over every unmasked row.
// d/d b2 is identically zero because b2 shifts every score equally.
PolicyParams grad_log_prob(const PolicyParams& params, const Matrix& features, const std::vector<bool>& masked,
                           std::size_t chosen_index);

// Adam with bias correction in the ascent direction:
// params += lr * m_hat / (sqrt(v_hat) + eps). Throws NumericError (leaving
// both arguments untouched) when the gradient is not finite.
void adam_step(PolicyParams& params, AdamState& state, const PolicyParams& gradient);

struct Checkpoint {
  PolicyParams params;
  AdamState adam;
  FeatureSchema schema;
  std::uint64_t training_step = 0;
  std::uint64_t world_seed = 0;
  bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& text);
// SchemaError unless the checkpoint's feature length and schema version
// match `expected`.
void check_schema(const Checkpoint& ckpt, const FeatureSchema& expected);

}  // namespace adprune
