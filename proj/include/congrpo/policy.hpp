#pragma once
// Linear-softmax autoregressive token policy.
//
// At every position the next-token distribution is
//
//   pi(. | prompt, prefix) = softmax((W^T phi + b) / temperature)
//
// where phi is a fixed feature map of the conditioning prompt and the prefix:
//
//   [ observation | axis one-hot | paraphrase one-hot |
//     option-slot evidence (4) | prefix bag-of-tokens (V) | last-token one-hot (V) ]
//
// Option-slot evidence k is 1 when the content token of option k already
// occurs in the prefix. Bag entries are presence indicators. Every feature
// except the observation block is 0/1, so phi is stored sparsely.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "congrpo/vocabulary.hpp"

namespace congrpo {

inline constexpr int kDefaultMaxSequenceLength = 48;

struct FeatureLayout {
  int observation_dim = 0;
  int num_axes = 0;
  int num_paraphrases = 0;
  int num_option_slots = kNumOptions;
  int vocab_size = 0;

  int axis_offset() const { return observation_dim; }
  int paraphrase_offset() const { return axis_offset() + num_axes; }
  int slot_offset() const { return paraphrase_offset() + num_paraphrases; }
  int bag_offset() const { return slot_offset() + num_option_slots; }
  int last_token_offset() const { return bag_offset() + vocab_size; }
  int feature_dim() const { return last_token_offset() + vocab_size; }

  bool operator==(const FeatureLayout&) const = default;
};

void validate(const FeatureLayout& layout);  // throws ConfigError

// Conditioning pair (observation, question) plus the option contents as
// token ids. axis and paraphrase are 0-based.
struct Prompt {
  std::vector<double> observation;
  int axis = 0;
  int paraphrase = 0;
  std::array<TokenId, kNumOptions> option_tokens{-1, -1, -1, -1};
};

// Prompt plus the tokens generated so far.
struct Context {
  const Prompt& prompt;
  std::span<const TokenId> prefix;
};

struct SparseFeatures {
  std::vector<int> index;
  std::vector<double> value;

  void clear() {
    index.clear();
    value.clear();
  }
  void push(int i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
  std::size_t size() const { return index.size(); }
};

// Incremental featurizer for one sequence: push tokens one at a time and read
// the features of the next position.
class SequenceFeaturizer {
 public:
  SequenceFeaturizer(const FeatureLayout& layout, const Prompt& prompt);

  void push(TokenId token);
  const SparseFeatures& features();

 private:
  const FeatureLayout& layout_;
  const Prompt& prompt_;
  std::vector<char> in_bag_;
  std::vector<TokenId> bag_;  // distinct tokens, insertion order
  TokenId last_ = -1;
  SparseFeatures cache_;
  bool dirty_ = true;
};

// Weight [feature_dim x vocab] row-major followed by bias [vocab], stored
// contiguously. Gradients use the same type.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(FeatureLayout layout, std::string version = "init");

  const FeatureLayout& layout() const { return layout_; }
  std::size_t vocab_size() const { return static_cast<std::size_t>(layout_.vocab_size); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(layout_.feature_dim()); }

  std::span<double> weight() { return {values_.data(), feature_dim() * vocab_size()}; }
  std::span<const double> weight() const { return {values_.data(), feature_dim() * vocab_size()}; }
  std::span<double> weight_row(int feature) {
    return {values_.data() + static_cast<std::size_t>(feature) * vocab_size(), vocab_size()};
  }
  std::span<const double> weight_row(int feature) const {
    return {values_.data() + static_cast<std::size_t>(feature) * vocab_size(), vocab_size()};
  }
  std::span<double> bias() { return {values_.data() + feature_dim() * vocab_size(), vocab_size()}; }
  std::span<const double> bias() const {
    return {values_.data() + feature_dim() * vocab_size(), vocab_size()};
  }
  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  const std::string& version() const { return version_; }
  void set_version(std::string v) { version_ = std::move(v); }

  // this += a * other
  void axpy(double a, const PolicyParams& other);
  void set_zero();
  double norm() const;
  bool all_finite() const;

  bool operator==(const PolicyParams& other) const {
    return layout_ == other.layout_ && values_ == other.values_ && version_ == other.version_;
  }

 private:
  FeatureLayout layout_;
  std::vector<double> values_;
  std::string version_;
};

// Throws ConfigError when the prompt does not fit the layout.
void validate_prompt(const FeatureLayout& layout, const Prompt& prompt);

// Raw logits W^T phi + b.
void compute_logits(const PolicyParams& params, const SparseFeatures& phi,
                    std::span<double> logits);

// grad += scale * d(logits)^T ⊗ phi, i.e. backprop of a logit-space gradient.
void accumulate_logit_gradient(const SparseFeatures& phi, std::span<const double> dlogits,
                               double scale, PolicyParams& grad);

std::vector<double> token_distribution(const PolicyParams& params, const Context& ctx,
                                       double temperature = 1.0);

struct Rollout {
  std::vector<TokenId> tokens;
  std::vector<double> log_probs;  // at the sampling temperature
  bool terminated = false;        // ended with end-of-sequence
};

Rollout sample_sequence(const PolicyParams& params, const Prompt& prompt, TokenId eos,
                        std::uint64_t seed, int max_len = kDefaultMaxSequenceLength,
                        double temperature = 1.0);

// Argmax decoding; ties go to the lowest token id.
std::vector<TokenId> greedy_decode(const PolicyParams& params, const Prompt& prompt, TokenId eos,
                                   int max_len = kDefaultMaxSequenceLength);

double sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                         std::span<const TokenId> tokens);

PolicyParams grad_sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                                    std::span<const TokenId> tokens);

// grad += scale * ∇ log pi(tokens); returns log pi(tokens).
double accumulate_grad_sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                                         std::span<const TokenId> tokens, double scale,
                                         PolicyParams& grad);

enum class SnapshotRole : std::uint8_t { kSftReference = 0, kBehavior = 1 };
std::string_view role_name(SnapshotRole role);

// Frozen, shareable copy of a parameter set.
class PolicySnapshot {
 public:
  PolicySnapshot(const PolicyParams& params, SnapshotRole role);

  const PolicyParams& params() const { return *params_; }
  SnapshotRole role() const { return role_; }

 private:
  std::shared_ptr<const PolicyParams> params_;
  SnapshotRole role_;
};

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role);

}  // namespace congrpo
