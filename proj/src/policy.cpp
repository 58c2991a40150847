#include "congrpo/policy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "congrpo/errors.hpp"
#include "congrpo/kernels.hpp"
#include "congrpo/rng.hpp"

namespace congrpo {

void validate(const FeatureLayout& layout) {
  if (layout.observation_dim < 0 || layout.num_axes < 1 || layout.num_paraphrases < 1 ||
      layout.num_option_slots < 1 || layout.vocab_size < 2) {
    throw ConfigError(fmt::format(
        "feature layout: invalid dims (observation={}, axes={}, paraphrases={}, slots={}, vocab={})",
        layout.observation_dim, layout.num_axes, layout.num_paraphrases, layout.num_option_slots,
        layout.vocab_size));
  }
}

void validate_prompt(const FeatureLayout& layout, const Prompt& prompt) {
  if (static_cast<int>(prompt.observation.size()) != layout.observation_dim) {
    throw ConfigError(fmt::format("prompt: observation has {} features, policy expects {}",
                                  prompt.observation.size(), layout.observation_dim));
  }
  if (prompt.axis < 0 || prompt.axis >= layout.num_axes) {
    throw ConfigError(fmt::format("prompt: axis {} outside [0, {})", prompt.axis, layout.num_axes));
  }
  if (prompt.paraphrase < 0 || prompt.paraphrase >= layout.num_paraphrases) {
    throw ConfigError(fmt::format("prompt: paraphrase {} outside [0, {})", prompt.paraphrase,
                                  layout.num_paraphrases));
  }
  for (TokenId t : prompt.option_tokens) {
    if (t < -1 || t >= layout.vocab_size) {
      throw ConfigError(fmt::format("prompt: option token id {} outside vocabulary", t));
    }
  }
}

// ---------------------------------------------------------------------------
// Features

SequenceFeaturizer::SequenceFeaturizer(const FeatureLayout& layout, const Prompt& prompt)
    : layout_(layout), prompt_(prompt), in_bag_(static_cast<std::size_t>(layout.vocab_size), 0) {}

void SequenceFeaturizer::push(TokenId token) {
  const auto t = static_cast<std::size_t>(token);
  if (!in_bag_[t]) {
    in_bag_[t] = 1;
    bag_.push_back(token);
  }
  last_ = token;
  dirty_ = true;
}

const SparseFeatures& SequenceFeaturizer::features() {
  if (!dirty_) return cache_;
  cache_.clear();
  for (int i = 0; i < layout_.observation_dim; ++i) {
    const double x = prompt_.observation[static_cast<std::size_t>(i)];
    if (x != 0.0) cache_.push(i, x);
  }
  cache_.push(layout_.axis_offset() + prompt_.axis, 1.0);
  cache_.push(layout_.paraphrase_offset() + prompt_.paraphrase, 1.0);
  for (int k = 0; k < layout_.num_option_slots && k < kNumOptions; ++k) {
    const TokenId opt = prompt_.option_tokens[static_cast<std::size_t>(k)];
    if (opt >= 0 && in_bag_[static_cast<std::size_t>(opt)]) {
      cache_.push(layout_.slot_offset() + k, 1.0);
    }
  }
  for (TokenId t : bag_) cache_.push(layout_.bag_offset() + t, 1.0);
  if (last_ >= 0) cache_.push(layout_.last_token_offset() + last_, 1.0);
  dirty_ = false;
  return cache_;
}

// ---------------------------------------------------------------------------
// Parameters

PolicyParams::PolicyParams(FeatureLayout layout, std::string version)
    : layout_(layout), version_(std::move(version)) {
  validate(layout_);
  values_.assign((feature_dim() + 1) * vocab_size(), 0.0);
}

void PolicyParams::axpy(double a, const PolicyParams& other) {
  if (!(layout_ == other.layout_)) throw ConfigError("params axpy: layout mismatch");
  kernels::axpy(a, other.values_, values_);
}

void PolicyParams::set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

double PolicyParams::norm() const { return std::sqrt(kernels::dot(values_, values_)); }

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Forward / backward

void compute_logits(const PolicyParams& params, const SparseFeatures& phi,
                    std::span<double> logits) {
  const auto b = params.bias();
  std::copy(b.begin(), b.end(), logits.begin());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    kernels::axpy(phi.value[i], params.weight_row(phi.index[i]), logits);
  }
}

void accumulate_logit_gradient(const SparseFeatures& phi, std::span<const double> dlogits,
                               double scale, PolicyParams& grad) {
  for (std::size_t i = 0; i < phi.size(); ++i) {
    kernels::axpy(scale * phi.value[i], dlogits, grad.weight_row(phi.index[i]));
  }
  kernels::axpy(scale, dlogits, grad.bias());
}

namespace {

void check_tokens(const PolicyParams& params, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InputError("token sequence must be non-empty");
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= params.vocab_size()) {
      throw InputError(fmt::format("token id {} outside vocabulary of size {}", t,
                                   params.vocab_size()));
    }
  }
}

std::size_t pick(std::span<const double> probs, double u) {
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  return last_positive;
}

}  // namespace

std::vector<double> token_distribution(const PolicyParams& params, const Context& ctx,
                                       double temperature) {
  validate_prompt(params.layout(), ctx.prompt);
  if (!ctx.prefix.empty()) check_tokens(params, ctx.prefix);
  SequenceFeaturizer feats(params.layout(), ctx.prompt);
  for (TokenId t : ctx.prefix) feats.push(t);
  std::vector<double> probs(params.vocab_size());
  compute_logits(params, feats.features(), probs);
  kernels::softmax(probs, temperature);
  return probs;
}

Rollout sample_sequence(const PolicyParams& params, const Prompt& prompt, TokenId eos,
                        std::uint64_t seed, int max_len, double temperature) {
  if (max_len < 1) throw InputError(fmt::format("sample_sequence: max_len {} < 1", max_len));
  if (!(temperature > 0.0)) {
    throw InputError(fmt::format("sample_sequence: temperature {} must be > 0", temperature));
  }
  validate_prompt(params.layout(), prompt);
  Rng rng(seed);
  SequenceFeaturizer feats(params.layout(), prompt);
  std::vector<double> probs(params.vocab_size());
  std::vector<double> log_probs(params.vocab_size());
  Rollout out;
  for (int t = 0; t < max_len; ++t) {
    compute_logits(params, feats.features(), probs);
    kernels::softmax(probs, temperature, log_probs);
    const std::size_t y = pick(probs, uniform01(rng));
    out.tokens.push_back(static_cast<TokenId>(y));
    out.log_probs.push_back(log_probs[y]);
    if (static_cast<TokenId>(y) == eos) {
      out.terminated = true;
      break;
    }
    feats.push(static_cast<TokenId>(y));
  }
  return out;
}

std::vector<TokenId> greedy_decode(const PolicyParams& params, const Prompt& prompt, TokenId eos,
                                   int max_len) {
  validate_prompt(params.layout(), prompt);
  SequenceFeaturizer feats(params.layout(), prompt);
  std::vector<double> logits(params.vocab_size());
  std::vector<TokenId> out;
  for (int t = 0; t < max_len; ++t) {
    compute_logits(params, feats.features(), logits);
    const auto y = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) -
                                        logits.begin());
    out.push_back(y);
    if (y == eos) break;
    feats.push(y);
  }
  return out;
}

double sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                         std::span<const TokenId> tokens) {
  check_tokens(params, tokens);
  validate_prompt(params.layout(), prompt);
  SequenceFeaturizer feats(params.layout(), prompt);
  std::vector<double> probs(params.vocab_size());
  std::vector<double> log_probs(params.vocab_size());
  double total = 0.0;
  for (TokenId y : tokens) {
    compute_logits(params, feats.features(), probs);
    kernels::softmax(probs, 1.0, log_probs);
    total += log_probs[static_cast<std::size_t>(y)];
    feats.push(y);
  }
  return total;
}

double accumulate_grad_sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                                         std::span<const TokenId> tokens, double scale,
                                         PolicyParams& grad) {
  check_tokens(params, tokens);
  validate_prompt(params.layout(), prompt);
  SequenceFeaturizer feats(params.layout(), prompt);
  std::vector<double> delta(params.vocab_size());
  std::vector<double> log_probs(params.vocab_size());
  double total = 0.0;
  for (TokenId y : tokens) {
    const SparseFeatures& phi = feats.features();
    compute_logits(params, phi, delta);
    kernels::softmax(delta, 1.0, log_probs);
    total += log_probs[static_cast<std::size_t>(y)];
    // d log p_y / d z = e_y - p
    kernels::scale(-1.0, delta);
    delta[static_cast<std::size_t>(y)] += 1.0;
    accumulate_logit_gradient(phi, delta, scale, grad);
    feats.push(y);
  }
  return total;
}

PolicyParams grad_sequence_log_prob(const PolicyParams& params, const Prompt& prompt,
                                    std::span<const TokenId> tokens) {
  PolicyParams grad(params.layout(), "grad");
  accumulate_grad_sequence_log_prob(params, prompt, tokens, 1.0, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Snapshots

std::string_view role_name(SnapshotRole role) {
  return role == SnapshotRole::kSftReference ? "sft-reference" : "behavior";
}

PolicySnapshot::PolicySnapshot(const PolicyParams& params, SnapshotRole role)
    : params_(std::make_shared<const PolicyParams>(params)), role_(role) {
  if (!params.all_finite()) throw NumericalError("snapshot: parameters contain non-finite values");
}

PolicySnapshot snapshot(const PolicyParams& params, SnapshotRole role) {
  return PolicySnapshot(params, role);
}

}  // namespace congrpo
