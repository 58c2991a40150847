#pragma once
// Consistency group-relative policy optimization (the reinforcement stage).
//
// For each prompt, G outputs are sampled from the current policy and scored
// with the composite reward. The advantage of output i is its reward minus
// the group mean. The policy then takes one gradient-ascent step on
//
//   J = mean_groups mean_i [ (1/|Y_i|) Σ_t min(r_t Â_i, clip(r_t, 1-ε, 1+ε) Â_i)
//                            - β (1/|Y_i|) Σ_t KL(π_θ(.|ctx_t) || π_sft(.|ctx_t)) ]
//
// with r_t = π_θ(y_t|ctx_t) / π_ref(y_t|ctx_t). π_ref is the SFT snapshot by
// default, or the behaviour policy that produced the samples. The KL anchor
// is always the SFT snapshot and is computed exactly over the vocabulary.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "congrpo/checkpoint.hpp"
#include "congrpo/format.hpp"
#include "congrpo/policy.hpp"
#include "congrpo/reward.hpp"
#include "congrpo/sample.hpp"

namespace congrpo {

enum class AdvantageMode { kPaperLiteral, kStdNormalized };
enum class RatioReference { kSftSnapshot, kBehaviorSnapshot };

std::string_view advantage_mode_name(AdvantageMode m);
std::optional<AdvantageMode> advantage_mode_from_name(std::string_view s);
std::string_view ratio_reference_name(RatioReference r);
std::optional<RatioReference> ratio_reference_from_name(std::string_view s);

struct TrainConfig {
  int group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.04;
  double learning_rate = 1e-6;
  int batch_size = 64;
  int epochs = 1;
  AdvantageMode advantage_mode = AdvantageMode::kPaperLiteral;
  RatioReference ratio_reference = RatioReference::kSftSnapshot;
  RewardWeights weights;
  std::uint64_t seed = 0;
  int max_len = kDefaultMaxSequenceLength;
  double temperature = 1.0;
  double max_grad_norm = 0.0;  // 0 disables clipping
  int jobs = 0;
  int checkpoint_every = 0;  // steps; 0 writes only the final checkpoint
  long max_steps = 0;        // stop after this many steps (0 = no limit)
};

void validate(const TrainConfig& cfg);  // throws ConfigError

// Â_i = R_i - mean(R); std-normalized mode also divides by std(R) + 1e-8.
std::vector<double> group_advantages(std::span<const double> rewards, AdvantageMode mode);

// Ratio used when the reference probability underflows to exactly zero.
inline constexpr double kRatioCap = 1e6;

struct TokenRatio {
  double ratio = 1.0;
  bool guarded = false;
};

// π_live(y_t | prefix) / π_ref(y_t | prefix) at temperature 1, where
// y_t = tokens[position] and prefix = tokens[0, position).
TokenRatio token_ratio(const PolicyParams& live, const PolicySnapshot& ref, const Prompt& prompt,
                       std::span<const TokenId> tokens, std::size_t position);

// KL(π_live(.|ctx) || π_ref(.|ctx)) over the whole vocabulary.
double exact_kl(const PolicyParams& live, const PolicySnapshot& ref, const Context& ctx);

// Mean of exact_kl over the realized positions of `tokens`.
double sequence_kl(const PolicyParams& live, const PolicySnapshot& ref, const Prompt& prompt,
                   std::span<const TokenId> tokens);

struct GroupRollout {
  const Sample* sample = nullptr;
  Prompt prompt;
  std::vector<Rollout> rollouts;
  std::vector<StructuredOutput> outputs;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> advantages;
};

struct SurrogateResult {
  double objective = 0.0;  // surrogate - β * mean KL
  double surrogate = 0.0;
  double mean_kl = 0.0;
  double clip_fraction = 0.0;
  long tokens = 0;
  long ratio_guard_hits = 0;
  PolicyParams gradient;
};

// Objective value and its analytic (sub)gradient with respect to `live`.
// Where the clipped branch is selected and clipping binds, the token's
// surrogate gradient is zero. Throws NumericalError on non-finite values.
SurrogateResult surrogate_objective(std::span<const GroupRollout> groups, const PolicyParams& live,
                                    const PolicySnapshot& ratio_ref, const PolicySnapshot& kl_ref,
                                    const TrainConfig& cfg);

struct StepReport {
  long step = 0;
  int epoch = 0;
  double mean_reward = 0.0;
  double r_fmt_rate = 0.0;
  double r_acc_rate = 0.0;
  double r_con_rate = 0.0;
  double mean_kl = 0.0;
  double surrogate = 0.0;
  double objective = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  long abstentions = 0;
  long ratio_guard_hits = 0;
  double wall_seconds = 0.0;
};

// Metrics-log record. Wall time is left out so logs are reproducible.
nlohmann::json to_json(const StepReport& r);

// Samples G rollouts per prompt, scores them, computes advantages.
std::vector<GroupRollout> collect_groups(std::span<const Sample* const> batch,
                                         const PolicyParams& behavior,
                                         const ConsistencyEvaluator& evaluator,
                                         const Vocabulary& vocab, const TrainConfig& cfg,
                                         long step);

// One Con-GRPO update of `live`.
StepReport train_step(std::span<const Sample* const> batch, PolicyParams& live,
                      const PolicySnapshot& sft, const ConsistencyEvaluator& evaluator,
                      const Vocabulary& vocab, const TrainConfig& cfg, long step);

struct RlRunOptions {
  std::optional<std::filesystem::path> output_dir;  // checkpoints + rl_metrics.jsonl
  bool resume = false;  // continue from output_dir/last.ckpt when present
};

struct RlResult {
  Checkpoint final_checkpoint;
  std::vector<StepReport> reports;
  long resumed_from_step = 0;
};

// Runs cfg.epochs passes over shuffled batches of `train`, starting from and
// anchored to `sft` (role sft-reference).
RlResult run_rl(const std::vector<Sample>& train, const Checkpoint& sft, const TrainConfig& cfg,
                const ConsistencyEvaluator& evaluator, const RlRunOptions& options = {});

// Batch order for one epoch, shared by both trainers.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace congrpo
