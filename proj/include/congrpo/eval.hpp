#pragma once
// Accuracy evaluation, seed aggregation and the ablation suite.

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "congrpo/checkpoint.hpp"
#include "congrpo/format.hpp"
#include "congrpo/grpo.hpp"
#include "congrpo/reward.hpp"
#include "congrpo/sample.hpp"
#include "congrpo/sft.hpp"

namespace congrpo {

enum class DecodeMode { kGreedy, kSampled };

std::string_view decode_mode_name(DecodeMode m);
std::optional<DecodeMode> decode_mode_from_name(std::string_view s);

struct EvalOptions {
  DecodeMode decode = DecodeMode::kGreedy;
  std::uint64_t seed = 0;  // sampled mode only
  double temperature = 1.0;
  int max_len = kDefaultMaxSequenceLength;
  ParseMode parse_mode = ParseMode::kStrict;
  int jobs = 0;
};

// Produces one output sequence per evaluation item.
class SequenceDecoder {
 public:
  virtual ~SequenceDecoder() = default;
  virtual std::vector<TokenId> decode(const Sample& sample, std::size_t index) const = 0;
  virtual std::string id() const = 0;
};

class PolicyDecoder final : public SequenceDecoder {
 public:
  PolicyDecoder(const Checkpoint& ckpt, const EvalOptions& options);
  std::vector<TokenId> decode(const Sample& sample, std::size_t index) const override;
  std::string id() const override;

 private:
  const Checkpoint& ckpt_;
  EvalOptions options_;
};

// Emits the gold (thought, answer) sequence.
class OracleDecoder final : public SequenceDecoder {
 public:
  explicit OracleDecoder(const Vocabulary& vocab) : vocab_(vocab) {}
  std::vector<TokenId> decode(const Sample& sample, std::size_t index) const override;
  std::string id() const override { return "oracle"; }

 private:
  const Vocabulary& vocab_;
};

class ScriptedDecoder final : public SequenceDecoder {
 public:
  using Script = std::function<std::vector<TokenId>(const Sample&, std::size_t)>;
  ScriptedDecoder(std::string id, Script script) : id_(std::move(id)), script_(std::move(script)) {}
  std::vector<TokenId> decode(const Sample& sample, std::size_t index) const override {
    return script_(sample, index);
  }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  Script script_;
};

struct AxisCount {
  long correct = 0;
  long total = 0;
  bool operator==(const AxisCount&) const = default;
};

struct EvalReport {
  std::string checkpoint_id;
  std::vector<std::uint64_t> seeds;
  std::array<AxisCount, kNumAxes> per_axis{};
  long total = 0;
  long correct = 0;
  long well_formed = 0;
  long consistent = 0;    // well-formed items where the evaluator deduces the emitted answer
  long undecodable = 0;   // items with no extractable answer label

  double overall() const;
  double axis_accuracy(TaskAxis axis) const;
  double format_rate() const;
  // Engine diagnostic, not a benchmark metric.
  double consistency_rate() const;

  bool operator==(const EvalReport&) const = default;
};

EvalReport evaluate(const SequenceDecoder& decoder, const std::vector<Sample>& split,
                    const ConsistencyEvaluator& evaluator, const Vocabulary& vocab,
                    const EvalOptions& options = {});

// Convenience wrapper decoding with the checkpoint's policy.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& split,
                    const ConsistencyEvaluator& evaluator, const EvalOptions& options = {});

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single run
};

Stat mean_std(std::span<const double> values);

struct AggregateRow {
  std::string label;
  std::vector<EvalReport> runs;
  std::optional<std::string> failure;  // set when at least one run failed

  Stat overall() const;
  Stat axis(TaskAxis axis) const;
  Stat format_rate() const;
  Stat consistency_rate() const;
};

struct AblationArm {
  std::string name;
  bool run_sft = true;
  bool run_rl = true;
  RewardWeights weights;
};

// RL-only, SFT-only, SFT+acc-only, SFT+con-only and the four weight rows.
std::vector<AblationArm> default_ablation_arms();

struct AblationConfig {
  std::vector<AblationArm> arms;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  SftConfig sft;
  TrainConfig rl;
  EvalOptions eval;
  std::optional<std::filesystem::path> output_dir;
};

void validate(const AblationConfig& cfg);

// Trains and evaluates every (arm, seed) cell. The seed replaces the SFT and
// RL seeds; SFT results are shared across arms with the same seed. A failing
// cell is recorded on its row and the remaining cells still run.
std::vector<AggregateRow> ablation_suite(const std::vector<Sample>& train,
                                         const std::vector<Sample>& test,
                                         const AblationConfig& cfg,
                                         const ConsistencyEvaluator& evaluator);

}  // namespace congrpo
