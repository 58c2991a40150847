#pragma once
// Supervised stage: maximum likelihood on gold (thought, answer) sequences.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "congrpo/checkpoint.hpp"
#include "congrpo/sample.hpp"

namespace congrpo {

struct SftConfig {
  double learning_rate = 1e-4;
  int epochs = 2;
  int batch_size = 64;
  std::uint64_t seed = 0;
  int jobs = 0;
  long max_steps = 0;  // 0 = no limit
};

void validate(const SftConfig& cfg);  // throws ConfigError

struct SftLoss {
  double loss = 0.0;  // -(1/N) Σ log π(Y*)
  long tokens = 0;
  PolicyParams gradient;  // d loss / d params
};

SftLoss sft_loss(const PolicyParams& params, std::span<const Sample* const> batch,
                 const Vocabulary& vocab, int jobs = 1);

struct SftStepReport {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const SftStepReport& r);

struct SftRunOptions {
  std::optional<std::filesystem::path> output_dir;  // sft.ckpt + sft_metrics.jsonl
};

struct SftResult {
  Checkpoint final_checkpoint;
  std::vector<SftStepReport> reports;
};

// Zero-initialized policy over the MicroMed vocabulary.
Checkpoint initial_checkpoint();

// Mini-batch gradient descent from `init`. The result is tagged sft-reference.
SftResult run_sft(const std::vector<Sample>& train, const Checkpoint& init, const SftConfig& cfg,
                  const SftRunOptions& options = {});

}  // namespace congrpo
