#include "congrpo/sft.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/grpo.hpp"
#include "congrpo/micromed.hpp"
#include "congrpo/parallel.hpp"

namespace congrpo {

void validate(const SftConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError(fmt::format("sft_lr: must be finite and > 0, got {}", cfg.learning_rate));
  }
  if (cfg.epochs < 0) throw ConfigError(fmt::format("sft_epochs: must be >= 0, got {}", cfg.epochs));
  if (cfg.batch_size < 1) {
    throw ConfigError(fmt::format("sft_batch_size: must be >= 1, got {}", cfg.batch_size));
  }
  if (cfg.max_steps < 0) throw ConfigError("sft_max_steps: must be >= 0");
}

SftLoss sft_loss(const PolicyParams& params, std::span<const Sample* const> batch,
                 const Vocabulary& vocab, int jobs) {
  if (batch.empty()) throw InputError("sft_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::vector<PolicyParams> grads(batch.size());
  std::vector<double> logps(batch.size());
  std::vector<long> lengths(batch.size());
  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    const Sample& s = *batch[i];
    const Prompt prompt = make_prompt(s, vocab);
    const auto gold = gold_sequence(s, vocab);
    grads[i] = PolicyParams(params.layout(), "grad");
    logps[i] = accumulate_grad_sequence_log_prob(params, prompt, gold, -inv_n, grads[i]);
    lengths[i] = static_cast<long>(gold.size());
  });
  SftLoss out;
  out.gradient = PolicyParams(params.layout(), "grad");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss -= logps[i];
    out.tokens += lengths[i];
    out.gradient.axpy(1.0, grads[i]);
  }
  out.loss *= inv_n;
  if (!std::isfinite(out.loss) || !out.gradient.all_finite()) {
    throw NumericalError(fmt::format("sft_loss: non-finite loss {}", out.loss));
  }
  return out;
}

nlohmann::json to_json(const SftStepReport& r) {
  return nlohmann::json{
      {"step", r.step}, {"epoch", r.epoch}, {"loss", r.loss}, {"grad_norm", r.grad_norm}};
}

Checkpoint initial_checkpoint() {
  Vocabulary vocab = micromed::make_vocabulary();
  PolicyParams params(micromed_layout(vocab), "init");
  return Checkpoint{std::move(vocab), std::move(params), SnapshotRole::kBehavior, {{"stage", "init"}}};
}

SftResult run_sft(const std::vector<Sample>& train, const Checkpoint& init, const SftConfig& cfg,
                  const SftRunOptions& options) {
  validate(cfg);
  if (train.empty()) throw InputError("run_sft: training split is empty");
  validate_dataset(train, init.vocab);
  if (!(init.params.layout() == micromed_layout(init.vocab))) {
    throw ConfigError("run_sft: initial checkpoint layout does not match the dataset");
  }

  std::optional<std::filesystem::path> metrics_path;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    metrics_path = *options.output_dir / "sft_metrics.jsonl";
    write_file_atomic(*metrics_path, "");
  }

  SftResult result;
  PolicyParams params = init.params;
  const std::size_t n = train.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
    const auto order = epoch_order(n, cfg.seed, epoch);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) break;
      ++step;
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<const Sample*> batch;
      for (std::size_t j = b * batch_size; j < std::min(n, (b + 1) * batch_size); ++j) {
        batch.push_back(&train[order[j]]);
      }
      const SftLoss l = sft_loss(params, batch, init.vocab, cfg.jobs);
      params.axpy(-cfg.learning_rate, l.gradient);
      SftStepReport rep{step, epoch, l.loss, l.gradient.norm(), 0.0};
      rep.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (metrics_path) {
        std::ofstream out(*metrics_path, std::ios::app);
        out << to_json(rep).dump() << '\n';
        if (!out) throw IoError(fmt::format("cannot append to '{}'", metrics_path->string()));
      }
      spdlog::debug("sft step {} loss={:.5f}", step, rep.loss);
      result.reports.push_back(rep);
    }
  }
  if (step > 0) params.set_version(fmt::format("sft-step-{}", step));
  result.final_checkpoint = Checkpoint{init.vocab, std::move(params), SnapshotRole::kSftReference,
                                       {{"stage", "sft"},
                                        {"step", std::to_string(step)},
                                        {"seed", std::to_string(cfg.seed)}}};
  if (options.output_dir) {
    save_checkpoint(*options.output_dir / "sft.ckpt", result.final_checkpoint);
  }
  return result;
}

}  // namespace congrpo
