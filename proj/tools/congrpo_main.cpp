// congrpo: command-line driver for data generation, both training stages,
// evaluation, ablations and reporting.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error,
// 3 ablation finished with failed cells.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "congrpo/checkpoint.hpp"
#include "congrpo/config.hpp"
#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/eval.hpp"
#include "congrpo/grpo.hpp"
#include "congrpo/kernels.hpp"
#include "congrpo/micromed.hpp"
#include "congrpo/report.hpp"
#include "congrpo/sft.hpp"

namespace {

using namespace congrpo;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  KeyValues flags;
  std::string log_level = "info";
};

// Binds a flag that writes straight into the flag layer under `key`.
void bind(CLI::App* app, Common& common, const std::string& flag, const std::string& key,
          const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&common, key](const std::string& v) { common.flags[key] = v; }, help);
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_file, "key = value configuration file");
  app->add_option("--set", common.sets, "override any configuration key (key=value)");
  app->add_option("--log-level", common.log_level, "trace|debug|info|warn|error");
  bind(app, common, "--preset", "preset", "paper (default) or desk");
  bind(app, common, "--seed", "seed", "base random seed");
  bind(app, common, "--jobs", "jobs", "worker threads (0 = all cores)");
  bind(app, common, "--data", "data_dir", "dataset directory");
  bind(app, common, "--out", "output_dir", "output directory");
}

void add_rl_flags(CLI::App* app, Common& common) {
  bind(app, common, "--lambda", "lambda", "reward weights format,accuracy,consistency");
  bind(app, common, "--group-size", "group_size", "rollouts per prompt");
  bind(app, common, "--beta", "kl_beta", "KL coefficient");
  bind(app, common, "--clip", "clip_epsilon", "ratio clip epsilon");
  bind(app, common, "--rl-lr", "rl_lr", "reinforcement learning rate");
  bind(app, common, "--rl-epochs", "rl_epochs", "reinforcement epochs");
  bind(app, common, "--rl-batch-size", "rl_batch_size", "prompts per step");
  bind(app, common, "--rl-max-steps", "rl_max_steps", "stop after this many steps");
  bind(app, common, "--advantage-mode", "advantage_mode", "paper-literal|std-normalized");
  bind(app, common, "--ratio-reference", "ratio_reference", "sft-snapshot|behavior-snapshot");
  bind(app, common, "--max-grad-norm", "max_grad_norm", "gradient norm clip (0 = off)");
  bind(app, common, "--checkpoint-every", "checkpoint_every", "steps between last.ckpt writes");
  bind(app, common, "--evaluator", "evaluator", "rule-based|remote");
  bind(app, common, "--evaluator-url", "evaluator_url", "remote evaluator base URL");
}

void add_sft_flags(CLI::App* app, Common& common) {
  bind(app, common, "--sft-lr", "sft_lr", "supervised learning rate");
  bind(app, common, "--sft-epochs", "sft_epochs", "supervised epochs");
  bind(app, common, "--sft-batch-size", "sft_batch_size", "sequences per step");
  bind(app, common, "--sft-max-steps", "sft_max_steps", "stop after this many steps");
}

void add_eval_flags(CLI::App* app, Common& common) {
  bind(app, common, "--decode", "decode", "greedy|sampled");
  bind(app, common, "--parse-mode", "parse_mode", "strict|permissive");
}

RunConfig resolve(const Common& common) {
  std::vector<KeyValues> layers;
  if (!common.config_file.empty()) layers.push_back(read_config_file(common.config_file));
  layers.push_back(env_overrides());
  KeyValues flags = common.flags;
  for (const auto& s : common.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set: expected key=value, got '{}'", s));
    const auto key = s.substr(0, eq);
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      throw ConfigError(fmt::format("--set: unknown key '{}'", key));
    }
    flags[key] = s.substr(eq + 1);
  }
  layers.push_back(flags);
  return resolve_config(layers);
}

std::vector<Sample> load_split(const RunConfig& cfg, Split split) {
  const auto path = cfg.data_dir / fmt::format("{}.jsonl", split_name(split));
  auto samples = read_dataset(path);
  if (samples.empty()) throw InputError(fmt::format("dataset '{}' has no samples", path.string()));
  return samples;
}

int cmd_gen_data(const RunConfig& cfg) {
  const auto ds = micromed::generate(cfg.data);
  std::filesystem::create_directories(cfg.data_dir);
  nlohmann::json manifest{{"schema", "micromed"},
                          {"schema_version", kDatasetSchemaVersion},
                          {"seed", cfg.data.seed},
                          {"noise_sigma", cfg.data.noise_sigma},
                          {"test_fraction", cfg.data.test_fraction}};
  for (Split split : {Split::kTrain, Split::kTest}) {
    const auto samples = ds.split(split);
    const auto file = fmt::format("{}.jsonl", split_name(split));
    write_dataset(cfg.data_dir / file, samples, cfg.data, split);
    nlohmann::json counts = nlohmann::json::object();
    for (TaskAxis a : kAllAxes) {
      counts[std::string(axis_name(a))] =
          std::count_if(samples.begin(), samples.end(), [a](const Sample& s) { return s.axis == a; });
    }
    manifest["splits"][std::string(split_name(split))] = {
        {"file", file}, {"count", samples.size()}, {"per_axis", counts}};
  }
  write_file_atomic(cfg.data_dir / "manifest.json", manifest.dump(2) + "\n");
  write_resolved_config(cfg.data_dir / "resolved_config.txt", cfg);
  spdlog::info("wrote {} samples to {}", ds.samples.size(), cfg.data_dir.string());
  return kExitOk;
}

int cmd_sft(const RunConfig& cfg, const std::string& init_path) {
  const auto train = load_split(cfg, Split::kTrain);
  const Checkpoint init = init_path.empty() ? initial_checkpoint() : load_checkpoint(init_path);
  std::filesystem::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir / "resolved_config.txt", cfg);
  const auto result = run_sft(train, init, cfg.sft, {cfg.output_dir});
  if (!result.reports.empty()) {
    spdlog::info("sft finished: {} steps, final loss {:.5f}", result.reports.size(),
                 result.reports.back().loss);
  }
  spdlog::info("checkpoint: {}", (cfg.output_dir / "sft.ckpt").string());
  return kExitOk;
}

int cmd_rl(const RunConfig& cfg, const std::string& sft_path, bool from_scratch, bool resume) {
  if (sft_path.empty() && !from_scratch) {
    throw ConfigError("sft_checkpoint: rl needs --sft-checkpoint, or --from-scratch for the RL-only arm");
  }
  if (!sft_path.empty() && from_scratch) {
    throw ConfigError("sft_checkpoint: --sft-checkpoint and --from-scratch are mutually exclusive");
  }
  const auto train = load_split(cfg, Split::kTrain);
  Checkpoint start = from_scratch ? initial_checkpoint() : load_checkpoint(sft_path);
  if (from_scratch) start.role = SnapshotRole::kSftReference;
  const auto evaluator = make_evaluator(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir / "resolved_config.txt", cfg);
  const auto result = run_rl(train, start, cfg.rl, *evaluator, {cfg.output_dir, resume});
  if (!result.reports.empty()) {
    const auto& last = result.reports.back();
    spdlog::info("rl finished at step {}: reward={:.4f} kl={:.4g}", last.step, last.mean_reward,
                 last.mean_kl);
  }
  spdlog::info("checkpoint: {}", (cfg.output_dir / "final.ckpt").string());
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path, bool oracle,
             const std::string& split_name_arg, std::string label) {
  if (ckpt_path.empty() == !oracle) {
    throw ConfigError("checkpoint: eval needs exactly one of --checkpoint or --oracle");
  }
  const auto split = split_from_name(split_name_arg);
  if (!split) throw ConfigError(fmt::format("split: '{}' is not one of {{train, test}}", split_name_arg));
  const auto samples = load_split(cfg, *split);
  const auto evaluator = make_evaluator(cfg);
  EvalReport rep;
  if (oracle) {
    const Vocabulary vocab = micromed::make_vocabulary();
    rep = evaluate(OracleDecoder(vocab), samples, *evaluator, vocab, cfg.eval);
  } else {
    rep = evaluate(load_checkpoint(ckpt_path), samples, *evaluator, cfg.eval);
  }
  if (label.empty()) label = rep.checkpoint_id;
  std::filesystem::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir / "resolved_config.txt", cfg);
  const std::vector<AggregateRow> rows{{label, {rep}, std::nullopt}};
  write_report(rows, cfg.output_dir);
  std::cout << render_table(rows);
  return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, const std::vector<std::string>& arm_names) {
  const auto train = load_split(cfg, Split::kTrain);
  const auto test = load_split(cfg, Split::kTest);
  AblationConfig ac;
  for (const auto& arm : default_ablation_arms()) {
    if (arm_names.empty() ||
        std::find(arm_names.begin(), arm_names.end(), arm.name) != arm_names.end()) {
      ac.arms.push_back(arm);
    }
  }
  for (const auto& name : arm_names) {
    const auto arms = default_ablation_arms();
    if (std::none_of(arms.begin(), arms.end(), [&](const AblationArm& a) { return a.name == name; })) {
      throw ConfigError(fmt::format("arms: unknown arm '{}'", name));
    }
  }
  ac.seeds = cfg.seeds;
  ac.sft = cfg.sft;
  ac.rl = cfg.rl;
  ac.eval = cfg.eval;
  ac.output_dir = cfg.output_dir / "cells";
  std::filesystem::create_directories(cfg.output_dir);
  write_resolved_config(cfg.output_dir / "resolved_config.txt", cfg);
  const auto evaluator = make_evaluator(cfg);
  const auto rows = ablation_suite(train, test, ac, *evaluator);

  std::vector<std::pair<std::string, std::filesystem::path>> logs;
  for (const auto& arm : ac.arms) {
    const auto log = *ac.output_dir / fmt::format("seed-{}", ac.seeds.front()) / arm.name /
                     "rl_metrics.jsonl";
    if (arm.run_rl && std::filesystem::exists(log)) logs.emplace_back(arm.name, log);
  }
  write_report(rows, cfg.output_dir, logs);
  std::cout << render_table(rows);
  const bool partial = std::any_of(rows.begin(), rows.end(), [](const AggregateRow& r) { return r.failure.has_value(); });
  return partial ? kExitPartial : kExitOk;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs,
               const std::vector<std::string>& metrics) {
  if (inputs.empty()) throw ConfigError("input: report needs at least one --input report.json");
  std::vector<AggregateRow> rows;
  for (const auto& in : inputs) {
    const auto j = nlohmann::json::parse(read_file(in), nullptr, false);
    if (j.is_discarded()) throw InputError(fmt::format("report '{}' is not valid JSON", in));
    auto r = report_from_json(j);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  std::vector<std::pair<std::string, std::filesystem::path>> logs;
  for (const auto& m : metrics) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) {
      logs.emplace_back(std::filesystem::path(m).parent_path().filename().string(), m);
    } else {
      logs.emplace_back(m.substr(0, eq), m.substr(eq + 1));
    }
  }
  std::filesystem::create_directories(cfg.output_dir);
  const auto out = write_report(rows, cfg.output_dir, logs);
  std::cout << render_table(rows);
  for (const auto& p : out.plots) spdlog::info("plot: {}", p.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage SFT + consistency GRPO training on the MicroMed benchmark"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "generate the MicroMed train/test files");
  add_common(gen, common);
  bind(gen, common, "--per-axis", "per_axis", "questions per task axis (one or five counts)");
  bind(gen, common, "--test-fraction", "test_fraction", "share of cases in the test split");
  bind(gen, common, "--noise-sigma", "noise_sigma", "observation noise");

  std::string init_path;
  auto* sft = app.add_subcommand("sft", "supervised stage on gold reasoning sequences");
  add_common(sft, common);
  add_sft_flags(sft, common);
  sft->add_option("--init", init_path, "initial checkpoint (default: zeros)");

  std::string sft_path;
  bool from_scratch = false;
  bool resume = false;
  auto* rl = app.add_subcommand("rl", "consistency GRPO stage");
  add_common(rl, common);
  add_rl_flags(rl, common);
  rl->add_option("--sft-checkpoint", sft_path, "checkpoint produced by the sft command");
  rl->add_flag("--from-scratch", from_scratch, "start from a zero policy (RL-only arm)");
  rl->add_flag("--resume", resume, "continue from <out>/last.ckpt");

  std::string ckpt_path;
  bool oracle = false;
  std::string split = "test";
  std::string label;
  auto* ev = app.add_subcommand("eval", "accuracy evaluation of a checkpoint");
  add_common(ev, common);
  add_eval_flags(ev, common);
  bind(ev, common, "--evaluator", "evaluator", "rule-based|remote");
  ev->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate");
  ev->add_flag("--oracle", oracle, "evaluate the scripted gold policy");
  ev->add_option("--split", split, "train|test");
  ev->add_option("--label", label, "row label in the report");

  std::vector<std::string> arm_names;
  auto* ab = app.add_subcommand("ablate", "train and evaluate every ablation arm over seeds");
  add_common(ab, common);
  add_sft_flags(ab, common);
  add_rl_flags(ab, common);
  add_eval_flags(ab, common);
  bind(ab, common, "--seeds", "seeds", "comma-separated seed list (default 0,1,2)");
  ab->add_option("--arms", arm_names, "subset of arms to run");

  std::vector<std::string> inputs;
  std::vector<std::string> metrics;
  auto* rep = app.add_subcommand("report", "render tables and curves from saved results");
  add_common(rep, common);
  rep->add_option("--input", inputs, "report.json files");
  rep->add_option("--metrics", metrics, "label=rl_metrics.jsonl for the curves");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    spdlog::set_default_logger(spdlog::stderr_color_mt("congrpo"));
    spdlog::set_level(spdlog::level::from_str(common.log_level));
    const RunConfig cfg = resolve(common);
    spdlog::debug("kernels: {}", kernels::isa_name(kernels::active().isa));
    if (*gen) return cmd_gen_data(cfg);
    if (*sft) return cmd_sft(cfg, init_path);
    if (*rl) return cmd_rl(cfg, sft_path, from_scratch, resume);
    if (*ev) return cmd_eval(cfg, ckpt_path, oracle, split, label);
    if (*ab) return cmd_ablate(cfg, arm_names);
    if (*rep) return cmd_report(cfg, inputs, metrics);
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
