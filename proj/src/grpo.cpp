#include "congrpo/grpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/kernels.hpp"
#include "congrpo/parallel.hpp"
#include "congrpo/rng.hpp"

namespace congrpo {

std::string_view advantage_mode_name(AdvantageMode m) {
  return m == AdvantageMode::kPaperLiteral ? "paper-literal" : "std-normalized";
}

std::optional<AdvantageMode> advantage_mode_from_name(std::string_view s) {
  if (s == "paper-literal") return AdvantageMode::kPaperLiteral;
  if (s == "std-normalized") return AdvantageMode::kStdNormalized;
  return std::nullopt;
}

std::string_view ratio_reference_name(RatioReference r) {
  return r == RatioReference::kSftSnapshot ? "sft-snapshot" : "behavior-snapshot";
}

std::optional<RatioReference> ratio_reference_from_name(std::string_view s) {
  if (s == "sft-snapshot") return RatioReference::kSftSnapshot;
  if (s == "behavior-snapshot") return RatioReference::kBehaviorSnapshot;
  return std::nullopt;
}

void validate(const TrainConfig& cfg) {
  if (cfg.group_size < 2) {
    throw ConfigError(fmt::format(
        "group_size: must be >= 2 (a group mean baseline over one output is vacuous), got {}",
        cfg.group_size));
  }
  if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0)) {
    throw ConfigError(fmt::format("clip_epsilon: must lie in (0, 1), got {}", cfg.clip_epsilon));
  }
  if (!(cfg.kl_beta >= 0.0) || !std::isfinite(cfg.kl_beta)) {
    throw ConfigError(fmt::format("kl_beta: must be finite and >= 0, got {}", cfg.kl_beta));
  }
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ConfigError(fmt::format("rl_lr: must be finite and > 0, got {}", cfg.learning_rate));
  }
  if (cfg.batch_size < 1) throw ConfigError(fmt::format("rl_batch_size: must be >= 1, got {}", cfg.batch_size));
  if (cfg.epochs < 0) throw ConfigError(fmt::format("rl_epochs: must be >= 0, got {}", cfg.epochs));
  if (cfg.max_len < 1) throw ConfigError(fmt::format("max_len: must be >= 1, got {}", cfg.max_len));
  if (!(cfg.temperature > 0.0)) {
    throw ConfigError(fmt::format("temperature: must be > 0, got {}", cfg.temperature));
  }
  if (!(cfg.max_grad_norm >= 0.0)) {
    throw ConfigError(fmt::format("max_grad_norm: must be >= 0, got {}", cfg.max_grad_norm));
  }
  if (cfg.checkpoint_every < 0) throw ConfigError("checkpoint_every: must be >= 0");
  if (cfg.max_steps < 0) throw ConfigError("max_steps: must be >= 0");
  validate(cfg.weights);
}

std::vector<double> group_advantages(std::span<const double> rewards, AdvantageMode mode) {
  if (rewards.size() < 2) {
    throw InputError(fmt::format("group_advantages: group size {} < 2", rewards.size()));
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (mode == AdvantageMode::kStdNormalized) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    const double denom = std::sqrt(var / n) + 1e-8;
    for (double& a : adv) a /= denom;
  }
  return adv;
}

namespace {

// Log-softmax of the policy at the current featurizer position.
void log_softmax_at(const PolicyParams& params, const SparseFeatures& phi,
                    std::span<double> probs, std::span<double> log_probs) {
  compute_logits(params, phi, probs);
  kernels::softmax(probs, 1.0, log_probs);
}

TokenRatio ratio_from_logs(double log_live, double log_ref) {
  if (std::exp(log_ref) == 0.0) return {kRatioCap, true};
  const double r = std::exp(log_live - log_ref);
  if (!std::isfinite(r) || r > kRatioCap) return {kRatioCap, true};
  return {r, false};
}

}  // namespace

TokenRatio token_ratio(const PolicyParams& live, const PolicySnapshot& ref, const Prompt& prompt,
                       std::span<const TokenId> tokens, std::size_t position) {
  if (position >= tokens.size()) {
    throw InputError(fmt::format("token_ratio: position {} outside sequence of length {}",
                                 position, tokens.size()));
  }
  const Context ctx{prompt, tokens.first(position)};
  const TokenId y = tokens[position];
  if (y < 0 || static_cast<std::size_t>(y) >= live.vocab_size()) {
    throw InputError(fmt::format("token_ratio: token id {} outside vocabulary", y));
  }
  validate_prompt(live.layout(), prompt);
  SequenceFeaturizer feats(live.layout(), prompt);
  for (TokenId t : ctx.prefix) feats.push(t);
  const auto v = live.vocab_size();
  std::vector<double> p(v), logp(v), q(v), logq(v);
  log_softmax_at(live, feats.features(), p, logp);
  log_softmax_at(ref.params(), feats.features(), q, logq);
  const auto yi = static_cast<std::size_t>(y);
  return ratio_from_logs(logp[yi], logq[yi]);
}

double exact_kl(const PolicyParams& live, const PolicySnapshot& ref, const Context& ctx) {
  validate_prompt(live.layout(), ctx.prompt);
  SequenceFeaturizer feats(live.layout(), ctx.prompt);
  for (TokenId t : ctx.prefix) feats.push(t);
  const auto v = live.vocab_size();
  std::vector<double> p(v), logp(v), q(v), logq(v);
  log_softmax_at(live, feats.features(), p, logp);
  log_softmax_at(ref.params(), feats.features(), q, logq);
  return std::max(0.0, kernels::kl_from_logs(logp, logq));
}

double sequence_kl(const PolicyParams& live, const PolicySnapshot& ref, const Prompt& prompt,
                   std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InputError("sequence_kl: empty sequence");
  validate_prompt(live.layout(), prompt);
  SequenceFeaturizer feats(live.layout(), prompt);
  const auto v = live.vocab_size();
  std::vector<double> p(v), logp(v), q(v), logq(v);
  double total = 0.0;
  for (TokenId y : tokens) {
    log_softmax_at(live, feats.features(), p, logp);
    log_softmax_at(ref.params(), feats.features(), q, logq);
    total += std::max(0.0, kernels::kl_from_logs(logp, logq));
    feats.push(y);
  }
  return total / static_cast<double>(tokens.size());
}

namespace {

struct GroupPartial {
  double surrogate = 0.0;
  double kl = 0.0;
  long tokens = 0;
  long clipped = 0;
  long guarded = 0;
  PolicyParams gradient;
};

void group_contribution(const GroupRollout& group, const PolicyParams& live,
                        const PolicySnapshot& ratio_ref, const PolicySnapshot& kl_ref,
                        const TrainConfig& cfg, double rollout_weight, GroupPartial& out) {
  const auto v = live.vocab_size();
  const bool shared_ref = &ratio_ref.params() == &kl_ref.params();
  std::vector<double> p(v), logp(v), q(v), logq(v), qk(v), logqk(v), dlogits(v);
  const double eps = cfg.clip_epsilon;
  const double beta = cfg.kl_beta;

  for (std::size_t i = 0; i < group.rollouts.size(); ++i) {
    const auto& tokens = group.rollouts[i].tokens;
    if (tokens.empty()) throw InputError("surrogate_objective: empty rollout");
    const double adv = group.advantages[i];
    const double w = rollout_weight / static_cast<double>(tokens.size());
    SequenceFeaturizer feats(live.layout(), group.prompt);
    for (TokenId y : tokens) {
      const SparseFeatures& phi = feats.features();
      const auto yi = static_cast<std::size_t>(y);
      log_softmax_at(live, phi, p, logp);
      log_softmax_at(ratio_ref.params(), phi, q, logq);
      const std::vector<double>& log_anchor = shared_ref ? logq : logqk;
      if (!shared_ref) log_softmax_at(kl_ref.params(), phi, qk, logqk);

      const double kl = std::max(0.0, kernels::kl_from_logs(logp, log_anchor));
      const TokenRatio tr = ratio_from_logs(logp[yi], logq[yi]);
      const double r = tr.ratio;
      const double clipped_r = std::clamp(r, 1.0 - eps, 1.0 + eps);
      const double term = std::min(r * adv, clipped_r * adv);
      const bool binds = (adv > 0.0 && r > 1.0 + eps) || (adv < 0.0 && r < 1.0 - eps);

      out.surrogate += w * term;
      out.kl += w * kl;
      ++out.tokens;
      if (binds) ++out.clipped;
      if (tr.guarded) ++out.guarded;

      // d/dz of the token objective: surrogate part A·r·(e_y - p) when the
      // unclipped branch is live, minus β·p⊙(log p - log q - KL).
      const double surrogate_coeff = (!binds && !tr.guarded && adv != 0.0) ? adv * r : 0.0;
      for (std::size_t k = 0; k < v; ++k) {
        dlogits[k] = -surrogate_coeff * p[k] - beta * p[k] * (logp[k] - log_anchor[k] - kl);
      }
      dlogits[yi] += surrogate_coeff;
      accumulate_logit_gradient(phi, dlogits, w, out.gradient);
      feats.push(y);
    }
  }
}

}  // namespace

SurrogateResult surrogate_objective(std::span<const GroupRollout> groups, const PolicyParams& live,
                                    const PolicySnapshot& ratio_ref, const PolicySnapshot& kl_ref,
                                    const TrainConfig& cfg) {
  if (groups.empty()) throw InputError("surrogate_objective: no groups");
  std::size_t n_rollouts = 0;
  for (const auto& g : groups) {
    if (g.rollouts.size() != g.advantages.size()) {
      throw InputError("surrogate_objective: rollouts and advantages differ in length");
    }
    validate_prompt(live.layout(), g.prompt);
    n_rollouts += g.rollouts.size();
  }
  if (n_rollouts == 0) throw InputError("surrogate_objective: no rollouts");
  const double rollout_weight = 1.0 / static_cast<double>(n_rollouts);

  std::vector<GroupPartial> partials(groups.size());
  parallel_for(groups.size(), cfg.jobs, [&](std::size_t gi) {
    partials[gi].gradient = PolicyParams(live.layout(), "grad");
    group_contribution(groups[gi], live, ratio_ref, kl_ref, cfg, rollout_weight, partials[gi]);
  });

  SurrogateResult res;
  res.gradient = PolicyParams(live.layout(), "grad");
  long clipped = 0;
  for (const auto& part : partials) {
    res.surrogate += part.surrogate;
    res.mean_kl += part.kl;
    res.tokens += part.tokens;
    clipped += part.clipped;
    res.ratio_guard_hits += part.guarded;
    res.gradient.axpy(1.0, part.gradient);
  }
  res.objective = res.surrogate - cfg.kl_beta * res.mean_kl;
  res.clip_fraction = res.tokens > 0 ? static_cast<double>(clipped) / static_cast<double>(res.tokens) : 0.0;
  if (!std::isfinite(res.objective) || !res.gradient.all_finite()) {
    throw NumericalError(fmt::format(
        "surrogate_objective: non-finite value (objective={}, surrogate={}, mean_kl={}, "
        "ratio_guard_hits={})",
        res.objective, res.surrogate, res.mean_kl, res.ratio_guard_hits));
  }
  return res;
}

nlohmann::json to_json(const StepReport& r) {
  return nlohmann::json{{"step", r.step},
                        {"epoch", r.epoch},
                        {"mean_reward", r.mean_reward},
                        {"r_fmt_rate", r.r_fmt_rate},
                        {"r_acc_rate", r.r_acc_rate},
                        {"r_con_rate", r.r_con_rate},
                        {"mean_kl", r.mean_kl},
                        {"surrogate", r.surrogate},
                        {"clip_fraction", r.clip_fraction},
                        {"grad_norm", r.grad_norm},
                        {"abstentions", r.abstentions},
                        {"ratio_guard_hits", r.ratio_guard_hits}};
}

std::vector<GroupRollout> collect_groups(std::span<const Sample* const> batch,
                                         const PolicyParams& behavior,
                                         const ConsistencyEvaluator& evaluator,
                                         const Vocabulary& vocab, const TrainConfig& cfg,
                                         long step) {
  std::vector<GroupRollout> groups(batch.size());
  parallel_for(batch.size(), cfg.jobs, [&](std::size_t b) {
    GroupRollout& g = groups[b];
    g.sample = batch[b];
    g.prompt = make_prompt(*batch[b], vocab);
    for (int i = 0; i < cfg.group_size; ++i) {
      const std::uint64_t seed = derive_seed(
          cfg.seed, {static_cast<std::uint64_t>(step), b, static_cast<std::uint64_t>(i)});
      g.rollouts.push_back(
          sample_sequence(behavior, g.prompt, vocab.eos(), seed, cfg.max_len, cfg.temperature));
      g.outputs.push_back(parse(g.rollouts.back().tokens, vocab));
    }
  });

  // One batched evaluator call for the whole step.
  std::vector<StructuredOutput> outputs;
  std::vector<const Sample*> owners;
  for (const auto& g : groups) {
    for (const auto& o : g.outputs) {
      outputs.push_back(o);
      owners.push_back(g.sample);
    }
  }
  const auto scores = score_batch(outputs, owners, cfg.weights, evaluator, vocab);
  std::size_t k = 0;
  for (auto& g : groups) {
    std::vector<double> totals;
    for (int i = 0; i < cfg.group_size; ++i, ++k) {
      g.breakdowns.push_back(scores[k]);
      totals.push_back(scores[k].total);
    }
    g.advantages = group_advantages(totals, cfg.advantage_mode);
  }
  return groups;
}

StepReport train_step(std::span<const Sample* const> batch, PolicyParams& live,
                      const PolicySnapshot& sft, const ConsistencyEvaluator& evaluator,
                      const Vocabulary& vocab, const TrainConfig& cfg, long step) {
  if (batch.empty()) throw InputError("train_step: empty batch");
  const auto t0 = std::chrono::steady_clock::now();

  std::optional<PolicySnapshot> behavior;
  if (cfg.ratio_reference == RatioReference::kBehaviorSnapshot) {
    behavior.emplace(live, SnapshotRole::kBehavior);
  }
  const auto groups = collect_groups(batch, live, evaluator, vocab, cfg, step);
  const PolicySnapshot& ratio_ref = behavior ? *behavior : sft;
  SurrogateResult res = surrogate_objective(groups, live, ratio_ref, sft, cfg);

  StepReport rep;
  rep.step = step;
  rep.mean_kl = res.mean_kl;
  rep.surrogate = res.surrogate;
  rep.objective = res.objective;
  rep.clip_fraction = res.clip_fraction;
  rep.ratio_guard_hits = res.ratio_guard_hits;
  rep.grad_norm = res.gradient.norm();

  double scale = cfg.learning_rate;
  if (cfg.max_grad_norm > 0.0 && rep.grad_norm > cfg.max_grad_norm) {
    scale *= cfg.max_grad_norm / rep.grad_norm;
  }
  live.axpy(scale, res.gradient);
  if (!live.all_finite()) {
    throw NumericalError(fmt::format("train_step {}: parameters became non-finite", step));
  }

  double n = 0.0;
  for (const auto& g : groups) {
    for (const auto& b : g.breakdowns) {
      rep.mean_reward += b.total;
      rep.r_fmt_rate += b.r_fmt;
      rep.r_acc_rate += b.r_acc;
      rep.r_con_rate += b.r_con;
      rep.abstentions += b.abstained ? 1 : 0;
      n += 1.0;
    }
  }
  rep.mean_reward /= n;
  rep.r_fmt_rate /= n;
  rep.r_acc_rate /= n;
  rep.r_con_rate /= n;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5EEDULL, static_cast<std::uint64_t>(epoch)}));
  shuffle(order.begin(), order.end(), rng);
  return order;
}

namespace {

void truncate_metrics(const std::filesystem::path& path, long keep_steps) {
  std::vector<std::string> kept;
  if (std::filesystem::exists(path)) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line) && static_cast<long>(kept.size()) < keep_steps) {
      kept.push_back(line);
    }
  }
  std::string out;
  for (const auto& l : kept) out += l + "\n";
  write_file_atomic(path, out);
}

Checkpoint make_rl_checkpoint(const Vocabulary& vocab, const PolicyParams& live,
                              const TrainConfig& cfg, long step) {
  Checkpoint c{vocab, live, SnapshotRole::kBehavior, {}};
  c.meta["stage"] = "rl";
  c.meta["step"] = std::to_string(step);
  c.meta["seed"] = std::to_string(cfg.seed);
  return c;
}

}  // namespace

RlResult run_rl(const std::vector<Sample>& train, const Checkpoint& sft, const TrainConfig& cfg,
                const ConsistencyEvaluator& evaluator, const RlRunOptions& options) {
  validate(cfg);
  if (train.empty()) throw InputError("run_rl: training split is empty");
  const Vocabulary& vocab = sft.vocab;
  const PolicySnapshot anchor(sft.params, SnapshotRole::kSftReference);

  RlResult result;
  PolicyParams live = sft.params;
  std::optional<std::filesystem::path> metrics_path;
  std::optional<std::filesystem::path> last_path;
  if (options.output_dir) {
    std::filesystem::create_directories(*options.output_dir);
    metrics_path = *options.output_dir / "rl_metrics.jsonl";
    last_path = *options.output_dir / "last.ckpt";
    if (options.resume && std::filesystem::exists(*last_path)) {
      Checkpoint last = load_checkpoint(*last_path);
      if (!(last.vocab == vocab) || !(last.params.layout() == live.layout())) {
        throw ConfigError("run_rl: resume checkpoint does not match the SFT checkpoint layout");
      }
      live = last.params;
      result.resumed_from_step = std::stol(last.meta.at("step"));
      spdlog::info("resuming RL from step {}", result.resumed_from_step);
    }
    truncate_metrics(*metrics_path, result.resumed_from_step);
  }

  const std::size_t n = train.size();
  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  long step = 0;
  bool stop = false;
  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const auto order = epoch_order(n, cfg.seed, epoch);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      ++step;
      if (step <= result.resumed_from_step) continue;
      if (cfg.max_steps > 0 && step > cfg.max_steps) {
        --step;
        stop = true;
        break;
      }
      std::vector<const Sample*> batch;
      for (std::size_t j = b * batch_size; j < std::min(n, (b + 1) * batch_size); ++j) {
        batch.push_back(&train[order[j]]);
      }
      StepReport rep = train_step(batch, live, anchor, evaluator, vocab, cfg, step);
      rep.epoch = epoch;
      if (metrics_path) {
        std::ofstream out(*metrics_path, std::ios::app);
        out << to_json(rep).dump() << '\n';
        if (!out) throw IoError(fmt::format("cannot append to '{}'", metrics_path->string()));
      }
      spdlog::debug("rl step {} reward={:.4f} kl={:.3g} clip={:.3f}", step, rep.mean_reward,
                    rep.mean_kl, rep.clip_fraction);
      result.reports.push_back(rep);
      if (last_path && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
        save_checkpoint(*last_path, make_rl_checkpoint(vocab, live, cfg, step));
      }
    }
  }
  if (step > 0) live.set_version(fmt::format("rl-step-{}", step));
  result.final_checkpoint = make_rl_checkpoint(vocab, live, cfg, step);
  if (step == 0) result.final_checkpoint = sft;
  if (options.output_dir) {
    save_checkpoint(*last_path, result.final_checkpoint);
    save_checkpoint(*options.output_dir / "final.ckpt", result.final_checkpoint);
  }
  return result;
}

}  // namespace congrpo
