#include "congrpo/eval.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/parallel.hpp"
#include "congrpo/rng.hpp"

namespace congrpo {

std::string_view decode_mode_name(DecodeMode m) {
  return m == DecodeMode::kGreedy ? "greedy" : "sampled";
}

std::optional<DecodeMode> decode_mode_from_name(std::string_view s) {
  if (s == "greedy") return DecodeMode::kGreedy;
  if (s == "sampled") return DecodeMode::kSampled;
  return std::nullopt;
}

PolicyDecoder::PolicyDecoder(const Checkpoint& ckpt, const EvalOptions& options)
    : ckpt_(ckpt), options_(options) {}

std::vector<TokenId> PolicyDecoder::decode(const Sample& sample, std::size_t index) const {
  const Prompt prompt = make_prompt(sample, ckpt_.vocab);
  if (options_.decode == DecodeMode::kGreedy) {
    return greedy_decode(ckpt_.params, prompt, ckpt_.vocab.eos(), options_.max_len);
  }
  const std::uint64_t seed = derive_seed(options_.seed, {0xE7A1ULL, index});
  return sample_sequence(ckpt_.params, prompt, ckpt_.vocab.eos(), seed, options_.max_len,
                         options_.temperature)
      .tokens;
}

std::string PolicyDecoder::id() const { return ckpt_.params.version(); }

std::vector<TokenId> OracleDecoder::decode(const Sample& sample, std::size_t) const {
  return gold_sequence(sample, vocab_);
}

namespace {

double ratio(long num, long den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double EvalReport::overall() const { return ratio(correct, total); }
double EvalReport::axis_accuracy(TaskAxis axis) const {
  const auto& c = per_axis[static_cast<std::size_t>(axis_index(axis))];
  return ratio(c.correct, c.total);
}
double EvalReport::format_rate() const { return ratio(well_formed, total); }
double EvalReport::consistency_rate() const { return ratio(consistent, well_formed); }

EvalReport evaluate(const SequenceDecoder& decoder, const std::vector<Sample>& split,
                    const ConsistencyEvaluator& evaluator, const Vocabulary& vocab,
                    const EvalOptions& options) {
  if (split.empty()) throw InputError("evaluate: evaluation split is empty");
  std::vector<StructuredOutput> outputs(split.size());
  parallel_for(split.size(), options.jobs, [&](std::size_t i) {
    outputs[i] = parse(decoder.decode(split[i], i), vocab, options.parse_mode);
  });

  std::vector<EvaluatorQuery> queries;
  std::vector<std::size_t> query_items;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (auto q = consistency_query(outputs[i], split[i], vocab)) {
      queries.push_back(std::move(*q));
      query_items.push_back(i);
    }
  }
  const auto deduced = evaluator.deduce_batch(queries);
  std::vector<char> consistent(split.size(), 0);
  for (std::size_t k = 0; k < query_items.size(); ++k) {
    const auto i = query_items[k];
    consistent[i] = consistency_from_deduced(outputs[i], deduced[k]) > 0.5;
  }

  EvalReport rep;
  rep.checkpoint_id = decoder.id();
  if (options.decode == DecodeMode::kSampled) rep.seeds.push_back(options.seed);
  for (std::size_t i = 0; i < split.size(); ++i) {
    const StructuredOutput& o = outputs[i];
    auto& axis = rep.per_axis[static_cast<std::size_t>(axis_index(split[i].axis))];
    const bool right = accuracy_reward(o, split[i].answer) > 0.5;
    ++axis.total;
    ++rep.total;
    if (right) {
      ++axis.correct;
      ++rep.correct;
    }
    if (o.well_formed) ++rep.well_formed;
    if (!o.answer) ++rep.undecodable;
    if (consistent[i]) ++rep.consistent;
  }
  return rep;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Sample>& split,
                    const ConsistencyEvaluator& evaluator, const EvalOptions& options) {
  const PolicyDecoder decoder(ckpt, options);
  return evaluate(decoder, split, evaluator, ckpt.vocab, options);
}

Stat mean_std(std::span<const double> values) {
  Stat s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {

template <typename F>
Stat stat_of(const std::vector<EvalReport>& runs, F&& f) {
  std::vector<double> v;
  v.reserve(runs.size());
  for (const auto& r : runs) v.push_back(f(r));
  return mean_std(v);
}

}  // namespace

Stat AggregateRow::overall() const {
  return stat_of(runs, [](const EvalReport& r) { return r.overall(); });
}
Stat AggregateRow::axis(TaskAxis a) const {
  return stat_of(runs, [a](const EvalReport& r) { return r.axis_accuracy(a); });
}
Stat AggregateRow::format_rate() const {
  return stat_of(runs, [](const EvalReport& r) { return r.format_rate(); });
}
Stat AggregateRow::consistency_rate() const {
  return stat_of(runs, [](const EvalReport& r) { return r.consistency_rate(); });
}

std::vector<AblationArm> default_ablation_arms() {
  const double third = 1.0 / 3.0;
  return {
      {"rl-only", false, true, {third, third, third}},
      {"sft-only", true, false, {third, third, third}},
      {"sft+acc-only", true, true, {0.0, 1.0, 0.0}},
      {"sft+con-only", true, true, {0.0, 0.0, 1.0}},
      {"format-focused", true, true, {0.8, 0.1, 0.1}},
      {"accuracy-focused", true, true, {0.1, 0.8, 0.1}},
      {"consistency-focused", true, true, {0.1, 0.1, 0.8}},
      {"balanced", true, true, {third, third, third}},
  };
}

void validate(const AblationConfig& cfg) {
  if (cfg.arms.size() < 2) {
    throw ConfigError(fmt::format("arms: an ablation needs at least 2 configurations, got {}",
                                  cfg.arms.size()));
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  for (const auto& arm : cfg.arms) {
    if (!arm.run_sft && !arm.run_rl) {
      throw ConfigError(fmt::format("arms: '{}' runs neither stage", arm.name));
    }
    validate(arm.weights);
  }
  validate(cfg.sft);
  validate(cfg.rl);
}

std::vector<AggregateRow> ablation_suite(const std::vector<Sample>& train,
                                         const std::vector<Sample>& test,
                                         const AblationConfig& cfg,
                                         const ConsistencyEvaluator& evaluator) {
  validate(cfg);
  const Checkpoint init = initial_checkpoint();
  std::map<std::uint64_t, Checkpoint> sft_cache;
  std::vector<AggregateRow> rows;
  for (const auto& arm : cfg.arms) {
    AggregateRow row;
    row.label = arm.name;
    std::vector<std::string> failures;
    for (std::uint64_t seed : cfg.seeds) {
      try {
        const auto cell_dir = [&](std::string_view stage) -> std::optional<std::filesystem::path> {
          if (!cfg.output_dir) return std::nullopt;
          return *cfg.output_dir / fmt::format("seed-{}", seed) / stage;
        };
        Checkpoint start = init;
        if (arm.run_sft) {
          auto it = sft_cache.find(seed);
          if (it == sft_cache.end()) {
            SftConfig sc = cfg.sft;
            sc.seed = seed;
            it = sft_cache.emplace(seed, run_sft(train, init, sc, {cell_dir("sft")}).final_checkpoint)
                     .first;
          }
          start = it->second;
        }
        Checkpoint final_ckpt = start;
        if (arm.run_rl) {
          TrainConfig rc = cfg.rl;
          rc.seed = seed;
          rc.weights = arm.weights;
          final_ckpt = run_rl(train, start, rc, evaluator, {cell_dir(arm.name), false}).final_checkpoint;
        }
        EvalOptions eo = cfg.eval;
        eo.seed = seed;
        EvalReport rep = evaluate(final_ckpt, test, evaluator, eo);
        rep.seeds = {seed};
        spdlog::info("ablation {} seed {}: overall={:.4f} format={:.4f} consistency={:.4f}",
                     arm.name, seed, rep.overall(), rep.format_rate(), rep.consistency_rate());
        row.runs.push_back(std::move(rep));
      } catch (const std::exception& e) {
        spdlog::error("ablation {} seed {} failed: {}", arm.name, seed, e.what());
        failures.push_back(fmt::format("seed {}: {}", seed, e.what()));
      }
    }
    if (!failures.empty()) {
      std::string msg;
      for (const auto& f : failures) msg += (msg.empty() ? "" : "; ") + f;
      row.failure = msg;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace congrpo
