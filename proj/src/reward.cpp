#include "congrpo/reward.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "congrpo/errors.hpp"

namespace congrpo {

void validate(const RewardWeights& w) {
  for (auto [name, v] : {std::pair{"lambda_fmt", w.format}, std::pair{"lambda_acc", w.accuracy},
                         std::pair{"lambda_con", w.consistency}}) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(fmt::format("{}: weight must be finite and >= 0, got {}", name, v));
    }
  }
  const double total = w.format + w.accuracy + w.consistency;
  if (!(total > 0.0)) throw ConfigError("lambda: weights must not all be zero");
  if (std::abs(total - 1.0) > 1e-9) {
    spdlog::warn("reward weights sum to {} (not 1); using them as given", total);
  }
}

RewardBreakdown combine(double r_fmt, double r_acc, double r_con, const RewardWeights& w) {
  RewardBreakdown b;
  b.r_fmt = r_fmt;
  b.r_acc = r_acc;
  b.r_con = r_con;
  b.weights = w;
  b.total = w.format * r_fmt + w.accuracy * r_acc + w.consistency * r_con;
  return b;
}

std::string EvaluatorQuery::thought_text() const {
  std::string out;
  for (std::size_t i = 0; i < thought.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += thought[i];
  }
  return out;
}

std::vector<std::optional<OptionLabel>> ConsistencyEvaluator::deduce_batch(
    std::span<const EvaluatorQuery> queries) const {
  std::vector<std::optional<OptionLabel>> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(deduce(q));
  return out;
}

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  return words;
}

bool contains_run(const std::vector<std::string>& haystack, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size() && match; ++j) match = haystack[i + j] == needle[j];
    if (match) return true;
  }
  return false;
}

}  // namespace

std::optional<OptionLabel> RuleBasedEvaluator::deduce(const EvaluatorQuery& query) const {
  std::optional<OptionLabel> found;
  for (int k = 0; k < kNumOptions; ++k) {
    if (!contains_run(query.thought, split_words(query.options[static_cast<std::size_t>(k)]))) {
      continue;
    }
    if (found) return std::nullopt;
    found = static_cast<OptionLabel>(k);
  }
  return found;
}

std::unique_ptr<ConsistencyEvaluator> rule_based_evaluator() {
  return std::make_unique<RuleBasedEvaluator>();
}

double accuracy_reward(const StructuredOutput& s, OptionLabel gold) {
  return s.well_formed && s.answer && *s.answer == gold ? 1.0 : 0.0;
}

std::optional<EvaluatorQuery> consistency_query(const StructuredOutput& s, const Sample& sample,
                                                const Vocabulary& vocab) {
  if (!s.well_formed || !s.answer) return std::nullopt;
  return EvaluatorQuery{thought_words(s, vocab), sample.question, sample.options};
}

double consistency_from_deduced(const StructuredOutput& s,
                                const std::optional<OptionLabel>& deduced) {
  return s.well_formed && s.answer && deduced && *deduced == *s.answer ? 1.0 : 0.0;
}

double consistency_reward(const StructuredOutput& s, const Sample& sample,
                          const ConsistencyEvaluator& evaluator, const Vocabulary& vocab) {
  auto query = consistency_query(s, sample, vocab);
  if (!query) return 0.0;
  return consistency_from_deduced(s, evaluator.deduce(*query));
}

RewardBreakdown total_reward(const StructuredOutput& s, const Sample& sample,
                             const RewardWeights& w, const ConsistencyEvaluator& evaluator,
                             const Vocabulary& vocab) {
  const StructuredOutput* one = &s;
  const Sample* sp = &sample;
  return score_batch({one, 1}, {&sp, 1}, w, evaluator, vocab).front();
}

std::vector<RewardBreakdown> score_batch(std::span<const StructuredOutput> outputs,
                                         std::span<const Sample* const> samples,
                                         const RewardWeights& w,
                                         const ConsistencyEvaluator& evaluator,
                                         const Vocabulary& vocab) {
  if (outputs.size() != samples.size()) throw InputError("score_batch: size mismatch");
  std::vector<EvaluatorQuery> queries;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (auto q = consistency_query(outputs[i], *samples[i], vocab)) {
      queries.push_back(std::move(*q));
      owner.push_back(i);
    }
  }
  std::vector<std::optional<OptionLabel>> deduced(outputs.size());
  std::vector<char> asked(outputs.size(), 0);
  if (!queries.empty()) {
    auto answers = evaluator.deduce_batch(queries);
    for (std::size_t j = 0; j < owner.size(); ++j) {
      deduced[owner[j]] = answers[j];
      asked[owner[j]] = 1;
    }
  }
  std::vector<RewardBreakdown> out;
  out.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const StructuredOutput& s = outputs[i];
    RewardBreakdown b = combine(format_reward(s), accuracy_reward(s, samples[i]->answer),
                                consistency_from_deduced(s, deduced[i]), w);
    b.abstained = asked[i] && !deduced[i];
    out.push_back(b);
  }
  return out;
}

}  // namespace congrpo
