#pragma once
// Composite reward: format, accuracy and evaluator-based consistency.

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "congrpo/format.hpp"
#include "congrpo/sample.hpp"
#include "congrpo/vocabulary.hpp"

namespace congrpo {

struct RewardWeights {
  double format = 1.0 / 3.0;
  double accuracy = 1.0 / 3.0;
  double consistency = 1.0 / 3.0;

  bool operator==(const RewardWeights&) const = default;
};

// Throws ConfigError on negative or all-zero weights. Weights that do not sum
// to one are accepted as given (a warning is logged), never renormalized.
void validate(const RewardWeights& w);

struct RewardBreakdown {
  double r_fmt = 0.0;
  double r_acc = 0.0;
  double r_con = 0.0;
  double total = 0.0;
  RewardWeights weights;
  bool abstained = false;  // evaluator was consulted and returned no label
};

RewardBreakdown combine(double r_fmt, double r_acc, double r_con, const RewardWeights& w);

// What a consistency evaluator is allowed to see: the thought and the
// question with its options. Never the observation or the policy's answer.
struct EvaluatorQuery {
  std::vector<std::string> thought;
  std::string question;
  std::array<std::string, kNumOptions> options;

  std::string thought_text() const;
};

class ConsistencyEvaluator {
 public:
  virtual ~ConsistencyEvaluator() = default;

  // nullopt means abstain.
  virtual std::optional<OptionLabel> deduce(const EvaluatorQuery& query) const = 0;

  // Results are positionally aligned with `queries`. The default runs deduce
  // sequentially.
  virtual std::vector<std::optional<OptionLabel>> deduce_batch(
      std::span<const EvaluatorQuery> queries) const;
};

// Keyword-evidence rule: option k is evidenced when its text, split on
// whitespace, occurs as a contiguous run of thought words. Deduces the single
// evidenced option; abstains when none or several are evidenced.
class RuleBasedEvaluator final : public ConsistencyEvaluator {
 public:
  std::optional<OptionLabel> deduce(const EvaluatorQuery& query) const override;
};

std::unique_ptr<ConsistencyEvaluator> rule_based_evaluator();

double accuracy_reward(const StructuredOutput& s, OptionLabel gold);

// Query to send for this output, or nullopt when the consistency reward is 0
// without consulting the evaluator (malformed output or no answer label).
std::optional<EvaluatorQuery> consistency_query(const StructuredOutput& s, const Sample& sample,
                                                const Vocabulary& vocab);

double consistency_from_deduced(const StructuredOutput& s,
                                const std::optional<OptionLabel>& deduced);

double consistency_reward(const StructuredOutput& s, const Sample& sample,
                          const ConsistencyEvaluator& evaluator, const Vocabulary& vocab);

RewardBreakdown total_reward(const StructuredOutput& s, const Sample& sample,
                             const RewardWeights& w, const ConsistencyEvaluator& evaluator,
                             const Vocabulary& vocab);

// Scores many outputs with one batched evaluator call.
std::vector<RewardBreakdown> score_batch(std::span<const StructuredOutput> outputs,
                                         std::span<const Sample* const> samples,
                                         const RewardWeights& w,
                                         const ConsistencyEvaluator& evaluator,
                                         const Vocabulary& vocab);

}  // namespace congrpo
