#include <gtest/gtest.h>

#include <stdexcept>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/eval.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

class EvalTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new micromed::Dataset(testing::small_dataset(3, 40));
    test_ = new std::vector<Sample>(data_->split(Split::kTest));
  }
  static void TearDownTestSuite() {
    delete test_;
    delete data_;
  }
  static inline micromed::Dataset* data_ = nullptr;
  static inline std::vector<Sample>* test_ = nullptr;
  Vocabulary vocab_ = micromed::make_vocabulary();
  RuleBasedEvaluator rule_;
};

TEST_F(EvalTest, OracleScoresOneEverywhere) {
  const auto rep = evaluate(OracleDecoder(vocab_), *test_, rule_, vocab_);
  EXPECT_EQ(rep.overall(), 1.0);
  for (TaskAxis a : kAllAxes) EXPECT_EQ(rep.axis_accuracy(a), 1.0);
  EXPECT_EQ(rep.format_rate(), 1.0);
  EXPECT_EQ(rep.consistency_rate(), 1.0);
  EXPECT_EQ(rep.undecodable, 0);
  EXPECT_EQ(rep.checkpoint_id, "oracle");
}

TEST_F(EvalTest, MalformedOutputScoresZero) {
  const ScriptedDecoder junk("junk", [&](const Sample&, std::size_t) {
    return std::vector<TokenId>{vocab_.letter(OptionLabel::kA), vocab_.eos()};
  });
  const auto rep = evaluate(junk, *test_, rule_, vocab_);
  EXPECT_EQ(rep.overall(), 0.0);
  EXPECT_EQ(rep.format_rate(), 0.0);
  EXPECT_EQ(rep.undecodable, rep.total);
}

TEST_F(EvalTest, ThreeOfFourOnOneAxis) {
  std::vector<Sample> four;
  for (const auto& s : *test_) {
    if (s.axis == TaskAxis::kModalityClassification && four.size() < 4) four.push_back(s);
  }
  ASSERT_EQ(four.size(), 4u);
  const ScriptedDecoder three("three", [&](const Sample& s, std::size_t i) {
    const auto label = i == 3 ? static_cast<OptionLabel>((option_index(s.answer) + 1) % 4) : s.answer;
    return render_answer(std::vector<TokenId>{}, label, vocab_);
  });
  const auto rep = evaluate(three, four, rule_, vocab_);
  EXPECT_EQ(rep.axis_accuracy(TaskAxis::kModalityClassification), 0.75);
  EXPECT_EQ(rep.overall(), 0.75);
  EXPECT_EQ(rep.consistency_rate(), 0.0);  // empty thoughts evidence nothing
}

TEST_F(EvalTest, OverallEqualsPooledAxisCounts) {
  const ScriptedDecoder mixed("mixed", [&](const Sample& s, std::size_t i) {
    return render_answer(std::vector<TokenId>{}, static_cast<OptionLabel>((i * 7 + s.case_id) % 4), vocab_);
  });
  const auto rep = evaluate(mixed, *test_, rule_, vocab_);
  long c = 0, t = 0;
  for (const auto& a : rep.per_axis) {
    c += a.correct;
    t += a.total;
  }
  EXPECT_NEAR(rep.overall(), static_cast<double>(c) / static_cast<double>(t), 1e-15);
  EXPECT_EQ(t, static_cast<long>(test_->size()));
}

TEST_F(EvalTest, PolicyEvaluationIsDeterministicAndReadOnly) {
  const auto train = data_->split(Split::kTrain);
  const auto ckpt = testing::quick_sft(train);
  const auto before = encode_checkpoint(ckpt);
  EvalOptions greedy;
  EXPECT_EQ(evaluate(ckpt, *test_, rule_, greedy), evaluate(ckpt, *test_, rule_, greedy));
  EvalOptions sampled;
  sampled.decode = DecodeMode::kSampled;
  sampled.seed = 4;
  sampled.jobs = 1;
  const auto a = evaluate(ckpt, *test_, rule_, sampled);
  sampled.jobs = 3;
  EXPECT_EQ(a, evaluate(ckpt, *test_, rule_, sampled));
  EXPECT_EQ(a.seeds, std::vector<std::uint64_t>{4});
  EXPECT_EQ(encode_checkpoint(ckpt), before);
}

TEST(EvalStats, SampleStandardDeviation) {
  const std::vector<double> v{0.8, 0.9, 1.0};
  const auto s = mean_std(v);
  EXPECT_NEAR(s.mean, 0.9, 1e-15);
  EXPECT_NEAR(s.std, 0.1, 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{0.5}).std, 0.0);
}

TEST(Ablation, DefaultArmsCoverTheWeightRows) {
  const auto arms = default_ablation_arms();
  const auto find = [&](const std::string& name) {
    auto it = std::find_if(arms.begin(), arms.end(), [&](const AblationArm& a) { return a.name == name; });
    EXPECT_NE(it, arms.end()) << name;
    return *it;
  };
  EXPECT_FALSE(find("rl-only").run_sft);
  EXPECT_FALSE(find("sft-only").run_rl);
  EXPECT_EQ(find("format-focused").weights, (RewardWeights{0.8, 0.1, 0.1}));
  EXPECT_EQ(find("accuracy-focused").weights, (RewardWeights{0.1, 0.8, 0.1}));
  EXPECT_EQ(find("consistency-focused").weights, (RewardWeights{0.1, 0.1, 0.8}));
  EXPECT_EQ(find("sft+acc-only").weights, (RewardWeights{0.0, 1.0, 0.0}));
}

TEST(Ablation, NeedsTwoArms) {
  AblationConfig cfg;
  cfg.arms = {default_ablation_arms().front()};
  EXPECT_THROW(validate(cfg), ConfigError);
}

// Throws on the second evaluation batch, i.e. in the second cell.
class FlakyEvaluator final : public ConsistencyEvaluator {
 public:
  std::optional<OptionLabel> deduce(const EvaluatorQuery& q) const override { return rule_.deduce(q); }
  std::vector<std::optional<OptionLabel>> deduce_batch(std::span<const EvaluatorQuery> qs) const override {
    if (++batches_ == 2) throw std::runtime_error("judge exploded");
    return ConsistencyEvaluator::deduce_batch(qs);
  }

 private:
  RuleBasedEvaluator rule_;
  mutable int batches_ = 0;
};

TEST(Ablation, FailingCellIsRecordedAndOthersRun) {
  const auto data = testing::small_dataset(4, 20);
  AblationConfig cfg;
  cfg.arms = {{"first", true, false, {}}, {"second", true, false, {}}};
  cfg.seeds = {0, 1};
  cfg.sft.epochs = 1;
  cfg.sft.learning_rate = 0.5;
  const FlakyEvaluator flaky;
  const auto rows = ablation_suite(data.split(Split::kTrain), data.split(Split::kTest), cfg, flaky);
  ASSERT_EQ(rows.size(), 2u);
  ASSERT_TRUE(rows[0].failure.has_value());
  EXPECT_NE(rows[0].failure->find("judge exploded"), std::string::npos);
  EXPECT_EQ(rows[0].runs.size(), 1u);
  EXPECT_FALSE(rows[1].failure.has_value());
  EXPECT_EQ(rows[1].runs.size(), 2u);
  // Both arms share the SFT checkpoint for a given seed.
  EXPECT_EQ(rows[0].runs[0], rows[1].runs[0]);
}

}  // namespace
}  // namespace congrpo
