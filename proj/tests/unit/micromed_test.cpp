#include <gtest/gtest.h>

#include <map>
#include <set>

#include "congrpo/dataset.hpp"
#include "congrpo/errors.hpp"
#include "congrpo/micromed.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

using micromed::GeneratorConfig;

TEST(MicroMed, GoldThoughtsAreSound) {
  const auto ds = testing::small_dataset(0, 400);
  const RuleBasedEvaluator rule;
  const auto vocab = micromed::make_vocabulary();
  for (const auto& s : ds.samples) {
    EvaluatorQuery q{s.thought_tokens, s.question, s.options};
    ASSERT_EQ(rule.deduce(q), s.answer) << s.question;
  }
  EXPECT_NO_THROW(validate_dataset(ds.samples, vocab));
}

TEST(MicroMed, LatentsAreLinearlyRecoverable) {
  const auto r = testing::probe_latents(testing::small_dataset(5, 400));
  EXPECT_GE(r.worst, 0.99) << r.worst_attribute;
}

TEST(MicroMed, AnswerSlotsAreUniform) {
  const auto ds = testing::small_dataset(6, 2000);
  ASSERT_EQ(ds.samples.size(), 10000u);
  std::array<int, 4> slots{};
  for (const auto& s : ds.samples) ++slots[static_cast<std::size_t>(option_index(s.answer))];
  for (int c : slots) EXPECT_NEAR(c / 10000.0, 0.25, 0.02);
}

TEST(MicroMed, GenerationIsDeterministic) {
  EXPECT_EQ(testing::small_dataset(7, 50).samples, testing::small_dataset(7, 50).samples);
  EXPECT_NE(testing::small_dataset(7, 50).samples, testing::small_dataset(8, 50).samples);
}

TEST(MicroMed, AnswerTruthTable) {
  LatentCase normal{0, 2, 3, false, std::nullopt, std::nullopt};
  LatentCase lesion{1, 4, 5, true, Region::kCenter, 1};
  EXPECT_EQ(micromed::derive_answer(normal, TaskAxis::kModalityClassification),
            micromed::modality_tokens()[2]);
  EXPECT_EQ(micromed::derive_answer(normal, TaskAxis::kAnatomyIdentification),
            micromed::anatomy_tokens()[3]);
  EXPECT_EQ(micromed::derive_answer(normal, TaskAxis::kAnomalyDetection), "absent");
  EXPECT_EQ(micromed::derive_answer(lesion, TaskAxis::kAnomalyDetection), "present");
  EXPECT_EQ(micromed::derive_answer(lesion, TaskAxis::kLesionLocalization),
            micromed::region_token(Region::kCenter));
  EXPECT_EQ(micromed::derive_answer(lesion, TaskAxis::kPathologyCharacterization),
            micromed::pathology_tokens()[1]);
  EXPECT_FALSE(micromed::axis_legal(normal, TaskAxis::kLesionLocalization));
  EXPECT_FALSE(micromed::axis_legal(normal, TaskAxis::kPathologyCharacterization));
  EXPECT_TRUE(micromed::axis_legal(normal, TaskAxis::kAnomalyDetection));
  EXPECT_THROW(micromed::derive_answer(normal, TaskAxis::kLesionLocalization), InputError);
}

TEST(MicroMed, OptionsHoldTruthOnceAndComeFromTheClassSet) {
  const auto ds = testing::small_dataset(9, 100);
  for (const auto& s : ds.samples) {
    const auto truth = micromed::derive_answer(s.latent, s.axis);
    EXPECT_EQ(s.options[static_cast<std::size_t>(option_index(s.answer))], truth);
    const auto set = micromed::answer_class_set(s.axis);
    std::set<std::string> distinct(s.options.begin(), s.options.end());
    EXPECT_EQ(distinct.size(), 4u);
    for (const auto& o : s.options) {
      EXPECT_NE(std::find(set.begin(), set.end(), o), set.end()) << o;
    }
  }
}

TEST(MicroMed, SplitIsByCaseAndRespectsFraction) {
  const auto ds = testing::small_dataset(10, 300);
  std::map<std::int64_t, Split> owner;
  for (const auto& s : ds.samples) {
    auto [it, inserted] = owner.emplace(s.case_id, s.split);
    EXPECT_EQ(it->second, s.split);
  }
  long test_cases = 0;
  for (const auto& [id, split] : owner) test_cases += split == Split::kTest;
  EXPECT_NEAR(static_cast<double>(test_cases) / static_cast<double>(owner.size()), 0.3, 0.01);
}

TEST(MicroMed, HeldOutParaphrasesOnlyInTest) {
  GeneratorConfig cfg;
  cfg.per_axis.fill(60);
  cfg.heldout_paraphrases = {9, 10};
  for (const auto& s : micromed::generate(cfg).samples) {
    if (s.split == Split::kTrain) EXPECT_LT(s.paraphrase_id, 9);
  }
}

TEST(MicroMed, NoiselessObservationIsExactOneHot) {
  LatentCase lesion{1, 4, 5, true, Region::kLeftLower, 2};
  const auto v = micromed::render_observation(lesion, 123, 0.0);
  std::vector<double> expect(micromed::kObservationDim, 0.0);
  expect[micromed::kModalityOffset + 4] = 1.0;
  expect[micromed::kAnatomyOffset + 5] = 1.0;
  expect[micromed::kAnomalyOffset + 1] = 1.0;
  expect[micromed::kRegionOffset + static_cast<int>(Region::kLeftLower)] = 1.0;
  expect[micromed::kPathologyOffset + 2] = 1.0;
  EXPECT_EQ(v, expect);
}

TEST(MicroMed, ObservationSharedAcrossQuestionsOfACase) {
  const auto ds = testing::small_dataset(11, 50);
  std::map<std::int64_t, std::vector<double>> first;
  for (const auto& s : ds.samples) {
    auto [it, inserted] = first.emplace(s.case_id, s.observation);
    EXPECT_EQ(it->second, s.observation);
  }
}

TEST(MicroMed, ConfigErrorsNameTheField) {
  GeneratorConfig cfg;
  cfg.test_fraction = 1.5;
  try {
    micromed::generate(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("test_fraction"), std::string::npos);
  }
}

TEST(Dataset, JsonRoundTrip) {
  const auto ds = testing::small_dataset(12, 10);
  const auto path = std::filesystem::temp_directory_path() / "congrpo_ds_test.jsonl";
  write_dataset(path, ds.samples, ds.config, std::nullopt);
  EXPECT_EQ(read_dataset(path), ds.samples);
  std::filesystem::remove(path);
}

TEST(Dataset, GoldSequenceParsesWithGoldAnswer) {
  const auto ds = testing::small_dataset(13, 10);
  const auto vocab = micromed::make_vocabulary();
  for (const auto& s : ds.samples) {
    const auto out = parse(gold_sequence(s, vocab), vocab);
    EXPECT_TRUE(out.well_formed);
    EXPECT_EQ(out.answer, s.answer);
  }
}

}  // namespace
}  // namespace congrpo
