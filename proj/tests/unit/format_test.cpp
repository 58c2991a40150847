#include <gtest/gtest.h>

#include "congrpo/errors.hpp"
#include "congrpo/format.hpp"
#include "congrpo/micromed.hpp"
#include "test_util.hpp"

namespace congrpo {
namespace {

class FormatTest : public ::testing::Test {
 protected:
  Vocabulary v = micromed::make_vocabulary();
  std::vector<TokenId> enc(std::string_view s) const { return v.encode(s); }
};

TEST_F(FormatTest, CanonicalOutputParses) {
  auto tokens = enc("<think> ct </think> <answer> B </answer>");
  tokens.push_back(v.eos());
  const auto s = parse(tokens, v);
  ASSERT_TRUE(s.well_formed);
  EXPECT_EQ(format_reward(s), 1.0);
  EXPECT_EQ(s.answer, OptionLabel::kB);
  EXPECT_EQ(s.thought->size(), 1u);
  EXPECT_TRUE(s.terminated);
}

TEST_F(FormatTest, MissingOrMisorderedTagsAreMalformed) {
  for (const char* text : {"<think> ct </think> B", "<answer> B </answer> <think> ct </think>",
                           "<think> ct <answer> B </answer>", "<think> </think> <answer> </answer>",
                           "<think> ct </think> <think> ct </think> <answer> B </answer>", ""}) {
    const auto s = parse(enc(text), v);
    EXPECT_FALSE(s.well_formed) << text;
    EXPECT_EQ(format_reward(s), 0.0) << text;
    EXPECT_FALSE(s.answer.has_value());
  }
}

TEST_F(FormatTest, EmptyThoughtIsAllowed) {
  EXPECT_TRUE(parse(enc("<think></think><answer>A</answer>"), v).well_formed);
}

TEST_F(FormatTest, MultiTokenAnswerIsWellFormedWithoutLabel) {
  const auto s = parse(enc("<think> ct </think> <answer> A B </answer>"), v);
  EXPECT_TRUE(s.well_formed);
  EXPECT_FALSE(s.answer.has_value());
  const auto w = parse(enc("<think> ct </think> <answer> ct </answer>"), v);
  EXPECT_TRUE(w.well_formed);
  EXPECT_FALSE(w.answer.has_value());
}

TEST_F(FormatTest, EosOnlyAllowedAtTheEnd) {
  auto tokens = enc("<think> ct </think> <answer> B </answer>");
  tokens.insert(tokens.begin() + 2, v.eos());
  EXPECT_FALSE(parse(tokens, v).well_formed);
}

TEST_F(FormatTest, PermissiveModeAcceptsSurroundingText) {
  const auto tokens = enc("ct <think> ct </think> ct <answer> C </answer> ct");
  EXPECT_FALSE(parse(tokens, v).well_formed);
  const auto s = parse(tokens, v, ParseMode::kPermissive);
  EXPECT_TRUE(s.well_formed);
  EXPECT_EQ(s.answer, OptionLabel::kC);
}

TEST_F(FormatTest, RenderRoundTrip) {
  auto tokens = enc("<think> ct mri </think> <answer> D </answer>");
  tokens.push_back(v.eos());
  const auto s = parse(tokens, v);
  EXPECT_EQ(render(s, v), tokens);
  EXPECT_EQ(parse(render(s, v), v), s);
  const std::vector<TokenId> thought{v.id("ct")};
  EXPECT_EQ(parse(render_answer(thought, OptionLabel::kA, v), v).answer, OptionLabel::kA);
  EXPECT_THROW(render(parse(enc("B"), v), v), InputError);
}

TEST_F(FormatTest, AgreesWithGrammarOracleOnEveryTagArrangement) {
  testing::GrammarOracle oracle(v);
  long checked = 0, well_formed = 0;
  testing::for_each_tag_arrangement(v, 8, v.letter(OptionLabel::kB), [&](std::span<const TokenId> s) {
    const bool strict = parse(s, v).well_formed;
    const bool permissive = parse(s, v, ParseMode::kPermissive).well_formed;
    ASSERT_EQ(strict, oracle.strict(s)) << oracle.spell(s);
    ASSERT_EQ(permissive, oracle.permissive(s)) << oracle.spell(s);
    ++checked;
    well_formed += strict;
  });
  EXPECT_GT(checked, 2'000'000);
  EXPECT_GT(well_formed, 0);
}

}  // namespace
}  // namespace congrpo
