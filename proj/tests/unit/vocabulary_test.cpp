#include <gtest/gtest.h>

#include "congrpo/errors.hpp"
#include "congrpo/micromed.hpp"
#include "congrpo/vocabulary.hpp"

namespace congrpo {
namespace {

TEST(Vocabulary, SpecialTokensResolve) {
  const auto v = micromed::make_vocabulary();
  EXPECT_EQ(v.token(v.think_open()), "<think>");
  EXPECT_EQ(v.token(v.answer_close()), "</answer>");
  EXPECT_EQ(v.token(v.eos()), "<eos>");
  EXPECT_EQ(v.role(v.letter(OptionLabel::kC)), TokenRole::kOptionLetter);
  EXPECT_EQ(v.letter_of(v.letter(OptionLabel::kD)), OptionLabel::kD);
  EXPECT_TRUE(v.is_tag(v.think_close()));
  EXPECT_FALSE(v.is_tag(v.eos()));
}

TEST(Vocabulary, EncodeRenderRoundTrip) {
  const auto v = micromed::make_vocabulary();
  const auto ids = v.encode("<think>modality ct</think><answer> b </answer>");
  ASSERT_EQ(ids.size(), 7u);
  EXPECT_EQ(ids[0], v.think_open());
  EXPECT_EQ(ids[5], v.letter(OptionLabel::kB));
  EXPECT_EQ(v.encode(v.render(ids)), ids);
}

TEST(Vocabulary, UnknownWordsMapToUnk) {
  const auto v = micromed::make_vocabulary();
  const auto ids = v.encode("zebra");
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0], v.unknown());
  EXPECT_THROW(v.id("zebra"), InputError);
}

TEST(Vocabulary, RejectsDuplicatesAndMissingSpecials) {
  EXPECT_THROW(Vocabulary({"a", "a"}), ConfigError);
  EXPECT_THROW(Vocabulary({"<think>", "A"}), ConfigError);
  EXPECT_THROW(Vocabulary(std::vector<std::string>{}), ConfigError);
}

TEST(Vocabulary, OptionCharsAreCaseInsensitive) {
  EXPECT_EQ(option_from_char('c'), OptionLabel::kC);
  EXPECT_EQ(option_from_char('E'), std::nullopt);
  EXPECT_EQ(option_char(OptionLabel::kA), 'A');
}

}  // namespace
}  // namespace congrpo
