#pragma once
// Parser for the `<think> ... </think> <answer> ... </answer>` output
// structure and the binary format reward.
//
// Strict grammar (default):
//
//   <think> C* </think> <answer> C+ </answer> [<eos>]
//
// where C is any token other than the four tags and end-of-sequence. The
// thought may be empty; the answer span may not. Permissive mode also
// accepts content tokens before <think>, between </think> and <answer>, and
// after </answer>, but still requires exactly one tag pair of each kind in
// that order.

#include <optional>
#include <span>
#include <vector>

#include "congrpo/vocabulary.hpp"

namespace congrpo {

enum class ParseMode { kStrict, kPermissive };

struct StructuredOutput {
  std::vector<TokenId> raw;
  bool well_formed = false;
  // Set only when well-formed.
  std::optional<std::vector<TokenId>> thought;
  std::optional<std::vector<TokenId>> answer_span;
  // Set only when well-formed and the answer span is exactly one option letter.
  std::optional<OptionLabel> answer;
  bool terminated = false;  // trailing end-of-sequence present

  bool operator==(const StructuredOutput&) const = default;
};

StructuredOutput parse(std::span<const TokenId> tokens, const Vocabulary& vocab,
                       ParseMode mode = ParseMode::kStrict);

double format_reward(const StructuredOutput& s);

// Canonical token rendering of a well-formed output. Throws InputError when
// s is not well-formed.
std::vector<TokenId> render(const StructuredOutput& s, const Vocabulary& vocab);

// <think> thought </think> <answer> letter </answer> <eos>
std::vector<TokenId> render_answer(std::span<const TokenId> thought, OptionLabel answer,
                                   const Vocabulary& vocab);

// Thought tokens as strings, for evaluators.
std::vector<std::string> thought_words(const StructuredOutput& s, const Vocabulary& vocab);

}  // namespace congrpo
