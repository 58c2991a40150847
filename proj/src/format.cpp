#include "congrpo/format.hpp"

#include <algorithm>
#include <cctype>

#include "congrpo/errors.hpp"

namespace congrpo {
namespace {

bool is_blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::optional<OptionLabel> canonical_answer(std::span<const TokenId> span, const Vocabulary& vocab) {
  std::optional<TokenId> only;
  for (TokenId t : span) {
    if (is_blank(vocab.token(t))) continue;
    if (only) return std::nullopt;  // multi-token answer
    only = t;
  }
  if (!only) return std::nullopt;
  if (auto letter = vocab.letter_of(*only)) return letter;
  const std::string& s = vocab.token(*only);
  if (s.size() == 1) return option_from_char(s[0]);
  return std::nullopt;
}

// Strips a single trailing end-of-sequence; returns false when an
// end-of-sequence appears anywhere else.
bool strip_eos(std::span<const TokenId>& body, const Vocabulary& vocab, bool& terminated) {
  terminated = !body.empty() && body.back() == vocab.eos();
  if (terminated) body = body.first(body.size() - 1);
  return std::find(body.begin(), body.end(), vocab.eos()) == body.end();
}

}  // namespace

StructuredOutput parse(std::span<const TokenId> tokens, const Vocabulary& vocab, ParseMode mode) {
  StructuredOutput out;
  out.raw.assign(tokens.begin(), tokens.end());

  std::span<const TokenId> body = tokens;
  bool terminated = false;
  if (!strip_eos(body, vocab, terminated)) return out;

  // Positions of each tag; exactly one of each is required in both modes.
  const auto find_unique = [&](TokenId tag) -> std::optional<std::size_t> {
    std::optional<std::size_t> at;
    for (std::size_t i = 0; i < body.size(); ++i) {
      if (body[i] != tag) continue;
      if (at) return std::nullopt;
      at = i;
    }
    return at;
  };
  const auto to = find_unique(vocab.think_open());
  const auto tc = find_unique(vocab.think_close());
  const auto ao = find_unique(vocab.answer_open());
  const auto ac = find_unique(vocab.answer_close());
  if (!to || !tc || !ao || !ac) return out;
  if (!(*to < *tc && *tc < *ao && *ao < *ac)) return out;
  if (*ac - *ao < 2) return out;  // empty answer span
  if (mode == ParseMode::kStrict) {
    if (*to != 0 || *ao != *tc + 1 || *ac != body.size() - 1) return out;
  }

  out.well_formed = true;
  out.terminated = terminated;
  out.thought.emplace(body.begin() + static_cast<std::ptrdiff_t>(*to + 1),
                      body.begin() + static_cast<std::ptrdiff_t>(*tc));
  out.answer_span.emplace(body.begin() + static_cast<std::ptrdiff_t>(*ao + 1),
                          body.begin() + static_cast<std::ptrdiff_t>(*ac));
  out.answer = canonical_answer(*out.answer_span, vocab);
  return out;
}

double format_reward(const StructuredOutput& s) { return s.well_formed ? 1.0 : 0.0; }

std::vector<TokenId> render(const StructuredOutput& s, const Vocabulary& vocab) {
  if (!s.well_formed) throw InputError("render: output is not well-formed");
  std::vector<TokenId> out;
  out.push_back(vocab.think_open());
  out.insert(out.end(), s.thought->begin(), s.thought->end());
  out.push_back(vocab.think_close());
  out.push_back(vocab.answer_open());
  out.insert(out.end(), s.answer_span->begin(), s.answer_span->end());
  out.push_back(vocab.answer_close());
  if (s.terminated) out.push_back(vocab.eos());
  return out;
}

std::vector<TokenId> render_answer(std::span<const TokenId> thought, OptionLabel answer,
                                   const Vocabulary& vocab) {
  std::vector<TokenId> out;
  out.reserve(thought.size() + 6);
  out.push_back(vocab.think_open());
  out.insert(out.end(), thought.begin(), thought.end());
  out.push_back(vocab.think_close());
  out.push_back(vocab.answer_open());
  out.push_back(vocab.letter(answer));
  out.push_back(vocab.answer_close());
  out.push_back(vocab.eos());
  return out;
}

std::vector<std::string> thought_words(const StructuredOutput& s, const Vocabulary& vocab) {
  std::vector<std::string> words;
  if (!s.thought) return words;
  for (TokenId t : *s.thought) words.push_back(vocab.token(t));
  return words;
}

}  // namespace congrpo
