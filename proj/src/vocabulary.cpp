#include "congrpo/vocabulary.hpp"

#include <cctype>

#include <fmt/format.h>

#include "congrpo/errors.hpp"

namespace congrpo {

char option_char(OptionLabel label) { return static_cast<char>('A' + option_index(label)); }

std::optional<OptionLabel> option_from_char(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper < 'A' || upper > 'D') return std::nullopt;
  return static_cast<OptionLabel>(upper - 'A');
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ConfigError("vocabulary: empty token list");
  roles_.resize(tokens_.size(), TokenRole::kContent);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    const std::string& t = tokens_[i];
    if (t.empty()) throw ConfigError(fmt::format("vocabulary: token {} is empty", i));
    if (!index_.emplace(t, id).second) {
      throw ConfigError(fmt::format("vocabulary: duplicate token '{}'", t));
    }
    TokenRole role = TokenRole::kContent;
    if (t == kThinkOpen) {
      role = TokenRole::kThinkOpen;
      think_open_ = id;
    } else if (t == kThinkClose) {
      role = TokenRole::kThinkClose;
      think_close_ = id;
    } else if (t == kAnswerOpen) {
      role = TokenRole::kAnswerOpen;
      answer_open_ = id;
    } else if (t == kAnswerClose) {
      role = TokenRole::kAnswerClose;
      answer_close_ = id;
    } else if (t == kEndOfSequence) {
      role = TokenRole::kEndOfSequence;
      eos_ = id;
    } else if (t == kUnknown) {
      role = TokenRole::kUnknown;
      unknown_ = id;
    } else if (t.size() == 1 && t[0] >= 'A' && t[0] <= 'D') {
      role = TokenRole::kOptionLetter;
      letters_[t[0] - 'A'] = id;
    }
    roles_[i] = role;
  }
  const auto require = [](TokenId id, std::string_view what) {
    if (id < 0) throw ConfigError(fmt::format("vocabulary: missing required token {}", what));
  };
  require(think_open_, kThinkOpen);
  require(think_close_, kThinkClose);
  require(answer_open_, kAnswerOpen);
  require(answer_close_, kAnswerClose);
  require(eos_, kEndOfSequence);
  require(unknown_, kUnknown);
  for (int k = 0; k < kNumOptions; ++k) {
    require(letters_[k], std::string(1, static_cast<char>('A' + k)));
  }
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw InputError(fmt::format("vocabulary: unknown token '{}'", token));
}

std::optional<OptionLabel> Vocabulary::letter_of(TokenId id) const {
  for (int k = 0; k < kNumOptions; ++k) {
    if (letters_[k] == id) return static_cast<OptionLabel>(k);
  }
  return std::nullopt;
}

bool Vocabulary::is_tag(TokenId id) const {
  return id == think_open_ || id == think_close_ || id == answer_open_ || id == answer_close_;
}

std::string Vocabulary::render(const std::vector<TokenId>& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  static constexpr std::string_view kTags[] = {kThinkOpen, kThinkClose, kAnswerOpen,
                                               kAnswerClose};
  std::vector<TokenId> out;
  std::string word;
  const auto flush = [&] {
    if (word.empty()) return;
    auto found = find(word);
    if (!found && word.size() == 1) {
      // Option letters are matched case-insensitively.
      if (auto letter = option_from_char(word[0])) found = this->letter(*letter);
    }
    out.push_back(found ? *found : unknown_);
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (std::string_view tag : kTags) {
        if (text.substr(i, tag.size()) == tag) {
          flush();
          out.push_back(id(tag));
          i += tag.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    word.push_back(c);
    ++i;
  }
  flush();
  return out;
}

}  // namespace congrpo
