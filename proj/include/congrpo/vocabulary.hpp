#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace congrpo {

using TokenId = std::int32_t;

enum class OptionLabel : std::uint8_t { kA = 0, kB = 1, kC = 2, kD = 3 };

inline constexpr int kNumOptions = 4;

char option_char(OptionLabel label);
std::optional<OptionLabel> option_from_char(char c);  // case-insensitive
inline int option_index(OptionLabel label) { return static_cast<int>(label); }

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";
inline constexpr std::string_view kEndOfSequence = "<eos>";
inline constexpr std::string_view kUnknown = "<unk>";

enum class TokenRole : std::uint8_t {
  kContent,
  kThinkOpen,
  kThinkClose,
  kAnswerOpen,
  kAnswerClose,
  kOptionLetter,
  kEndOfSequence,
  kUnknown,
};

// Token alphabet with fixed ids. Special tokens are recognized by their
// literal strings; option letters are "A".."D".
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  TokenRole role(TokenId id) const { return roles_.at(static_cast<std::size_t>(id)); }

  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws InputError when absent

  TokenId think_open() const { return think_open_; }
  TokenId think_close() const { return think_close_; }
  TokenId answer_open() const { return answer_open_; }
  TokenId answer_close() const { return answer_close_; }
  TokenId eos() const { return eos_; }
  TokenId unknown() const { return unknown_; }
  TokenId letter(OptionLabel label) const { return letters_[option_index(label)]; }
  std::optional<OptionLabel> letter_of(TokenId id) const;

  bool is_tag(TokenId id) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  // Space-joined rendering; tags render as their literals.
  std::string render(const std::vector<TokenId>& ids) const;
  // Inverse of render. Tags may be glued to neighbouring words; words not in
  // the vocabulary map to <unk>.
  std::vector<TokenId> encode(std::string_view text) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<TokenRole> roles_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId think_open_ = -1;
  TokenId think_close_ = -1;
  TokenId answer_open_ = -1;
  TokenId answer_close_ = -1;
  TokenId eos_ = -1;
  TokenId unknown_ = -1;
  std::array<TokenId, kNumOptions> letters_{-1, -1, -1, -1};
};

}  // namespace congrpo
