#pragma once

// Reserved token ids shared by the model (EOS, YES/NO readout) and the prompt
// templates, plus the symbol vocabulary used by the synthetic corpus.

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fedreview/errors.hpp"

namespace fedreview {

using TokenId = std::int32_t;

namespace tokens {
inline constexpr TokenId pad = 0;
inline constexpr TokenId eos = 1;
inline constexpr TokenId unk = 2;
inline constexpr TokenId patch_open = 3;
inline constexpr TokenId patch_close = 4;
inline constexpr TokenId ask_review = 5;
inline constexpr TokenId gen_comment = 6;
inline constexpr TokenId comment_open = 7;
inline constexpr TokenId comment_close = 8;
inline constexpr TokenId gen_refined = 9;
inline constexpr TokenId yes = 10;
inline constexpr TokenId no = 11;
inline constexpr TokenId first_free = 12;

inline const std::vector<std::string>& reserved_symbols() {
  static const std::vector<std::string> symbols{
      "<PAD>",     "<EOS>",       "<UNK>",  "<PATCH>",       "</PATCH>", "<Q:REVIEW?>",
      "<GEN:COMMENT>", "<COMMENT>", "</COMMENT>", "<GEN:REFINED>", "YES",      "NO"};
  return symbols;
}
}  // namespace tokens

// Whitespace-delimited symbol vocabulary. Ids below tokens::first_free are the
// reserved markers; unknown symbols map to <UNK>.
class Vocabulary {
 public:
  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  explicit Vocabulary(const std::vector<std::string>& symbols) {
    for (const auto& s : tokens::reserved_symbols()) add(s);
    for (const auto& s : symbols) add(s);
  }

  std::size_t size() const noexcept { return symbols_.size(); }

  TokenId id(std::string_view symbol) const {
    auto it = ids_.find(std::string(symbol));
    return it == ids_.end() ? tokens::unk : it->second;
  }

  bool contains(std::string_view symbol) const { return ids_.count(std::string(symbol)) != 0; }

  const std::string& symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
      throw RangeError("token id " + std::to_string(id) + " outside vocabulary");
    }
    return symbols_[static_cast<std::size_t>(id)];
  }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::istringstream in{std::string(text)};
    std::string word;
    while (in >> word) out.push_back(id(word));
    return out;
  }

  std::string decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (TokenId t : ids) {
      if (!out.empty()) out += ' ';
      out += symbol(t);
    }
    return out;
  }

  const std::vector<std::string>& symbols() const noexcept { return symbols_; }

 private:
  void add(const std::string& s) {
    if (ids_.count(s)) throw ConfigError("duplicate vocabulary symbol '" + s + "'");
    ids_.emplace(s, static_cast<TokenId>(symbols_.size()));
    symbols_.push_back(s);
  }

  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace fedreview
