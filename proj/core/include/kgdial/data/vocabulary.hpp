// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgdial/data/types.hpp"

namespace kgdial::data {

using TokenId = std::size_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr std::size_t kSpecialCount = 4;

inline constexpr std::size_t kDefaultVocabCap = 60000;

/// Dense token <-> id map. Ids 0..3 are PAD, UNK, BOS, EOS.
class Vocabulary {
 public:
  Vocabulary();
  /// Specials are prepended to `tokens`; duplicates are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }

  std::vector<TokenId> encode(const Tokens& tokens) const;
  Tokens decode(std::span<const TokenId> ids) const;

  /// Non-special tokens in id order.
  std::vector<std::string> regular_tokens() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Frequency-ranked vocabulary with ties broken lexicographically; at most
/// `cap` regular tokens are kept. Rejects an empty stream.
class VocabularyBuilder {
 public:
  void add(std::string_view token);
  void add(const Tokens& tokens);
  void add(const GroundedExample& ex);
  void add(const UngroundedExample& ex);
  void add(const Document& doc);

  const std::unordered_map<std::string, std::uint64_t>& counts() const {
    return counts_;
  }
  Vocabulary build(std::size_t cap = kDefaultVocabCap) const;

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
};

}  // namespace kgdial::data
