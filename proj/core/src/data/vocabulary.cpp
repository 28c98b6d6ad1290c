// SPDX-License-Identifier: Apache-2.0
#include "kgdial/data/vocabulary.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgdial::data {

namespace {

const std::vector<std::string> kSpecials = {"<pad>", "<unk>", "<bos>", "<eos>"};

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = kSpecials;
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (TokenId i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) != 0;
}

std::vector<TokenId> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const TokenId> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

std::vector<std::string> Vocabulary::regular_tokens() const {
  return {tokens_.begin() + kSpecialCount, tokens_.end()};
}

void VocabularyBuilder::add(std::string_view token) {
  ++counts_[std::string(token)];
}

void VocabularyBuilder::add(const Tokens& tokens) {
  for (const auto& t : tokens) add(t);
}

void VocabularyBuilder::add(const GroundedExample& ex) {
  for (const auto& u : ex.context) add(u);
  for (const auto& s : ex.knowledge) add(s);
  add(ex.response);
}

void VocabularyBuilder::add(const UngroundedExample& ex) {
  for (const auto& u : ex.context) add(u);
  add(ex.response);
}

void VocabularyBuilder::add(const Document& doc) {
  for (const auto& s : doc.sentences) add(s);
}

Vocabulary VocabularyBuilder::build(std::size_t cap) const {
  if (counts_.empty()) {
    throw std::invalid_argument("build_vocab: no tokens in input");
  }
  std::vector<std::pair<std::string, std::uint64_t>> ranked;
  ranked.reserve(counts_.size());
  for (const auto& [tok, n] : counts_) {
    if (tok == kSpecials[0] || tok == kSpecials[1] || tok == kSpecials[2] ||
        tok == kSpecials[3]) {
      continue;
    }
    ranked.emplace_back(tok, n);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(tokens);
}

}  // namespace kgdial::data
