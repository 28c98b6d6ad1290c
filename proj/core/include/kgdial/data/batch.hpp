// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgdial/data/text.hpp"
#include "kgdial/data/types.hpp"
#include "kgdial/data/vocabulary.hpp"

namespace kgdial::data {

/// Per-example extension of the base vocabulary with copyable source tokens
/// that are out of vocabulary. Extra id k maps to base_size + k.
class ExtendedVocab {
 public:
  ExtendedVocab() = default;
  explicit ExtendedVocab(std::size_t base_size) : base_size_(base_size) {}

  std::size_t base_size() const { return base_size_; }
  std::size_t size() const { return base_size_ + extra_.size(); }
  std::size_t extra_count() const { return extra_.size(); }
  const std::vector<std::string>& extra() const { return extra_; }

  std::optional<TokenId> find(const std::string& token) const;
  TokenId add(const std::string& token);
  /// Surface string of a base or extra id.
  std::string token(TokenId id, const Vocabulary& vocab) const;

  bool operator==(const ExtendedVocab&) const = default;

 private:
  std::size_t base_size_ = 0;
  std::vector<std::string> extra_;
};

/// Id-level view of one example. Context is flattened and truncated;
/// `*_ext` carry extended ids for copying, the plain fields carry base ids
/// (UNK for out-of-vocabulary) for embedding lookups.
struct EncodedExample {
  std::vector<TokenId> context;
  std::vector<TokenId> context_ext;
  std::vector<std::vector<TokenId>> knowledge;
  std::vector<std::vector<TokenId>> knowledge_ext;
  std::vector<TokenId> response;      // decoder inputs
  std::vector<TokenId> response_ext;  // prediction targets (EOS appended later)
  Tokens response_tokens;
  ExtendedVocab ext;

  bool operator==(const EncodedExample&) const = default;
};

EncodedExample encode_grounded(const GroundedExample& ex, const Vocabulary& vocab,
                               std::size_t max_context_words = kMaxContextWords);
EncodedExample encode_ungrounded(const UngroundedExample& ex,
                                 const Vocabulary& vocab,
                                 std::size_t max_context_words = kMaxContextWords);
/// A bare utterance for language-model training (no context, no document).
EncodedExample encode_utterance(const Tokens& utterance, const Vocabulary& vocab);
/// A document for knowledge-encoder training (sentences only).
EncodedExample encode_document(const Document& doc, const Vocabulary& vocab);

/// Padded id grids with true lengths. Padding positions are never read by
/// the model; example(i) recovers the unpadded example exactly.
struct Batch {
  std::size_t size = 0;
  std::vector<std::vector<TokenId>> context;        // size x max_ctx
  std::vector<std::vector<TokenId>> context_ext;
  std::vector<std::size_t> context_len;
  std::vector<std::vector<std::vector<TokenId>>> knowledge;  // size x max_sent x max_words
  std::vector<std::vector<std::vector<TokenId>>> knowledge_ext;
  std::vector<std::vector<std::size_t>> knowledge_len;       // 0 for padded sentences
  std::vector<std::size_t> knowledge_sentences;
  std::vector<std::vector<TokenId>> response;
  std::vector<std::vector<TokenId>> response_ext;
  std::vector<std::size_t> response_len;
  std::vector<Tokens> response_tokens;
  std::vector<ExtendedVocab> ext;

  /// 1.0 at real response positions, 0.0 at padding.
  std::vector<std::vector<double>> response_mask() const;
  EncodedExample example(std::size_t i) const;
};

Batch make_batch(std::span<const EncodedExample> examples);

}  // namespace kgdial::data
