// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "kgdial/data/types.hpp"

namespace kgdial::data {

inline constexpr std::size_t kMaxContextWords = 128;

/// Lowercase, detach ASCII punctuation into separate tokens, split on
/// whitespace.
Tokens tokenize(std::string_view text);

/// Splits a token stream after each sentence-final token (. ! ?).
/// A trailing fragment without final punctuation becomes its own sentence.
std::vector<Tokens> split_sentences(const Tokens& tokens);

/// Keeps the last `limit` words of the flattened history. Utterance
/// boundaries inside the kept suffix are preserved; a cut utterance survives
/// as its tail. Empty utterances are dropped.
std::vector<Tokens> truncate_context(const std::vector<Tokens>& utterances,
                                     std::size_t limit = kMaxContextWords);

/// Every non-empty context utterance and response of D_C, in order.
std::vector<Tokens> derive_lm_corpus(
    const std::vector<UngroundedExample>& dialogues);

std::size_t word_count(const std::vector<Tokens>& utterances);
Tokens flatten(const std::vector<Tokens>& utterances);

}  // namespace kgdial::data
