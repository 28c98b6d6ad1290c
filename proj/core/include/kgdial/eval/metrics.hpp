// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "kgdial/data/types.hpp"

namespace kgdial::eval {

class EmbeddingTable;

/// Lowercase, drop punctuation characters and the articles a/an/the, then
/// split on whitespace.
data::Tokens normalize_answer(const std::string& text);

/// Bag-of-unigram F1 with clipped counts after normalize_answer. Returns 0
/// when either side is empty after normalization.
double unigram_f1(const std::string& hypothesis, const std::string& reference);

/// Corpus BLEU-n, uniform weights, no smoothing, brevity penalty
/// exp(1 - r/c) when c <= r. Inputs are lowercased and tokenized.
/// Throws std::invalid_argument for n < 1 or unequal list sizes.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, std::size_t n);

struct EmbeddingScore {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

/// Bag-of-words embedding similarities; tokens missing from the table are
/// skipped. nullopt when either side has no in-table token.
std::optional<EmbeddingScore> embedding_metrics(const data::Tokens& hypothesis,
                                                const data::Tokens& reference,
                                                const EmbeddingTable& table);

struct CorpusEmbeddingScore {
  EmbeddingScore mean;
  std::size_t pairs = 0;      // pairs that contributed
  std::size_t undefined = 0;  // pairs excluded for lack of in-table tokens
};

CorpusEmbeddingScore corpus_embedding_metrics(const std::vector<data::Tokens>& hypotheses,
                                              const std::vector<data::Tokens>& references,
                                              const EmbeddingTable& table);

/// exp(total_nll / tokens). Throws std::invalid_argument when tokens == 0.
double perplexity_from_nll(double total_nll, std::size_t tokens);

/// exp of the mean negative log-probability. Throws on an empty list.
double perplexity_from_log_probs(const std::vector<double>& log_probs);

}  // namespace kgdial::eval
