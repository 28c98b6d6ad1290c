// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic corpora whose grounded responses are built from the
// three token sources the model disentangles: function words (language
// model), words echoed from the context (context processor) and contiguous
// spans copied from the paired document (knowledge processor).

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kgdial/data/types.hpp"

namespace kgdial::data {

enum class TokenSource { function, context, knowledge };

struct SynthOptions {
  std::uint64_t seed = 7;
  std::size_t vocab_size = 200;  // distinct word types, >= 20
  std::size_t n_grounded = 128;
  std::size_t n_ungrounded = 5000;
  std::size_t n_docs = 2000;
  std::size_t sentences_per_doc = 8;
  std::size_t min_sentence_len = 10;
  std::size_t max_sentence_len = 14;
  std::size_t max_context_utterances = 3;
  std::size_t min_utterance_len = 4;
  std::size_t max_utterance_len = 8;
  /// Target fraction of grounded-response tokens copied from document spans.
  double span_ratio = 0.6;
};

struct SynthCorpus {
  std::vector<GroundedExample> grounded;
  std::vector<UngroundedExample> ungrounded;
  std::vector<Document> documents;
  /// Source class of every grounded-response token, parallel to `grounded`.
  std::vector<std::vector<TokenSource>> grounded_sources;
  std::vector<std::string> function_words;
  std::vector<std::string> chat_words;
  std::vector<std::string> topic_words;
};

/// Deterministic in `options` (same seed -> identical corpora).
/// Throws std::invalid_argument when vocab_size < 20 or any size is 0.
SynthCorpus synth_copy_corpus(const SynthOptions& options);

}  // namespace kgdial::data
