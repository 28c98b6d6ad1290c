// SPDX-License-Identifier: Apache-2.0
//
// Grounded response model: context encoder, knowledge encoder, decoder state,
// the three component heads (language model, context processor, knowledge
// processor) and the decoding manager that mixes them.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgdial/autodiff/registry.hpp"
#include "kgdial/autodiff/tape.hpp"
#include "kgdial/common/rng.hpp"
#include "kgdial/data/vocabulary.hpp"
#include "kgdial/layers/layers.hpp"
#include "kgdial/model/config.hpp"

namespace kgdial::model {

using ad::Tape;
using ad::Tensor;
using data::TokenId;

/// Component index inside the manager weights pi = (lm, context, knowledge).
enum class Source : std::size_t { lm = 0, context = 1, knowledge = 2 };
inline constexpr std::size_t kSourceCount = 3;
const char* source_name(Source s);

/// true = component may be selected. Ablation clears an entry.
using SourceMask = std::array<bool, kSourceCount>;
inline constexpr SourceMask kAllSources = {true, true, true};

struct ModelParams {
  Tensor embedding;                  // theta_e, |V| x E, shared decoder input
  nn::StackedGruParams ctx_gru;      // theta_e
  Tensor kn_embedding;               // theta_k
  nn::BiGruParams kn_gru;            // theta_k
  nn::StackedGruParams dec_gru;      // theta_d
  nn::FeedForwardParams lm_mlp;      // theta_l: H -> mlp -> E
  Tensor lm_out;                     // theta_ol: E x |V|
  nn::AttentionParams ctx_attn;      // theta_s
  nn::FeedForwardParams ctx_vocab;   // theta_v: 2H -> mlp -> E
  nn::FeedForwardParams ctx_gate;    // theta_g: H + H + E -> 1
  Tensor out_embedding;              // theta_o: E x |V|
  nn::AttentionParams kn_attn;       // theta_s'
  nn::FeedForwardParams kn_vocab;    // theta_v': H + K -> mlp -> E (K = knowledge_dim)
  nn::FeedForwardParams kn_gate;     // theta_g': K + H + E -> 1
  nn::FeedForwardParams manager;     // theta_pi: H -> 3
};

struct EncodedContext {
  std::vector<Tensor> hidden;  // one 1 x H row per context token
  Tensor memory;               // L x H
  std::vector<Tensor> finals;  // final state per encoder layer
  std::vector<TokenId> ids;    // extended ids of the flattened context
};

struct EncodedKnowledge {
  std::vector<std::vector<Tensor>> hidden;  // [sentence][word], 1 x K
  std::vector<Tensor> pooled;               // average of each sentence
  Tensor word_memory;                       // N x K, all words in order
  Tensor pooled_memory;                     // m x K
  std::vector<std::vector<TokenId>> ids;    // extended ids per sentence
};

/// Attention projections and index tables reused by every decoder step.
struct DecoderMemory {
  const EncodedContext* context = nullptr;
  const EncodedKnowledge* knowledge = nullptr;
  Tensor ctx_projected;                  // L x attention
  Tensor kn_word_projected;              // N x attention
  Tensor kn_pooled_projected;            // m x attention
  Tensor membership;                     // m x N, 1 where word j is in sentence i
  Tensor membership_t;                   // N x m
  std::vector<std::size_t> segment_of;   // word -> sentence
  std::vector<TokenId> kn_flat_ids;      // N extended ids
  std::size_t width = 0;                 // extended vocabulary size
};

struct ContextHeadOutput {
  Tensor dist;   // 1 x width
  Tensor alpha;  // 1 x L
  Tensor p_gen;  // 1 x 1
};

struct KnowledgeHeadOutput {
  Tensor dist;                 // 1 x width
  Tensor beta_s;               // 1 x m
  Tensor beta_w;               // 1 x N, each sentence segment sums to 1
  Tensor copy_weights;         // 1 x N, beta_s[i] * beta_w[i,j]
  Tensor p_gen;                // 1 x 1
};

/// Dropout masks for the knowledge scorer input and vocabulary-head input.
struct KnowledgeDropout {
  Tensor scorer_mask;  // 1 x H
  Tensor vocab_mask;   // 1 x (H + K)
  double rate = 0.0;
};

class Model {
 public:
  Model(const ModelConfig& config, data::Vocabulary vocab, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const data::Vocabulary& vocab() const { return vocab_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  /// Width of a knowledge vector: both BiGRU directions concatenated.
  std::size_t knowledge_dim() const { return config_.hidden_size; }
  ad::ParameterRegistry& registry() { return registry_; }
  const ad::ParameterRegistry& registry() const { return registry_; }
  const ModelParams& params() const { return params_; }

  /// Completed training stages by name, with the step count each ran for.
  std::map<std::string, std::size_t>& provenance() { return provenance_; }
  const std::map<std::string, std::size_t>& provenance() const { return provenance_; }

  /// Decoder input embedding (theta_e table) of a base id.
  Tensor embed(Tape& tape, TokenId id) const;

  /// Stacked GRU over the flattened context. `base_ids` index the
  /// embedding table; `ext_ids` are kept for copying.
  EncodedContext encode_context(Tape& tape, std::span<const TokenId> base_ids,
                                std::span<const TokenId> ext_ids) const;
  /// Per-sentence BiGRU plus average pooling; no cross-sentence recurrence.
  EncodedKnowledge encode_knowledge(
      Tape& tape, const std::vector<std::vector<TokenId>>& base_ids,
      const std::vector<std::vector<TokenId>>& ext_ids) const;

  /// Either pointer may be null when the matching head is unused.
  DecoderMemory prepare(Tape& tape, const EncodedContext* context,
                        const EncodedKnowledge* knowledge,
                        std::size_t width) const;

  std::vector<Tensor> zero_state() const;
  std::vector<Tensor> decoder_state_update(Tape& tape,
                                           const Tensor& prev_embedding,
                                           std::span<const Tensor> s_prev) const;

  /// Softmax over the base vocabulary, zero-padded to `width`.
  Tensor lm_distribution(Tape& tape, const Tensor& s, std::size_t width) const;
  ContextHeadOutput context_distribution(Tape& tape, const Tensor& s,
                                         const DecoderMemory& memory,
                                         const Tensor& prev_embedding) const;
  KnowledgeHeadOutput knowledge_distribution(
      Tape& tape, const Tensor& s, const DecoderMemory& memory,
      const Tensor& prev_embedding,
      const KnowledgeDropout* dropout = nullptr) const;
  /// Manager logits f_pi(s_{t-1}); 1 x 3.
  Tensor manager_logits(Tape& tape, const Tensor& s_prev) const;

 private:
  ModelConfig config_;
  data::Vocabulary vocab_;
  ad::ParameterRegistry registry_;
  ModelParams params_;
  std::map<std::string, std::size_t> provenance_;
};

// --- head building blocks (free functions for direct testing) --------------

/// Zero-pads a 1 x n distribution to 1 x width.
Tensor pad_distribution(Tape& tape, const Tensor& p, std::size_t width);

/// Position-weighted copy distribution: out[ids[i]] += weights[i].
Tensor copy_distribution(Tape& tape, const Tensor& weights,
                         std::span<const TokenId> ids, std::size_t width);

/// p_gen * p_vocab + (1 - p_gen) * copy.
Tensor gated_mixture(Tape& tape, const Tensor& p_gen, const Tensor& p_vocab,
                     const Tensor& copy);

/// Softmax inside each contiguous segment of a 1 x N row. `membership` is
/// the m x N segment indicator, `membership_t` its transpose.
Tensor segment_softmax(Tape& tape, const Tensor& x,
                       std::span<const std::size_t> segment_of,
                       const Tensor& membership, const Tensor& membership_t);

/// Copy weight of word (i, j) = beta_s[i] * beta_w[i, j], flattened 1 x N.
Tensor hierarchical_copy_weights(Tape& tape, const Tensor& beta_s,
                                 const Tensor& beta_w, const Tensor& membership);

enum class ManagerMode {
  gumbel,  // softmax((logits + g) / tau), g ~ Gumbel(0,1)
  soft,    // softmax(logits)
  argmax,  // exact one-hot at argmax(logits)
  sample,  // one-hot at a draw from softmax(logits)
};

/// Manager weights pi_t (1 x 3). Masked components get -inf logits, so they
/// receive exactly zero weight. `rng` is required for gumbel and sample.
/// Throws std::invalid_argument for tau <= 0 or an all-false mask.
Tensor manager_weights(Tape& tape, const Tensor& logits, ManagerMode mode,
                       double tau, const SourceMask& mask, Rng* rng);

/// [P_lm; P_ctx; P_kn] weighted by pi (1 x 3).
Tensor mixture_distribution(Tape& tape, const Tensor& pi, const Tensor& p_lm,
                            const Tensor& p_ctx, const Tensor& p_kn);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace kgdial::model
