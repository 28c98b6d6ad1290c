// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kgdial/data/batch.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::model {

/// Which heads define the response distribution.
enum class LossMode {
  context_only,  // P_ctx alone, decoder seeded by the context encoder
  lm_only,       // P_lm alone, zero initial state, no context
  grounded,      // manager mixture of all three heads
};

struct DecoderStepOutput {
  std::vector<Tensor> state;  // s_t per layer
  Tensor p_lm, p_ctx, p_kn;   // undefined when the mode skips the head
  Tensor mixture;             // distribution that scores the target
  Tensor p_gen, p_gen_kn;
  Tensor alpha, beta_s, beta_w, kn_copy_weights;
  Tensor manager_logits, pi;
};

inline const std::vector<std::string> kDefaultModalWords = {"can",    "would", "could",
                                                           "will",   "should", "may"};

struct NllOptions {
  LossMode mode = LossMode::grounded;
  ManagerMode manager = ManagerMode::gumbel;
  double tau = 1.0;
  SourceMask enabled = kAllSources;
  /// Knowledge-head dropout rate; 0 disables it.
  double dropout = 0.0;
  /// Weight of -log pi[lm] on modal gold tokens; 0 disables it.
  double weak_supervision = 0.0;
  std::vector<std::string> modal_words = kDefaultModalWords;
  bool keep_steps = false;
};

struct NllResult {
  Tensor loss;                       // mean over targets (+ weak supervision)
  double nll_sum = 0.0;              // sum of -log P(gold), no weak supervision
  std::size_t tokens = 0;            // targets scored (response + EOS)
  std::vector<double> gold_log_probs;
  std::vector<DecoderStepOutput> steps;
};

/// Teacher-forced negative log-likelihood of the response followed by EOS.
/// `rng` supplies Gumbel noise, dropout masks and manager samples; it may be
/// null when none are needed. Throws std::invalid_argument on an empty
/// response, or on a missing context/document for a mode that reads it.
NllResult sequence_nll(Tape& tape, const Model& model, const data::EncodedExample& ex,
                       const NllOptions& options, Rng* rng = nullptr);

/// -log pi[lm] when the gold token is modal, else 0.
Tensor weak_supervision_loss(Tape& tape, const Tensor& pi, const std::string& gold,
                             const std::vector<std::string>& modal_words);

}  // namespace kgdial::model
