// SPDX-License-Identifier: Apache-2.0
#include "kgdial/model/decoder.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgdial::model {

namespace {

// dist (1 x W) -> dist[index] as 1 x 1.
Tensor pick(Tape& tape, const Tensor& dist, std::size_t index) {
  Tensor col = Tensor::zeros({dist.cols(), 1});
  col.mutable_values()[index] = 1.0;
  return tape.matmul(dist, col);
}

bool is_modal(const std::string& token, const std::vector<std::string>& modal_words) {
  return std::find(modal_words.begin(), modal_words.end(), token) != modal_words.end();
}

}  // namespace

Tensor weak_supervision_loss(Tape& tape, const Tensor& pi, const std::string& gold,
                             const std::vector<std::string>& modal_words) {
  if (!is_modal(gold, modal_words)) return Tensor::scalar(0.0);
  const auto lm = static_cast<std::size_t>(Source::lm);
  return tape.scale(tape.log(pick(tape, pi, lm)), -1.0);
}

NllResult sequence_nll(Tape& tape, const Model& model, const data::EncodedExample& ex,
                       const NllOptions& opt, Rng* rng) {
  if (ex.response.empty()) throw std::invalid_argument("sequence_nll: empty response");
  const bool need_ctx = opt.mode != LossMode::lm_only;
  const bool need_kn = opt.mode == LossMode::grounded;
  if (need_ctx && ex.context.empty()) {
    throw std::invalid_argument("sequence_nll: mode needs a context");
  }
  if (need_kn && ex.knowledge.empty()) {
    throw std::invalid_argument("sequence_nll: mode needs a document");
  }
  const bool drop = need_kn && opt.dropout > 0.0;
  const bool gumbel = need_kn && opt.manager == ManagerMode::gumbel;
  if ((drop || gumbel || (need_kn && opt.manager == ManagerMode::sample)) && !rng) {
    throw std::invalid_argument("sequence_nll: noise requested without an rng");
  }

  const std::size_t V = model.vocab_size();
  const std::size_t width = opt.mode == LossMode::lm_only ? V : std::max(V, ex.ext.size());

  EncodedContext ctx;
  EncodedKnowledge kn;
  if (need_ctx) ctx = model.encode_context(tape, ex.context, ex.context_ext);
  if (need_kn) kn = model.encode_knowledge(tape, ex.knowledge, ex.knowledge_ext);
  const DecoderMemory mem =
      model.prepare(tape, need_ctx ? &ctx : nullptr, need_kn ? &kn : nullptr, width);

  std::vector<Tensor> state = need_ctx ? ctx.finals : model.zero_state();
  const std::size_t T = ex.response.size() + 1;
  const std::size_t H = model.config().hidden_size;

  NllResult out;
  out.tokens = T;
  std::vector<Tensor> terms;
  terms.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    const TokenId input = t == 0 ? data::kBos : ex.response[t - 1];
    TokenId target = t + 1 == T ? data::kEos : ex.response_ext[t];
    if (target >= width) target = data::kUnk;

    DecoderStepOutput step;
    Tensor e_prev = model.embed(tape, input);
    const Tensor s_prev = state.back();
    step.state = model.decoder_state_update(tape, e_prev, state);
    const Tensor& s = step.state.back();

    switch (opt.mode) {
      case LossMode::lm_only:
        step.p_lm = model.lm_distribution(tape, s, width);
        step.mixture = step.p_lm;
        break;
      case LossMode::context_only: {
        auto head = model.context_distribution(tape, s, mem, e_prev);
        step.p_ctx = head.dist;
        step.alpha = head.alpha;
        step.p_gen = head.p_gen;
        step.mixture = step.p_ctx;
        break;
      }
      case LossMode::grounded: {
        step.manager_logits = model.manager_logits(tape, s_prev);
        step.pi = manager_weights(tape, step.manager_logits, opt.manager, opt.tau,
                                  opt.enabled, rng);
        KnowledgeDropout kd;
        if (drop) {
          kd.rate = opt.dropout;
          kd.scorer_mask = nn::sample_dropout_mask({1, H}, opt.dropout, *rng);
          kd.vocab_mask = nn::sample_dropout_mask({1, H + model.knowledge_dim()}, opt.dropout, *rng);
        }
        step.p_lm = model.lm_distribution(tape, s, width);
        auto ch = model.context_distribution(tape, s, mem, e_prev);
        auto kh = model.knowledge_distribution(tape, s, mem, e_prev, drop ? &kd : nullptr);
        step.p_ctx = ch.dist;
        step.alpha = ch.alpha;
        step.p_gen = ch.p_gen;
        step.p_kn = kh.dist;
        step.beta_s = kh.beta_s;
        step.beta_w = kh.beta_w;
        step.kn_copy_weights = kh.copy_weights;
        step.p_gen_kn = kh.p_gen;
        step.mixture = mixture_distribution(tape, step.pi, step.p_lm, step.p_ctx, step.p_kn);
        break;
      }
    }

    Tensor log_p = tape.log(pick(tape, step.mixture, target));
    out.gold_log_probs.push_back(log_p.item());
    out.nll_sum -= log_p.item();
    Tensor term = tape.scale(log_p, -1.0);
    const auto lm = static_cast<std::size_t>(Source::lm);
    if (opt.mode == LossMode::grounded && opt.weak_supervision > 0.0 && opt.enabled[lm] &&
        t < ex.response_tokens.size() && is_modal(ex.response_tokens[t], opt.modal_words)) {
      Tensor ws = weak_supervision_loss(tape, step.pi, ex.response_tokens[t], opt.modal_words);
      term = tape.add(term, tape.scale(ws, opt.weak_supervision));
    }
    terms.push_back(term);

    state = step.state;
    if (opt.keep_steps) out.steps.push_back(std::move(step));
  }
  out.loss = tape.scale(tape.sum(tape.concat(terms, 1)), 1.0 / static_cast<double>(T));
  return out;
}

}  // namespace kgdial::model
