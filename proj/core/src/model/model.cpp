// SPDX-License-Identifier: Apache-2.0
#include "kgdial/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kgdial/common/error.hpp"

namespace kgdial::model {

using ad::Group;
using nn::Activation;
using nn::Terminal;

const char* source_name(Source s) {
  switch (s) {
    case Source::lm: return "lm";
    case Source::context: return "context";
    case Source::knowledge: return "knowledge";
  }
  return "?";
}

Model::Model(const ModelConfig& config, data::Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.size() > config_.vocab_cap + data::kSpecialCount) {
    throw std::invalid_argument("vocabulary of " + std::to_string(vocab_.size()) +
                                " exceeds vocab_cap + specials");
  }
  Rng rng(seed);
  auto& reg = registry_;
  auto& p = params_;
  const std::size_t V = vocab_.size(), E = config_.embed_dim, H = config_.hidden_size,
                    L = config_.layers, A = config_.attention_size, M = config_.mlp_size;
  const std::size_t K = knowledge_dim();

  p.embedding = reg.add(Group::theta_e, "embedding", nn::init_matrix(V, E, rng));
  p.ctx_gru = nn::make_stacked_gru(reg, Group::theta_e, "ctx_gru", E, H, L, rng);
  p.kn_embedding = reg.add(Group::theta_k, "kn_embedding", nn::init_matrix(V, E, rng));
  p.kn_gru = nn::make_bigru(reg, Group::theta_k, "kn_gru", E, K / 2, rng);
  p.dec_gru = nn::make_stacked_gru(reg, Group::theta_d, "dec_gru", E, H, L, rng);
  p.lm_mlp = nn::make_feed_forward(reg, Group::theta_l, "lm_mlp", {H, M, E},
                                   {Activation::tanh, Activation::linear},
                                   Terminal::none, rng);
  p.lm_out = reg.add(Group::theta_ol, "lm_out", nn::init_matrix(E, V, rng));
  p.ctx_attn = nn::make_attention(reg, Group::theta_s, "ctx_attn", H, H, A, rng);
  p.ctx_vocab = nn::make_feed_forward(reg, Group::theta_v, "ctx_vocab", {2 * H, M, E},
                                      {Activation::tanh, Activation::linear},
                                      Terminal::none, rng);
  p.ctx_gate = nn::make_feed_forward(reg, Group::theta_g, "ctx_gate", {H + H + E, 1},
                                     {Activation::linear}, Terminal::sigmoid, rng);
  p.out_embedding = reg.add(Group::theta_o, "out_embedding", nn::init_matrix(E, V, rng));
  p.kn_attn = nn::make_attention(reg, Group::theta_s_prime, "kn_attn", K, H, A, rng);
  p.kn_vocab = nn::make_feed_forward(reg, Group::theta_v_prime, "kn_vocab", {H + K, M, E},
                                     {Activation::tanh, Activation::linear},
                                     Terminal::none, rng);
  p.kn_gate = nn::make_feed_forward(reg, Group::theta_g_prime, "kn_gate", {K + H + E, 1},
                                    {Activation::linear}, Terminal::sigmoid, rng);
  p.manager = nn::make_feed_forward(reg, Group::theta_pi, "manager", {H, kSourceCount},
                                    {Activation::linear}, Terminal::none, rng);
}

Tensor Model::embed(Tape& tape, TokenId id) const {
  if (id >= vocab_.size()) {
    throw std::out_of_range("embed: id " + std::to_string(id) + " outside base vocabulary");
  }
  const std::size_t idx[] = {id};
  return tape.gather_rows(params_.embedding, idx);
}

EncodedContext Model::encode_context(Tape& tape, std::span<const TokenId> base_ids,
                                     std::span<const TokenId> ext_ids) const {
  if (base_ids.empty()) throw std::invalid_argument("encode_context: empty context");
  if (base_ids.size() != ext_ids.size()) {
    throw ShapeError("encode_context: base and extended id counts differ");
  }
  std::vector<Tensor> seq;
  seq.reserve(base_ids.size());
  for (TokenId id : base_ids) seq.push_back(embed(tape, id));
  auto out = nn::run_stacked_gru(tape, seq, zero_state(), params_.ctx_gru);
  EncodedContext enc;
  enc.memory = tape.concat(out.top, 0);
  enc.hidden = std::move(out.top);
  enc.finals = std::move(out.finals);
  enc.ids.assign(ext_ids.begin(), ext_ids.end());
  return enc;
}

EncodedKnowledge Model::encode_knowledge(
    Tape& tape, const std::vector<std::vector<TokenId>>& base_ids,
    const std::vector<std::vector<TokenId>>& ext_ids) const {
  if (base_ids.empty()) throw std::invalid_argument("encode_knowledge: empty document");
  if (base_ids.size() != ext_ids.size()) {
    throw ShapeError("encode_knowledge: base and extended sentence counts differ");
  }
  EncodedKnowledge enc;
  std::vector<Tensor> all_words;
  for (std::size_t i = 0; i < base_ids.size(); ++i) {
    const auto& sent = base_ids[i];
    if (sent.empty()) throw std::invalid_argument("encode_knowledge: empty sentence");
    if (sent.size() != ext_ids[i].size()) {
      throw ShapeError("encode_knowledge: base and extended word counts differ");
    }
    std::vector<Tensor> seq;
    seq.reserve(sent.size());
    for (TokenId id : sent) {
      if (id >= vocab_.size()) throw std::out_of_range("encode_knowledge: id outside vocabulary");
      const std::size_t idx[] = {id};
      seq.push_back(tape.gather_rows(params_.kn_embedding, idx));
    }
    auto states = nn::run_bigru(tape, seq, params_.kn_gru);
    enc.pooled.push_back(nn::average_pool(tape, states));
    all_words.insert(all_words.end(), states.begin(), states.end());
    enc.hidden.push_back(std::move(states));
  }
  enc.word_memory = tape.concat(all_words, 0);
  enc.pooled_memory = tape.concat(enc.pooled, 0);
  enc.ids = ext_ids;
  return enc;
}

DecoderMemory Model::prepare(Tape& tape, const EncodedContext* context,
                             const EncodedKnowledge* knowledge,
                             std::size_t width) const {
  if (width < vocab_.size()) throw ShapeError("prepare: width below vocabulary size");
  DecoderMemory mem;
  mem.context = context;
  mem.knowledge = knowledge;
  mem.width = width;
  if (context) {
    for (TokenId id : context->ids) {
      if (id >= width) throw ShapeError("prepare: context id outside extended vocabulary");
    }
    mem.ctx_projected = nn::project_memory(tape, context->memory, params_.ctx_attn);
  }
  if (knowledge) {
    const std::size_t m = knowledge->ids.size();
    for (std::size_t i = 0; i < m; ++i) {
      for (TokenId id : knowledge->ids[i]) {
        if (id >= width) throw ShapeError("prepare: knowledge id outside extended vocabulary");
        mem.kn_flat_ids.push_back(id);
        mem.segment_of.push_back(i);
      }
    }
    const std::size_t n = mem.kn_flat_ids.size();
    std::vector<double> member(m * n, 0.0), member_t(n * m, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      member[mem.segment_of[j] * n + j] = 1.0;
      member_t[j * m + mem.segment_of[j]] = 1.0;
    }
    mem.membership = Tensor::from({m, n}, std::move(member));
    mem.membership_t = Tensor::from({n, m}, std::move(member_t));
    mem.kn_word_projected = nn::project_memory(tape, knowledge->word_memory, params_.kn_attn);
    mem.kn_pooled_projected =
        nn::project_memory(tape, knowledge->pooled_memory, params_.kn_attn);
  }
  return mem;
}

std::vector<Tensor> Model::zero_state() const {
  return std::vector<Tensor>(config_.layers, Tensor::zeros({1, config_.hidden_size}));
}

std::vector<Tensor> Model::decoder_state_update(Tape& tape, const Tensor& prev_embedding,
                                                std::span<const Tensor> s_prev) const {
  if (prev_embedding.rows() != 1 || prev_embedding.cols() != config_.embed_dim) {
    throw ShapeError("decoder_state_update: embedding " + prev_embedding.shape().str());
  }
  return nn::stacked_gru_step(tape, prev_embedding, s_prev, params_.dec_gru);
}

Tensor Model::lm_distribution(Tape& tape, const Tensor& s, std::size_t width) const {
  Tensor hidden = nn::feed_forward(tape, s, params_.lm_mlp);
  Tensor p = tape.softmax(tape.matmul(hidden, params_.lm_out));
  return pad_distribution(tape, p, width);
}

ContextHeadOutput Model::context_distribution(Tape& tape, const Tensor& s,
                                              const DecoderMemory& mem,
                                              const Tensor& prev_embedding) const {
  if (!mem.context) throw std::invalid_argument("context_distribution: no encoded context");
  ContextHeadOutput out;
  out.alpha = tape.softmax(nn::attention_scores(tape, s, mem.ctx_projected, params_.ctx_attn));
  Tensor c = tape.matmul(out.alpha, mem.context->memory);

  const Tensor vocab_in[] = {s, c};
  Tensor hidden = nn::feed_forward(tape, tape.concat(vocab_in, 1), params_.ctx_vocab);
  Tensor p_vocab = pad_distribution(
      tape, tape.softmax(tape.matmul(hidden, params_.out_embedding)), mem.width);

  const Tensor gate_in[] = {c, s, prev_embedding};
  out.p_gen = nn::feed_forward(tape, tape.concat(gate_in, 1), params_.ctx_gate);
  Tensor copy = copy_distribution(tape, out.alpha, mem.context->ids, mem.width);
  out.dist = gated_mixture(tape, out.p_gen, p_vocab, copy);
  return out;
}

KnowledgeHeadOutput Model::knowledge_distribution(Tape& tape, const Tensor& s,
                                                  const DecoderMemory& mem,
                                                  const Tensor& prev_embedding,
                                                  const KnowledgeDropout* dropout) const {
  if (!mem.knowledge) throw std::invalid_argument("knowledge_distribution: no encoded knowledge");
  const bool drop = dropout && dropout->rate > 0.0;
  KnowledgeHeadOutput out;

  Tensor s_att = drop ? tape.dropout(s, dropout->scorer_mask, dropout->rate) : s;
  out.beta_s = tape.softmax(
      nn::attention_scores(tape, s_att, mem.kn_pooled_projected, params_.kn_attn));
  Tensor word_scores = nn::attention_scores(tape, s_att, mem.kn_word_projected, params_.kn_attn);
  out.beta_w = segment_softmax(tape, word_scores, mem.segment_of, mem.membership,
                               mem.membership_t);
  Tensor c = tape.matmul(out.beta_s, mem.knowledge->pooled_memory);

  const Tensor vocab_in[] = {s, c};
  std::optional<nn::InputDropout> vocab_drop;
  if (drop) vocab_drop = nn::InputDropout{dropout->vocab_mask, dropout->rate};
  Tensor hidden =
      nn::feed_forward(tape, tape.concat(vocab_in, 1), params_.kn_vocab, vocab_drop);
  Tensor p_vocab = pad_distribution(
      tape, tape.softmax(tape.matmul(hidden, params_.out_embedding)), mem.width);

  const Tensor gate_in[] = {c, s, prev_embedding};
  out.p_gen = nn::feed_forward(tape, tape.concat(gate_in, 1), params_.kn_gate);
  out.copy_weights = hierarchical_copy_weights(tape, out.beta_s, out.beta_w, mem.membership);
  Tensor copy = copy_distribution(tape, out.copy_weights, mem.kn_flat_ids, mem.width);
  out.dist = gated_mixture(tape, out.p_gen, p_vocab, copy);
  return out;
}

Tensor Model::manager_logits(Tape& tape, const Tensor& s_prev) const {
  return nn::feed_forward(tape, s_prev, params_.manager);
}

// ---------------------------------------------------------------------------

Tensor pad_distribution(Tape& tape, const Tensor& p, std::size_t width) {
  if (p.rows() != 1 || p.cols() > width) {
    throw ShapeError("pad_distribution: " + p.shape().str() + " to width " +
                     std::to_string(width));
  }
  if (p.cols() == width) return p;
  const Tensor parts[] = {p, Tensor::zeros({1, width - p.cols()})};
  return tape.concat(parts, 1);
}

Tensor copy_distribution(Tape& tape, const Tensor& weights, std::span<const TokenId> ids,
                         std::size_t width) {
  if (weights.rows() != 1 || weights.cols() != ids.size()) {
    throw ShapeError("copy_distribution: " + weights.shape().str() + " weights for " +
                     std::to_string(ids.size()) + " ids");
  }
  return tape.scatter_add(weights, ids, width);
}

Tensor gated_mixture(Tape& tape, const Tensor& p_gen, const Tensor& p_vocab,
                     const Tensor& copy) {
  if (p_vocab.shape() != copy.shape()) {
    throw ShapeError("gated_mixture: " + p_vocab.shape().str() + " vs " + copy.shape().str());
  }
  return tape.add(tape.mul(p_gen, p_vocab), tape.mul(tape.one_minus(p_gen), copy));
}

Tensor segment_softmax(Tape& tape, const Tensor& x, std::span<const std::size_t> segment_of,
                       const Tensor& membership, const Tensor& membership_t) {
  const std::size_t n = x.cols();
  if (x.rows() != 1 || segment_of.size() != n || membership.cols() != n ||
      membership_t.rows() != n) {
    throw ShapeError("segment_softmax: inconsistent segment tables");
  }
  // Per-segment max shift; softmax is invariant to it, so it stays constant.
  std::vector<double> seg_max(membership.rows(), -std::numeric_limits<double>::infinity());
  const auto xv = x.values();
  for (std::size_t j = 0; j < n; ++j) {
    seg_max[segment_of[j]] = std::max(seg_max[segment_of[j]], xv[j]);
  }
  std::vector<double> shift(n);
  for (std::size_t j = 0; j < n; ++j) shift[j] = seg_max[segment_of[j]];
  Tensor y = tape.sub(x, Tensor::from({1, n}, std::move(shift)));
  Tensor log_sums = tape.log(tape.matmul(tape.exp(y), membership_t));  // 1 x m
  return tape.exp(tape.sub(y, tape.matmul(log_sums, membership)));
}

Tensor hierarchical_copy_weights(Tape& tape, const Tensor& beta_s, const Tensor& beta_w,
                                 const Tensor& membership) {
  return tape.mul(beta_w, tape.matmul(beta_s, membership));
}

Tensor manager_weights(Tape& tape, const Tensor& logits, ManagerMode mode, double tau,
                       const SourceMask& mask, Rng* rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("manager_weights: tau must be > 0");
  if (logits.rows() != 1 || logits.cols() != kSourceCount) {
    throw ShapeError("manager_weights: logits " + logits.shape().str());
  }
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("manager_weights: every component is masked");
  }
  const double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> bias(kSourceCount, 0.0);
  for (std::size_t k = 0; k < kSourceCount; ++k) {
    if (!mask[k]) bias[k] = ninf;
  }
  const auto lv = logits.values();
  std::vector<double> masked(kSourceCount);
  for (std::size_t k = 0; k < kSourceCount; ++k) masked[k] = lv[k] + bias[k];

  auto one_hot = [](std::size_t k) {
    std::vector<double> v(kSourceCount, 0.0);
    v[k] = 1.0;
    return Tensor::row(std::move(v));
  };

  switch (mode) {
    case ManagerMode::soft:
      return tape.softmax(tape.add(logits, Tensor::row(bias)));
    case ManagerMode::gumbel: {
      if (!rng) throw std::invalid_argument("manager_weights: gumbel mode needs an rng");
      std::vector<double> noise(kSourceCount);
      for (std::size_t k = 0; k < kSourceCount; ++k) noise[k] = rng->gumbel() + bias[k];
      return tape.softmax(
          tape.scale(tape.add(logits, Tensor::row(std::move(noise))), 1.0 / tau));
    }
    case ManagerMode::argmax:
      return one_hot(argmax(masked));
    case ManagerMode::sample: {
      if (!rng) throw std::invalid_argument("manager_weights: sample mode needs an rng");
      const double mx = masked[argmax(masked)];
      std::vector<double> p(kSourceCount);
      double z = 0.0;
      for (std::size_t k = 0; k < kSourceCount; ++k) z += p[k] = std::exp(masked[k] - mx);
      double u = rng->uniform() * z;
      std::size_t pick = argmax(masked);
      for (std::size_t k = 0; k < kSourceCount; ++k) {
        if (p[k] == 0.0) continue;
        if (u < p[k]) {
          pick = k;
          break;
        }
        u -= p[k];
      }
      return one_hot(pick);
    }
  }
  throw std::invalid_argument("manager_weights: unknown mode");
}

Tensor mixture_distribution(Tape& tape, const Tensor& pi, const Tensor& p_lm,
                            const Tensor& p_ctx, const Tensor& p_kn) {
  if (pi.rows() != 1 || pi.cols() != kSourceCount) {
    throw ShapeError("mixture_distribution: pi " + pi.shape().str());
  }
  if (p_lm.shape() != p_ctx.shape() || p_lm.shape() != p_kn.shape() || p_lm.rows() != 1) {
    throw ShapeError("mixture_distribution: component widths differ");
  }
  const Tensor rows[] = {p_lm, p_ctx, p_kn};
  return tape.matmul(pi, tape.concat(rows, 0));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace kgdial::model
