// SPDX-License-Identifier: Apache-2.0
#include "kgdial/model/beam_search.hpp"

#include <limits>
#include <memory>

namespace kgdial::model {

namespace {

struct StepCache {
  bool ready = false;
  std::vector<double> log_probs;
  std::vector<Tensor> next_state;
  Source source = Source::lm;
};

struct DecodeState {
  std::vector<Tensor> s;
  TokenId prev = data::kBos;
  std::vector<Source> sources;
  std::shared_ptr<StepCache> cache = std::make_shared<StepCache>();
};

}  // namespace

GeneratedResponse generate(const Model& model, const data::EncodedExample& ex,
                           const GenerateOptions& opt) {
  if (opt.beam_size < 1) throw std::invalid_argument("generate: beam_size must be >= 1");
  if (opt.manager != ManagerMode::argmax && opt.manager != ManagerMode::sample) {
    throw std::invalid_argument("generate: manager must be argmax or sample");
  }
  Tape tape(Tape::Mode::inference);
  const std::size_t V = model.vocab_size();
  const std::size_t width = std::max(V, ex.ext.size());
  const EncodedContext ctx = model.encode_context(tape, ex.context, ex.context_ext);
  const EncodedKnowledge kn = model.encode_knowledge(tape, ex.knowledge, ex.knowledge_ext);
  const DecoderMemory mem = model.prepare(tape, &ctx, &kn, width);
  Rng rng(opt.seed);

  auto expand = [&](const DecodeState& st) -> const std::vector<double>& {
    auto& cache = *st.cache;
    if (cache.ready) return cache.log_probs;
    const Tensor e_prev = model.embed(tape, st.prev < V ? st.prev : data::kUnk);
    const Tensor logits = model.manager_logits(tape, st.s.back());
    const Tensor pi = manager_weights(tape, logits, opt.manager, 1.0, opt.enabled, &rng);
    cache.source = static_cast<Source>(argmax(pi.values()));
    cache.next_state = model.decoder_state_update(tape, e_prev, st.s);
    const Tensor& s = cache.next_state.back();
    Tensor dist;
    switch (cache.source) {
      case Source::lm: dist = model.lm_distribution(tape, s, width); break;
      case Source::context: dist = model.context_distribution(tape, s, mem, e_prev).dist; break;
      case Source::knowledge:
        dist = model.knowledge_distribution(tape, s, mem, e_prev).dist;
        break;
    }
    cache.log_probs.resize(width);
    const auto p = dist.values();
    for (std::size_t v = 0; v < width; ++v) {
      cache.log_probs[v] =
          p[v] > 0.0 ? std::log(p[v]) : -std::numeric_limits<double>::infinity();
    }
    for (TokenId banned : {data::kPad, data::kBos, data::kUnk}) {
      cache.log_probs[banned] = -std::numeric_limits<double>::infinity();
    }
    cache.ready = true;
    return cache.log_probs;
  };
  auto advance = [&](const DecodeState& st, TokenId token) {
    DecodeState next;
    next.s = st.cache->next_state;
    next.prev = token;
    next.sources = st.sources;
    next.sources.push_back(st.cache->source);
    return next;
  };

  DecodeState root;
  root.s = ctx.finals;
  auto hyps = beam_search(std::move(root), opt.beam_size, opt.max_len, data::kEos,
                          expand, advance);
  GeneratedResponse out;
  if (hyps.empty()) return out;
  const auto& best = hyps.front();
  out.log_prob = best.log_prob;
  out.score = best.score;
  for (std::size_t i = 0; i < best.tokens.size(); ++i) {
    if (best.tokens[i] == data::kEos) break;
    out.ids.push_back(best.tokens[i]);
    out.tokens.push_back(ex.ext.base_size() == 0 ? model.vocab().token(best.tokens[i])
                                                 : ex.ext.token(best.tokens[i], model.vocab()));
    out.sources.push_back(best.state.sources[i]);
  }
  return out;
}

}  // namespace kgdial::model
