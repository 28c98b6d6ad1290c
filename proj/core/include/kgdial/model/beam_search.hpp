// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kgdial/data/batch.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::model {

template <class State>
struct Hypothesis {
  std::vector<TokenId> tokens;  // includes the final EOS when one was emitted
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / tokens.size()
  State state;
};

/// Length-normalized beam search.
///
/// `expand(state)` returns next-token log-probabilities (-inf = disallowed);
/// `advance(state, token)` returns the successor state. At each step the
/// beam_size best extensions by total log-prob are kept (ties: earlier
/// hypothesis, then lower token id); extensions ending in `eos`, or reaching
/// max_len, are finished. Results are sorted by score, best first.
template <class State, class Expand, class Advance>
std::vector<Hypothesis<State>> beam_search(State root, std::size_t beam_size,
                                           std::size_t max_len, TokenId eos,
                                           Expand&& expand, Advance&& advance) {
  if (beam_size < 1) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  struct Candidate {
    double total;
    std::size_t hyp;
    TokenId token;
  };
  std::vector<Hypothesis<State>> live(1), done;
  live[0].state = std::move(root);
  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const std::vector<double> lp = expand(live[h].state);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (std::isinf(lp[v]) && lp[v] < 0) continue;
        cands.push_back({live[h].log_prob + lp[v], h, v});
      }
    }
    const std::size_t keep = std::min(beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep),
                      cands.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.total != b.total) return a.total > b.total;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis<State>> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = cands[c];
      const auto& parent = live[cand.hyp];
      Hypothesis<State> h;
      h.tokens = parent.tokens;
      h.tokens.push_back(cand.token);
      h.log_prob = cand.total;
      h.score = h.log_prob / static_cast<double>(h.tokens.size());
      h.state = advance(parent.state, cand.token);
      if (cand.token == eos || step + 1 == max_len) {
        done.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
  }
  std::stable_sort(done.begin(), done.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  });
  return done;
}

/// Argmax decoding (lowest token id on ties) until `eos` or max_len.
template <class State, class Expand, class Advance>
Hypothesis<State> greedy_search(State root, std::size_t max_len, TokenId eos,
                                Expand&& expand, Advance&& advance) {
  Hypothesis<State> h;
  h.state = std::move(root);
  for (std::size_t step = 0; step < max_len; ++step) {
    const std::vector<double> lp = expand(h.state);
    const std::size_t best = argmax(lp);
    if (std::isinf(lp[best])) break;
    h.tokens.push_back(best);
    h.log_prob += lp[best];
    h.state = advance(h.state, best);
    if (best == eos) break;
  }
  h.score = h.tokens.empty() ? 0.0 : h.log_prob / static_cast<double>(h.tokens.size());
  return h;
}

struct GenerateOptions {
  std::size_t beam_size = 5;
  std::size_t max_len = 32;
  ManagerMode manager = ManagerMode::argmax;  // argmax or sample
  SourceMask enabled = kAllSources;
  std::uint64_t seed = 0;  // draws for ManagerMode::sample
};

struct GeneratedResponse {
  data::Tokens tokens;          // surface strings, EOS stripped
  std::vector<TokenId> ids;     // extended ids, EOS stripped
  std::vector<Source> sources;  // component that produced each token
  double log_prob = 0.0;
  double score = 0.0;
};

/// Beam-search response for one encoded example (context + document).
/// PAD, BOS and UNK are never emitted; copied out-of-vocabulary words surface
/// as their source strings. Throws std::invalid_argument for beam_size < 1.
GeneratedResponse generate(const Model& model, const data::EncodedExample& ex,
                           const GenerateOptions& options);

}  // namespace kgdial::model
