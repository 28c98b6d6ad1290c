// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "kgdial/common/error.hpp"
#include "kgdial/data/batch.hpp"
#include "kgdial/data/corpus.hpp"
#include "kgdial/data/text.hpp"
#include "kgdial/eval/embedding_table.hpp"
#include "kgdial/eval/evaluate.hpp"
#include "kgdial/eval/metrics.hpp"
#include "kgdial/model/decoder.hpp"
#include "test_util.hpp"

namespace kgdial::eval {
namespace {

using model::Tensor;
using test::words;

TEST(UnigramF1, HandCases) {
  EXPECT_NEAR(unigram_f1("the cat sat", "the cat ran"), 0.5, 1e-9);
  EXPECT_EQ(unigram_f1("cat sat", "cat sat"), 1.0);
  EXPECT_EQ(unigram_f1("cat sat", "dog ran"), 0.0);
  EXPECT_EQ(unigram_f1("the a an", "..."), 0.0);
  EXPECT_EQ(unigram_f1("", "cat"), 0.0);
  // Clipped counts: overlap 1, P = 1/3, R = 1/2.
  EXPECT_NEAR(unigram_f1("cat cat cat", "cat dog"), 0.4, 1e-12);
}

TEST(UnigramF1, NormalizesCasePunctuationAndArticles) {
  EXPECT_EQ(normalize_answer("The Cat, SAT an apple!"), (data::Tokens{"cat", "sat", "apple"}));
  EXPECT_EQ(unigram_f1("The CAT sat.", "a cat SAT"), 1.0);
  EXPECT_EQ(unigram_f1("Cat Sat On Mat", "cat sat on mat"), unigram_f1("cat sat on mat", "cat sat on mat"));
}

// Straight transcription of corpus BLEU: clipped n-gram matches summed over
// the corpus, geometric mean of precisions, brevity penalty on total lengths.
double bleu_oracle(const std::vector<data::Tokens>& hyp, const std::vector<data::Tokens>& ref,
                   std::size_t n) {
  double log_p = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    double match = 0, total = 0;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      std::map<data::Tokens, int> h, r;
      for (std::size_t j = 0; j + k <= hyp[i].size(); ++j) {
        ++h[data::Tokens(hyp[i].begin() + j, hyp[i].begin() + j + k)];
      }
      for (std::size_t j = 0; j + k <= ref[i].size(); ++j) {
        ++r[data::Tokens(ref[i].begin() + j, ref[i].begin() + j + k)];
      }
      for (const auto& [g, c] : h) {
        total += c;
        match += std::min(c, r.count(g) ? r[g] : 0);
      }
    }
    if (match == 0) return 0.0;
    log_p += std::log(match / total) / static_cast<double>(n);
  }
  double c = 0, rl = 0;
  for (std::size_t i = 0; i < hyp.size(); ++i) {
    c += hyp[i].size();
    rl += ref[i].size();
  }
  const double bp = c > rl ? 1.0 : std::exp(1.0 - rl / c);
  return bp * std::exp(log_p);
}

TEST(Bleu, HandCases) {
  EXPECT_NEAR(bleu({"a b c"}, {"a b d"}, 1), 2.0 / 3.0, 1e-9);
  for (std::size_t n = 1; n <= 4; ++n) {
    EXPECT_NEAR(bleu({"x y z w v", "p q r s"}, {"x y z w v", "p q r s"}, n), 1.0, 1e-12) << n;
  }
  EXPECT_NEAR(bleu({"x y"}, {"x y z w"}, 1), std::exp(1.0 - 2.0), 1e-12);
  EXPECT_EQ(bleu({"x y"}, {"p q"}, 1), 0.0);
  EXPECT_NEAR(bleu({"A B C"}, {"a b d"}, 1), 2.0 / 3.0, 1e-12);
}

TEST(Bleu, RejectsBadArguments) {
  EXPECT_THROW(bleu({"a"}, {"a"}, 0), std::invalid_argument);
  EXPECT_THROW(bleu({"a", "b"}, {"a"}, 1), std::invalid_argument);
}

TEST(Bleu, MatchesOracleAndIsPermutationInvariant) {
  Rng rng(5);
  const char* alphabet[] = {"p", "q", "r", "s"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<data::Tokens> h, r;
    std::vector<std::string> hs, rs;
    const std::size_t pairs = 1 + rng.index(4);
    for (std::size_t i = 0; i < pairs; ++i) {
      data::Tokens a, b;
      for (std::size_t j = 0, m = 1 + rng.index(7); j < m; ++j) a.push_back(alphabet[rng.index(4)]);
      for (std::size_t j = 0, m = 1 + rng.index(7); j < m; ++j) b.push_back(alphabet[rng.index(4)]);
      h.push_back(a);
      r.push_back(b);
      hs.push_back(data::join_tokens(a));
      rs.push_back(data::join_tokens(b));
    }
    for (std::size_t n = 1; n <= 4; ++n) {
      const double got = bleu(hs, rs, n);
      EXPECT_NEAR(got, bleu_oracle(h, r, n), 1e-12);
      EXPECT_GE(got, 0.0);
      EXPECT_LE(got, 1.0);
      auto hp = hs, rp = rs;
      std::reverse(hp.begin(), hp.end());
      std::reverse(rp.begin(), rp.end());
      EXPECT_NEAR(bleu(hp, rp, n), got, 1e-12);
    }
  }
}

EmbeddingTable toy_table() {
  EmbeddingTable t;
  t.set("a", {1, 0});
  t.set("b", {0, 1});
  t.set("c", {1, 1});
  t.set("d", {-2, 1});
  return t;
}

TEST(EmbeddingMetrics, IdentityAndOrthogonalCases) {
  auto t = toy_table();
  auto same = embedding_metrics(words("a d c"), words("a d c"), t);
  ASSERT_TRUE(same);
  EXPECT_NEAR(same->average, 1.0, 1e-12);
  EXPECT_NEAR(same->extrema, 1.0, 1e-12);
  EXPECT_NEAR(same->greedy, 1.0, 1e-12);
  auto orth = embedding_metrics(words("a"), words("b"), t);
  ASSERT_TRUE(orth);
  EXPECT_EQ(orth->average, 0.0);
  EXPECT_EQ(orth->extrema, 0.0);
  EXPECT_EQ(orth->greedy, 0.0);
}

TEST(EmbeddingMetrics, CraftedPairMatchesHandCosines) {
  auto t = toy_table();
  auto s = embedding_metrics(words("a b d"), words("c"), t);
  ASSERT_TRUE(s);
  // mean (-1/3, 2/3) vs (1, 1); extrema (-2, 1) vs (1, 1).
  const double r10 = std::sqrt(10.0), r2 = std::sqrt(2.0);
  EXPECT_NEAR(s->average, 1.0 / r10, 1e-12);
  EXPECT_NEAR(s->extrema, -1.0 / r10, 1e-12);
  const double h2r = (2.0 / r2 - 1.0 / r10) / 3.0;
  EXPECT_NEAR(s->greedy, 0.5 * (h2r + 1.0 / r2), 1e-12);
}

TEST(EmbeddingMetrics, SkipsUnknownTokensAndCountsUndefinedPairs) {
  auto t = toy_table();
  auto with = embedding_metrics(words("a zz b"), words("c qq"), t);
  auto without = embedding_metrics(words("a b"), words("c"), t);
  ASSERT_TRUE(with && without);
  EXPECT_EQ(with->average, without->average);
  EXPECT_EQ(with->greedy, without->greedy);
  EXPECT_FALSE(embedding_metrics(words("zz"), words("a"), t));
  EXPECT_FALSE(embedding_metrics(words("a"), {}, t));

  auto c = corpus_embedding_metrics({words("a"), words("zz"), words("a b")},
                                    {words("a"), words("a"), words("c")}, t);
  EXPECT_EQ(c.pairs, 2u);
  EXPECT_EQ(c.undefined, 1u);
  EXPECT_NEAR(c.mean.average, 0.5 * (1.0 + 1.0), 1e-12);
  EXPECT_THROW(corpus_embedding_metrics({words("a")}, {}, t), std::invalid_argument);
}

TEST(EmbeddingMetrics, AverageAndExtremaIgnoreTokenOrder) {
  auto t = toy_table();
  Rng rng(3);
  const char* tok[] = {"a", "b", "c", "d"};
  for (int trial = 0; trial < 100; ++trial) {
    data::Tokens h, r;
    for (std::size_t j = 0, m = 1 + rng.index(5); j < m; ++j) h.push_back(tok[rng.index(4)]);
    for (std::size_t j = 0, m = 1 + rng.index(5); j < m; ++j) r.push_back(tok[rng.index(4)]);
    auto s = embedding_metrics(h, r, t);
    std::reverse(h.begin(), h.end());
    auto p = embedding_metrics(h, r, t);
    ASSERT_TRUE(s && p);
    EXPECT_NEAR(s->average, p->average, 1e-12);
    EXPECT_NEAR(s->extrema, p->extrema, 1e-12);
    for (double x : {s->average, s->extrema, s->greedy}) {
      EXPECT_GE(x, -1.0 - 1e-12);
      EXPECT_LE(x, 1.0 + 1e-12);
    }
  }
}

TEST(EmbeddingTable, ParsesGloveTextAndRejectsBadRows) {
  std::istringstream ok("cat 0.5 -1\ndog 2 3e-1\n");
  auto t = EmbeddingTable::read(ok);
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.dim(), 2u);
  EXPECT_EQ(t.get("dog")[1], 0.3);
  EXPECT_TRUE(t.get("emu").empty());

  std::istringstream ragged("cat 1 2\ndog 1\n");
  try {
    EmbeddingTable::read(ragged, "g.txt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("g.txt:2:"), std::string::npos) << e.what();
  }
  std::istringstream bad("cat 1 x\n");
  EXPECT_THROW(EmbeddingTable::read(bad), FormatError);
  EXPECT_THROW(t.set("emu", {1, 2, 3}), std::invalid_argument);
}

TEST(EmbeddingTable, InitializesBothInputTables) {
  model::Model m(test::tiny_config(), test::letters_vocab(4), 1);
  const std::size_t E = m.config().embed_dim;
  EmbeddingTable t;
  t.set("w2", std::vector<double>(E, 0.25));
  t.set("absent", std::vector<double>(E, 9.0));
  EXPECT_EQ(initialize_embeddings(m, t), 1u);
  const std::size_t id = m.vocab().id("w2");
  for (std::size_t j = 0; j < E; ++j) {
    EXPECT_EQ(m.params().embedding.values()[id * E + j], 0.25);
    EXPECT_EQ(m.params().kn_embedding.values()[id * E + j], 0.25);
  }
  EmbeddingTable wrong;
  wrong.set("w2", {1.0});
  EXPECT_THROW(initialize_embeddings(m, wrong), std::invalid_argument);
}

void fill(Tensor t, double x) {
  for (auto& e : t.mutable_values()) e = x;
}

TEST(Perplexity, UniformLanguageModelScoresVocabularySize) {
  model::Model m(test::tiny_config(), test::letters_vocab(96), 3);
  ASSERT_EQ(m.vocab_size(), 100u);
  fill(m.params().lm_out, 0.0);
  PerplexityOptions opt;
  opt.enabled = {true, false, false};
  std::vector<data::GroundedExample> ds = {
      {{words("w1 w2")}, {words("w3 w4")}, words("w5 w6 w7")},
      {{words("w8")}, {words("w9")}, words("w10")}};
  auto r = perplexity(m, ds, opt);
  EXPECT_EQ(r.tokens, 6u);
  EXPECT_NEAR(r.ppl, 100.0, 1e-9);
  EXPECT_THROW(perplexity(m, {}, opt), std::invalid_argument);
}

TEST(Perplexity, PerfectModelScoresOne) {
  model::Model m(test::tiny_config(), test::letters_vocab(4), 3);
  for (const auto& np : m.registry().parameters()) fill(np.tensor, 0.0);
  const auto& p = m.params();
  const std::size_t w0 = m.vocab().id("w0");
  auto set = [](Tensor t, std::size_t r, std::size_t c, double x) {
    t.mutable_values()[r * t.cols() + c] = x;
  };
  set(p.embedding, data::kBos, 0, 1.0);
  set(p.embedding, w0, 1, 1.0);
  for (const auto& layer : p.dec_gru.layers) {
    fill(layer.b_z, 50.0);
    set(layer.w_h, 0, 0, 20.0);
    set(layer.w_h, 1, 1, 20.0);
  }
  for (std::size_t l = 0; l < 2; ++l) {
    set(p.lm_mlp.weights[l], 0, 0, 1.0);
    set(p.lm_mlp.weights[l], 1, 1, 1.0);
  }
  set(p.lm_out, 0, w0, 100.0);
  set(p.lm_out, 1, data::kEos, 100.0);
  PerplexityOptions opt;
  opt.enabled = {true, false, false};
  auto r = perplexity(m, {{{words("w1")}, {words("w2")}, words("w0")}}, opt);
  EXPECT_NEAR(r.ppl, 1.0, 1e-12);
}

// Accumulates gold log-probs step by step from the model's component
// distributions and a soft manager.
double step_oracle_nll(const model::Model& m, const data::GroundedExample& g, std::size_t& tokens) {
  auto ex = data::encode_grounded(g, m.vocab());
  model::Tape t;
  auto ctx = m.encode_context(t, ex.context, ex.context_ext);
  auto kn = m.encode_knowledge(t, ex.knowledge, ex.knowledge_ext);
  auto mem = m.prepare(t, &ctx, &kn, ex.ext.size());
  std::vector<Tensor> s = ctx.finals;
  std::vector<model::TokenId> inputs = {data::kBos}, targets;
  for (std::size_t i = 0; i < ex.response.size(); ++i) {
    inputs.push_back(ex.response[i]);
    targets.push_back(ex.response_ext[i]);
  }
  targets.push_back(data::kEos);
  double nll = 0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    Tensor e = m.embed(t, inputs[k]);
    Tensor pi = model::manager_weights(t, m.manager_logits(t, s.back()), model::ManagerMode::soft,
                                       1.0, model::kAllSources, nullptr);
    s = m.decoder_state_update(t, e, s);
    auto p = model::mixture_distribution(t, pi, m.lm_distribution(t, s.back(), mem.width),
                                         m.context_distribution(t, s.back(), mem, e).dist,
                                         m.knowledge_distribution(t, s.back(), mem, e).dist);
    nll -= std::log(p.values()[targets[k]]);
  }
  tokens += targets.size();
  return nll;
}

TEST(Perplexity, TwoExampleSetMatchesStepOracle) {
  model::Model m(test::tiny_config(), test::letters_vocab(12), 8);
  std::vector<data::GroundedExample> ds = {
      {{words("w4 w5 zeta"), words("w6")}, {words("w7 w8 omega"), words("w9 w4")}, words("w5 omega")},
      {{words("w1")}, {words("w2 w3")}, words("w3 w1 w2")}};
  std::size_t tokens = 0;
  double nll = 0;
  for (const auto& g : ds) nll += step_oracle_nll(m, g, tokens);
  auto r = perplexity(m, ds);
  EXPECT_EQ(r.tokens, tokens);
  EXPECT_NEAR(r.nll, nll, 1e-9);
  EXPECT_NEAR(r.ppl, std::exp(nll / tokens), 1e-9);
  EXPECT_GE(r.ppl, 1.0);
}

TEST(Perplexity, DecreasesWhenGoldProbabilitiesRise) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> lp(1 + rng.index(10));
    for (auto& x : lp) x = std::log(0.01 + 0.98 * rng.uniform());
    auto up = lp;
    const std::size_t i = rng.index(lp.size());
    up[i] = std::log(std::exp(up[i]) + 0.5 * (1.0 - std::exp(up[i])));
    EXPECT_LT(perplexity_from_log_probs(up), perplexity_from_log_probs(lp));
  }
  EXPECT_THROW(perplexity_from_log_probs({}), std::invalid_argument);
  EXPECT_THROW(perplexity_from_nll(1.0, 0), std::invalid_argument);
  EXPECT_NEAR(perplexity_from_nll(6.0 * std::log(7.0), 6), 7.0, 1e-12);
}

TEST(Evaluate, ReportAggregatesPerExampleMetrics) {
  model::Model m(test::tiny_config(), test::letters_vocab(12), 4);
  std::vector<data::GroundedExample> ds = {
      {{words("w4 w5")}, {words("w7 w8 omega")}, words("w5 omega")},
      {{words("w1")}, {words("w2 w3")}, words("w3 w1 w2")},
      {{words("w6 w9")}, {words("w10")}, words("w10")}};
  EvalOptions opt;
  opt.generate.max_len = 6;
  auto t = toy_table();
  opt.embeddings = &t;
  auto ev = evaluate_model(m, ds, opt);
  const auto& r = ev.report;
  ASSERT_EQ(ev.generations.size(), 3u);
  EXPECT_EQ(r.examples, 3u);
  EXPECT_EQ(r.ppl, perplexity(m, ds).ppl);
  double f1 = 0;
  std::size_t generated = 0;
  std::vector<std::string> hyps, refs;
  for (const auto& g : ev.generations) {
    const auto hyp = data::join_tokens(g.response.tokens);
    f1 += unigram_f1(hyp, data::join_tokens(g.example.response));
    generated += g.response.tokens.size();
    hyps.push_back(hyp);
    refs.push_back(data::join_tokens(g.example.response));
  }
  EXPECT_NEAR(r.f1, f1 / 3.0, 1e-15);
  EXPECT_EQ(r.bleu[0], bleu(hyps, refs, 1));
  std::size_t attributed = 0;
  for (auto c : r.source_counts) attributed += c;
  EXPECT_EQ(attributed, generated);
  EXPECT_TRUE(r.has_embedding);
  EXPECT_EQ(r.emb_pairs + r.emb_undefined, 3u);
  EXPECT_GE(r.ppl, 1.0);
  for (double x : r.bleu) {
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
  auto j = to_json(r);
  EXPECT_TRUE(j.contains("ppl"));
  EXPECT_TRUE(j.contains("f1"));
  EXPECT_THROW(evaluate_model(m, {}, opt), std::invalid_argument);
}

}  // namespace
}  // namespace kgdial::eval
