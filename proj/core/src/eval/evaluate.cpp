// SPDX-License-Identifier: Apache-2.0
#include "kgdial/eval/evaluate.hpp"

#include <limits>
#include <stdexcept>

#include "kgdial/common/error.hpp"
#include "kgdial/data/batch.hpp"
#include "kgdial/data/corpus.hpp"
#include "kgdial/eval/metrics.hpp"
#include "kgdial/model/decoder.hpp"

namespace kgdial::eval {

using nlohmann::json;

double MetricReport::source_fraction(model::Source s) const {
  std::size_t total = 0;
  for (auto c : source_counts) total += c;
  if (total == 0) return 0.0;
  return static_cast<double>(source_counts[static_cast<std::size_t>(s)]) /
         static_cast<double>(total);
}

json to_json(const MetricReport& r) {
  json j{{"ppl", r.ppl},
         {"f1", r.f1},
         {"bleu1", r.bleu[0]},
         {"bleu2", r.bleu[1]},
         {"bleu3", r.bleu[2]},
         {"bleu4", r.bleu[3]},
         {"examples", r.examples},
         {"tokens", r.tokens}};
  if (r.has_embedding) {
    j["emb_average"] = r.emb_average;
    j["emb_extrema"] = r.emb_extrema;
    j["emb_greedy"] = r.emb_greedy;
    j["emb_pairs"] = r.emb_pairs;
    j["emb_undefined"] = r.emb_undefined;
  }
  json src = json::object();
  for (std::size_t k = 0; k < model::kSourceCount; ++k) {
    const auto s = static_cast<model::Source>(k);
    src[model::source_name(s)] = r.source_fraction(s);
  }
  j["sources"] = src;
  return j;
}

PerplexityResult perplexity(const model::Model& model,
                            const std::vector<data::GroundedExample>& dataset,
                            const PerplexityOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("perplexity: empty dataset");
  model::NllOptions opt;
  opt.mode = model::LossMode::grounded;
  opt.manager = options.discretized ? model::ManagerMode::argmax : model::ManagerMode::soft;
  opt.enabled = options.enabled;
  PerplexityResult out;
  for (const auto& ex : dataset) {
    const auto enc = data::encode_grounded(ex, model.vocab(), model.config().max_context_words);
    model::Tape tape(model::Tape::Mode::inference);
    try {
      const auto r = model::sequence_nll(tape, model, enc, opt, nullptr);
      out.nll += r.nll_sum;
      out.tokens += r.tokens;
    } catch (const DomainError&) {
      out.tokens += enc.response.size() + 1;
      out.nll = std::numeric_limits<double>::infinity();
    }
  }
  out.ppl = perplexity_from_nll(out.nll, out.tokens);
  return out;
}

json to_json(const GenerationRecord& r) {
  json context = json::array(), knowledge = json::array(), sources = json::array();
  for (const auto& u : r.example.context) context.push_back(data::join_tokens(u));
  for (const auto& s : r.example.knowledge) knowledge.push_back(data::join_tokens(s));
  for (auto s : r.response.sources) sources.push_back(model::source_name(s));
  return json{{"context", context},
              {"knowledge", knowledge},
              {"gold", data::join_tokens(r.example.response)},
              {"generated", data::join_tokens(r.response.tokens)},
              {"sources", sources}};
}

Evaluation evaluate_model(const model::Model& model,
                          const std::vector<data::GroundedExample>& test,
                          const EvalOptions& options) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  Evaluation ev;
  auto& rep = ev.report;
  const auto ppl = perplexity(model, test, options.ppl);
  rep.ppl = ppl.ppl;
  rep.tokens = ppl.tokens;
  rep.examples = test.size();

  std::vector<std::string> hyps, refs;
  std::vector<data::Tokens> hyp_tokens, ref_tokens;
  double f1 = 0.0;
  for (const auto& ex : test) {
    const auto enc = data::encode_grounded(ex, model.vocab(), model.config().max_context_words);
    auto resp = model::generate(model, enc, options.generate);
    const std::string hyp = data::join_tokens(resp.tokens);
    const std::string ref = data::join_tokens(ex.response);
    f1 += unigram_f1(hyp, ref);
    hyps.push_back(hyp);
    refs.push_back(ref);
    hyp_tokens.push_back(resp.tokens);
    ref_tokens.push_back(ex.response);
    for (auto s : resp.sources) ++rep.source_counts[static_cast<std::size_t>(s)];
    ev.generations.push_back({ex, std::move(resp)});
  }
  rep.f1 = f1 / static_cast<double>(test.size());
  for (std::size_t n = 1; n <= 4; ++n) rep.bleu[n - 1] = bleu(hyps, refs, n);
  if (options.embeddings) {
    const auto e = corpus_embedding_metrics(hyp_tokens, ref_tokens, *options.embeddings);
    rep.has_embedding = true;
    rep.emb_average = e.mean.average;
    rep.emb_extrema = e.mean.extrema;
    rep.emb_greedy = e.mean.greedy;
    rep.emb_pairs = e.pairs;
    rep.emb_undefined = e.undefined;
  }
  return ev;
}

}  // namespace kgdial::eval
