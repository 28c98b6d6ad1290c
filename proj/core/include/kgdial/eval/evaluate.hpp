// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/data/types.hpp"
#include "kgdial/eval/embedding_table.hpp"
#include "kgdial/model/beam_search.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::eval {

struct MetricReport {
  double ppl = 0.0;
  double f1 = 0.0;
  std::array<double, 4> bleu{};  // BLEU-1..4
  bool has_embedding = false;
  double emb_average = 0.0;
  double emb_extrema = 0.0;
  double emb_greedy = 0.0;
  std::size_t emb_pairs = 0;
  std::size_t emb_undefined = 0;
  std::size_t examples = 0;
  std::size_t tokens = 0;  // gold targets scored for PPL
  /// Generated tokens per source (lm, context, knowledge).
  std::array<std::size_t, model::kSourceCount> source_counts{};

  double source_fraction(model::Source s) const;
};

nlohmann::json to_json(const MetricReport& r);

struct PerplexityOptions {
  /// Score with the one-hot manager instead of soft manager weights.
  bool discretized = false;
  model::SourceMask enabled = model::kAllSources;
};

struct PerplexityResult {
  double ppl = 0.0;
  double nll = 0.0;
  std::size_t tokens = 0;
};

/// exp(mean -ln P(gold)) over every response token plus EOS, teacher forced.
/// Infinite when a discretized manager gives a gold token zero probability.
/// Throws std::invalid_argument on an empty dataset.
PerplexityResult perplexity(const model::Model& model,
                            const std::vector<data::GroundedExample>& dataset,
                            const PerplexityOptions& options = {});

struct GenerationRecord {
  data::GroundedExample example;
  model::GeneratedResponse response;
};

nlohmann::json to_json(const GenerationRecord& r);

struct EvalOptions {
  model::GenerateOptions generate;
  PerplexityOptions ppl;
  const EmbeddingTable* embeddings = nullptr;
};

struct Evaluation {
  MetricReport report;
  std::vector<GenerationRecord> generations;
};

Evaluation evaluate_model(const model::Model& model,
                          const std::vector<data::GroundedExample>& test,
                          const EvalOptions& options = {});

}  // namespace kgdial::eval
