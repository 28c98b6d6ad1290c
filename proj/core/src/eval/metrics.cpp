// SPDX-License-Identifier: Apache-2.0
#include "kgdial/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "kgdial/data/text.hpp"
#include "kgdial/eval/embedding_table.hpp"

namespace kgdial::eval {

data::Tokens normalize_answer(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    clean.push_back(static_cast<char>(std::tolower(c)));
  }
  std::istringstream in(clean);
  data::Tokens out;
  std::string w;
  while (in >> w) {
    if (w == "a" || w == "an" || w == "the") continue;
    out.push_back(w);
  }
  return out;
}

double unigram_f1(const std::string& hypothesis, const std::string& reference) {
  const auto hyp = normalize_answer(hypothesis);
  const auto ref = normalize_answer(reference);
  if (hyp.empty() || ref.empty()) return 0.0;
  std::unordered_map<std::string, std::size_t> ref_counts;
  for (const auto& w : ref) ++ref_counts[w];
  std::size_t same = 0;
  for (const auto& w : hyp) {
    auto it = ref_counts.find(w);
    if (it != ref_counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double p = static_cast<double>(same) / static_cast<double>(hyp.size());
  const double r = static_cast<double>(same) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, std::size_t n) {
  if (n < 1) throw std::invalid_argument("bleu: n must be >= 1");
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("bleu: hypothesis and reference counts differ");
  }
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = data::tokenize(hypotheses[i]);
    const auto ref = data::tokenize(references[i]);
    hyp_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t k = 1; k <= n; ++k) {
      std::map<std::vector<std::string>, std::size_t> ref_grams;
      for (std::size_t j = 0; j + k <= ref.size(); ++j) {
        ++ref_grams[{ref.begin() + static_cast<std::ptrdiff_t>(j),
                     ref.begin() + static_cast<std::ptrdiff_t>(j + k)}];
      }
      for (std::size_t j = 0; j + k <= hyp.size(); ++j) {
        total[k - 1] += 1.0;
        auto it = ref_grams.find({hyp.begin() + static_cast<std::ptrdiff_t>(j),
                                  hyp.begin() + static_cast<std::ptrdiff_t>(j + k)});
        if (it != ref_grams.end() && it->second > 0) {
          --it->second;
          matched[k - 1] += 1.0;
        }
      }
    }
  }
  if (hyp_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (matched[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::vector<std::span<const double>> lookup(const data::Tokens& tokens,
                                            const EmbeddingTable& table) {
  std::vector<std::span<const double>> out;
  for (const auto& t : tokens) {
    auto v = table.get(t);
    if (!v.empty()) out.push_back(v);
  }
  return out;
}

std::vector<double> mean_vector(const std::vector<std::span<const double>>& vs, std::size_t d) {
  std::vector<double> m(d, 0.0);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < d; ++i) m[i] += v[i];
  }
  for (double& x : m) x /= static_cast<double>(vs.size());
  return m;
}

std::vector<double> extrema_vector(const std::vector<std::span<const double>>& vs,
                                   std::size_t d) {
  std::vector<double> e(d, 0.0);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < d; ++i) {
      if (std::abs(v[i]) > std::abs(e[i])) e[i] = v[i];
    }
  }
  return e;
}

double greedy_direction(const std::vector<std::span<const double>>& from,
                        const std::vector<std::span<const double>>& to) {
  double sum = 0.0;
  for (const auto& a : from) {
    double best = -1.0;
    for (const auto& b : to) best = std::max(best, cosine(a, b));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

std::optional<EmbeddingScore> embedding_metrics(const data::Tokens& hypothesis,
                                                const data::Tokens& reference,
                                                const EmbeddingTable& table) {
  const auto hv = lookup(hypothesis, table);
  const auto rv = lookup(reference, table);
  if (hv.empty() || rv.empty()) return std::nullopt;
  const std::size_t d = table.dim();
  EmbeddingScore s;
  s.average = cosine(mean_vector(hv, d), mean_vector(rv, d));
  s.extrema = cosine(extrema_vector(hv, d), extrema_vector(rv, d));
  s.greedy = 0.5 * (greedy_direction(hv, rv) + greedy_direction(rv, hv));
  return s;
}

CorpusEmbeddingScore corpus_embedding_metrics(const std::vector<data::Tokens>& hypotheses,
                                              const std::vector<data::Tokens>& references,
                                              const EmbeddingTable& table) {
  if (hypotheses.size() != references.size()) {
    throw std::invalid_argument("embedding metrics: hypothesis and reference counts differ");
  }
  CorpusEmbeddingScore out;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto s = embedding_metrics(hypotheses[i], references[i], table);
    if (!s) {
      ++out.undefined;
      continue;
    }
    ++out.pairs;
    out.mean.average += s->average;
    out.mean.extrema += s->extrema;
    out.mean.greedy += s->greedy;
  }
  if (out.pairs > 0) {
    const double n = static_cast<double>(out.pairs);
    out.mean.average /= n;
    out.mean.extrema /= n;
    out.mean.greedy /= n;
  }
  return out;
}

double perplexity_from_nll(double total_nll, std::size_t tokens) {
  if (tokens == 0) throw std::invalid_argument("perplexity: no tokens");
  return std::exp(total_nll / static_cast<double>(tokens));
}

double perplexity_from_log_probs(const std::vector<double>& log_probs) {
  double nll = 0.0;
  for (double lp : log_probs) nll -= lp;
  return perplexity_from_nll(nll, log_probs.size());
}

}  // namespace kgdial::eval
