// SPDX-License-Identifier: Apache-2.0
#include "kgdial/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "kgdial/common/rng.hpp"

namespace kgdial::data {

namespace {

// Modals first: they must exist even in the smallest inventory.
const std::array<const char*, 22> kFunctionWords = {
    "would", "can",   "could", "will", "should", "may",   "i",      "think",
    "well",  "you",   "know",  "that", "yes",    "so",    "it",     "is",
    "agree", "see",   "right", "and",  "oh",     "really"};
constexpr std::size_t kModalCount = 6;

// First-order chain with three weighted successors per word.
class MarkovChain {
 public:
  MarkovChain(const std::vector<std::string>& words, Rng& rng) : words_(words) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      std::array<std::size_t, 3> next{};
      for (auto& n : next) n = rng.index(words.size());
      succ_.push_back(next);
    }
  }

  std::size_t step(std::size_t from, Rng& rng) const {
    const double u = rng.uniform();
    const auto& s = succ_[from];
    return u < 0.6 ? s[0] : (u < 0.9 ? s[1] : s[2]);
  }

  Tokens walk(std::size_t start, std::size_t len, Rng& rng) const {
    Tokens out;
    std::size_t cur = start;
    for (std::size_t i = 0; i < len; ++i) {
      out.push_back(words_[cur]);
      cur = step(cur, rng);
    }
    return out;
  }

  std::size_t size() const { return words_.size(); }
  const std::string& word(std::size_t i) const { return words_[i]; }

 private:
  std::vector<std::string> words_;
  std::vector<std::array<std::size_t, 3>> succ_;
};

std::size_t between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.index(hi - lo + 1);
}

}  // namespace

SynthCorpus synth_copy_corpus(const SynthOptions& o) {
  if (o.vocab_size < 20) {
    throw std::invalid_argument(
        "synth_copy_corpus: vocab_size must be >= 20 to hold function, chat "
        "and topic words");
  }
  if (o.n_grounded == 0 || o.n_ungrounded == 0 || o.n_docs == 0 ||
      o.sentences_per_doc == 0) {
    throw std::invalid_argument("synth_copy_corpus: sizes must be >= 1");
  }
  if (o.min_sentence_len < 2 || o.max_sentence_len < o.min_sentence_len ||
      o.min_utterance_len < 1 || o.max_utterance_len < o.min_utterance_len ||
      o.max_context_utterances < 1) {
    throw std::invalid_argument("synth_copy_corpus: inconsistent length bounds");
  }
  if (!(o.span_ratio > 0.0 && o.span_ratio < 1.0)) {
    throw std::invalid_argument("synth_copy_corpus: span_ratio must lie in (0,1)");
  }

  Rng root(o.seed);
  SynthCorpus out;

  const std::size_t n_func =
      std::clamp<std::size_t>(o.vocab_size / 8, kModalCount, kFunctionWords.size());
  for (std::size_t i = 0; i < n_func; ++i) out.function_words.push_back(kFunctionWords[i]);
  const std::size_t n_chat = (o.vocab_size - n_func) / 2;
  const std::size_t n_topic = o.vocab_size - n_func - n_chat;
  for (std::size_t i = 0; i < n_chat; ++i) out.chat_words.push_back("c" + std::to_string(i));
  for (std::size_t i = 0; i < n_topic; ++i) out.topic_words.push_back("t" + std::to_string(i));

  Rng structure = root.split(0);
  const MarkovChain chat(out.chat_words, structure);
  const MarkovChain topic(out.topic_words, structure);

  // Fixed function phrases: prefixes are plain function words, suffixes
  // open with a modal so modal tokens appear in a predictable slot.
  std::vector<Tokens> prefixes, suffixes;
  const std::vector<std::string> plain(out.function_words.begin() + kModalCount,
                                       out.function_words.end());
  const auto& prefix_pool = plain.empty() ? out.function_words : plain;
  for (int k = 0; k < 4; ++k) {
    Tokens p;
    const std::size_t len = between(structure, 1, 2);
    for (std::size_t i = 0; i < len; ++i) {
      p.push_back(prefix_pool[structure.index(prefix_pool.size())]);
    }
    prefixes.push_back(std::move(p));
    Tokens s{out.function_words[structure.index(kModalCount)]};
    if (structure.bernoulli(0.5)) s.push_back(prefix_pool[structure.index(prefix_pool.size())]);
    suffixes.push_back(std::move(s));
  }

  auto sentence = [&](std::size_t start, Rng& rng) {
    return topic.walk(start, between(rng, o.min_sentence_len, o.max_sentence_len), rng);
  };
  auto utterance = [&](Rng& rng, double topic_rate) {
    Tokens u = chat.walk(rng.index(chat.size()),
                         between(rng, o.min_utterance_len, o.max_utterance_len), rng);
    for (auto& w : u) {
      if (rng.bernoulli(topic_rate)) w = topic.word(rng.index(topic.size()));
    }
    return u;
  };
  auto context = [&](Rng& rng, double topic_rate) {
    std::vector<Tokens> ctx;
    const std::size_t n = between(rng, 1, o.max_context_utterances);
    for (std::size_t i = 0; i < n; ++i) ctx.push_back(utterance(rng, topic_rate));
    return ctx;
  };

  // D_P: plain documents over the topical chain.
  Rng docs_rng = root.split(1);
  for (std::size_t d = 0; d < o.n_docs; ++d) {
    Document doc;
    for (std::size_t s = 0; s < o.sentences_per_doc; ++s) {
      doc.sentences.push_back(sentence(docs_rng.index(topic.size()), docs_rng));
    }
    out.documents.push_back(std::move(doc));
  }

  // D_C: echo dialogues; the last utterance quotes a short topical phrase
  // and the response repeats it between function phrases.
  Rng chat_rng = root.split(2);
  for (std::size_t i = 0; i < o.n_ungrounded; ++i) {
    UngroundedExample ex;
    ex.context = context(chat_rng, 0.1);
    Tokens& last = ex.context.back();
    last = utterance(chat_rng, 0.0);
    const Tokens phrase = topic.walk(chat_rng.index(topic.size()), between(chat_rng, 1, 4),
                                     chat_rng);
    last.insert(last.begin() + static_cast<std::ptrdiff_t>(chat_rng.index(last.size() + 1)),
                phrase.begin(), phrase.end());
    const Tokens& pre = prefixes[chat_rng.index(prefixes.size())];
    const Tokens& suf = suffixes[chat_rng.index(suffixes.size())];
    ex.response = pre;
    ex.response.insert(ex.response.end(), phrase.begin(), phrase.end());
    ex.response.insert(ex.response.end(), suf.begin(), suf.end());
    out.ungrounded.push_back(std::move(ex));
  }

  // D_S: the last utterance mentions a key topic word; one document
  // sentence opens with it and the response copies the span after it.
  Rng grounded_rng = root.split(3);
  const double odds = o.span_ratio / (1.0 - o.span_ratio);
  for (std::size_t i = 0; i < o.n_grounded; ++i) {
    Rng& rng = grounded_rng;
    GroundedExample ex;
    std::vector<TokenSource> src;

    const std::size_t key = rng.index(topic.size());
    ex.context = context(rng, 0.0);
    Tokens& last = ex.context.back();
    last[rng.index(last.size())] = topic.word(key);

    const std::size_t target = rng.index(o.sentences_per_doc);
    for (std::size_t s = 0; s < o.sentences_per_doc; ++s) {
      std::size_t start = key;
      if (s != target) {
        do {
          start = rng.index(topic.size());
        } while (start == key && topic.size() > 1);
      }
      ex.knowledge.push_back(sentence(start, rng));
    }

    const Tokens& pre = prefixes[rng.index(prefixes.size())];
    const Tokens& suf = suffixes[rng.index(suffixes.size())];
    const std::size_t others = pre.size() + 1 + suf.size();
    const double want = odds * static_cast<double>(others);
    std::size_t span = static_cast<std::size_t>(std::floor(want));
    if (rng.uniform() < want - std::floor(want)) ++span;
    span = std::clamp<std::size_t>(span, 1, ex.knowledge[target].size() - 1);

    for (const auto& w : pre) {
      ex.response.push_back(w);
      src.push_back(TokenSource::function);
    }
    ex.response.push_back(topic.word(key));
    src.push_back(TokenSource::context);
    for (std::size_t j = 1; j <= span; ++j) {
      ex.response.push_back(ex.knowledge[target][j]);
      src.push_back(TokenSource::knowledge);
    }
    for (const auto& w : suf) {
      ex.response.push_back(w);
      src.push_back(TokenSource::function);
    }
    out.grounded.push_back(std::move(ex));
    out.grounded_sources.push_back(std::move(src));
  }
  return out;
}

}  // namespace kgdial::data
