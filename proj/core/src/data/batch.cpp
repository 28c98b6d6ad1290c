// SPDX-License-Identifier: Apache-2.0
#include "kgdial/data/batch.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgdial::data {

std::optional<TokenId> ExtendedVocab::find(const std::string& token) const {
  for (std::size_t i = 0; i < extra_.size(); ++i) {
    if (extra_[i] == token) return base_size_ + i;
  }
  return std::nullopt;
}

TokenId ExtendedVocab::add(const std::string& token) {
  if (auto id = find(token)) return *id;
  extra_.push_back(token);
  return base_size_ + extra_.size() - 1;
}

std::string ExtendedVocab::token(TokenId id, const Vocabulary& vocab) const {
  if (id < base_size_) return vocab.token(id);
  if (id - base_size_ < extra_.size()) return extra_[id - base_size_];
  throw std::out_of_range("extended id " + std::to_string(id) + " unknown");
}

namespace {

void encode_source(const Tokens& tokens, const Vocabulary& vocab,
                   ExtendedVocab& ext, std::vector<TokenId>& base,
                   std::vector<TokenId>& extended) {
  for (const auto& t : tokens) {
    const TokenId id = vocab.id(t);
    base.push_back(id);
    extended.push_back(id == kUnk ? ext.add(t) : id);
  }
}

void encode_response(const Tokens& response, const Vocabulary& vocab,
                     EncodedExample& out) {
  out.response_tokens = response;
  for (const auto& t : response) {
    const TokenId id = vocab.id(t);
    out.response.push_back(id);
    if (id == kUnk) {
      auto ext = out.ext.find(t);
      out.response_ext.push_back(ext ? *ext : kUnk);
    } else {
      out.response_ext.push_back(id);
    }
  }
}

}  // namespace

EncodedExample encode_grounded(const GroundedExample& ex, const Vocabulary& vocab,
                               std::size_t max_context_words) {
  EncodedExample out;
  out.ext = ExtendedVocab(vocab.size());
  encode_source(flatten(truncate_context(ex.context, max_context_words)), vocab,
                out.ext, out.context, out.context_ext);
  for (const auto& s : ex.knowledge) {
    if (s.empty()) continue;
    out.knowledge.emplace_back();
    out.knowledge_ext.emplace_back();
    encode_source(s, vocab, out.ext, out.knowledge.back(),
                  out.knowledge_ext.back());
  }
  encode_response(ex.response, vocab, out);
  return out;
}

EncodedExample encode_ungrounded(const UngroundedExample& ex,
                                 const Vocabulary& vocab,
                                 std::size_t max_context_words) {
  EncodedExample out;
  out.ext = ExtendedVocab(vocab.size());
  encode_source(flatten(truncate_context(ex.context, max_context_words)), vocab,
                out.ext, out.context, out.context_ext);
  encode_response(ex.response, vocab, out);
  return out;
}

EncodedExample encode_utterance(const Tokens& utterance, const Vocabulary& vocab) {
  EncodedExample out;
  out.ext = ExtendedVocab(vocab.size());
  encode_response(utterance, vocab, out);
  return out;
}

EncodedExample encode_document(const Document& doc, const Vocabulary& vocab) {
  EncodedExample out;
  out.ext = ExtendedVocab(vocab.size());
  for (const auto& s : doc.sentences) {
    if (s.empty()) continue;
    out.knowledge.emplace_back();
    out.knowledge_ext.emplace_back();
    encode_source(s, vocab, out.ext, out.knowledge.back(),
                  out.knowledge_ext.back());
  }
  return out;
}

Batch make_batch(std::span<const EncodedExample> examples) {
  Batch b;
  b.size = examples.size();
  std::size_t max_ctx = 0, max_sent = 0, max_words = 0, max_resp = 0;
  for (const auto& e : examples) {
    max_ctx = std::max(max_ctx, e.context.size());
    max_sent = std::max(max_sent, e.knowledge.size());
    for (const auto& s : e.knowledge) max_words = std::max(max_words, s.size());
    max_resp = std::max(max_resp, e.response.size());
  }
  auto pad = [](const std::vector<TokenId>& v, std::size_t n) {
    std::vector<TokenId> out(v);
    out.resize(n, kPad);
    return out;
  };
  for (const auto& e : examples) {
    b.context.push_back(pad(e.context, max_ctx));
    b.context_ext.push_back(pad(e.context_ext, max_ctx));
    b.context_len.push_back(e.context.size());

    std::vector<std::vector<TokenId>> kn(max_sent, std::vector<TokenId>(max_words, kPad));
    auto kn_ext = kn;
    std::vector<std::size_t> lens(max_sent, 0);
    for (std::size_t i = 0; i < e.knowledge.size(); ++i) {
      kn[i] = pad(e.knowledge[i], max_words);
      kn_ext[i] = pad(e.knowledge_ext[i], max_words);
      lens[i] = e.knowledge[i].size();
    }
    b.knowledge.push_back(std::move(kn));
    b.knowledge_ext.push_back(std::move(kn_ext));
    b.knowledge_len.push_back(std::move(lens));
    b.knowledge_sentences.push_back(e.knowledge.size());

    b.response.push_back(pad(e.response, max_resp));
    b.response_ext.push_back(pad(e.response_ext, max_resp));
    b.response_len.push_back(e.response.size());
    b.response_tokens.push_back(e.response_tokens);
    b.ext.push_back(e.ext);
  }
  return b;
}

std::vector<std::vector<double>> Batch::response_mask() const {
  std::vector<std::vector<double>> m;
  for (std::size_t i = 0; i < size; ++i) {
    std::vector<double> row(response[i].size(), 0.0);
    std::fill(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(response_len[i]), 1.0);
    m.push_back(std::move(row));
  }
  return m;
}

EncodedExample Batch::example(std::size_t i) const {
  if (i >= size) throw std::out_of_range("batch index out of range");
  auto head = [](const std::vector<TokenId>& v, std::size_t n) {
    return std::vector<TokenId>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n));
  };
  EncodedExample e;
  e.context = head(context[i], context_len[i]);
  e.context_ext = head(context_ext[i], context_len[i]);
  for (std::size_t s = 0; s < knowledge_sentences[i]; ++s) {
    e.knowledge.push_back(head(knowledge[i][s], knowledge_len[i][s]));
    e.knowledge_ext.push_back(head(knowledge_ext[i][s], knowledge_len[i][s]));
  }
  e.response = head(response[i], response_len[i]);
  e.response_ext = head(response_ext[i], response_len[i]);
  e.response_tokens = response_tokens[i];
  e.ext = ext[i];
  return e;
}

}  // namespace kgdial::data
