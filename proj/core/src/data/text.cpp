// SPDX-License-Identifier: Apache-2.0
#include "kgdial/data/text.hpp"

#include <cctype>
#include <stdexcept>

namespace kgdial::data {

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

std::vector<Tokens> split_sentences(const Tokens& tokens) {
  std::vector<Tokens> out;
  Tokens cur;
  for (const auto& t : tokens) {
    cur.push_back(t);
    if (t == "." || t == "!" || t == "?") {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<Tokens> truncate_context(const std::vector<Tokens>& utterances,
                                     std::size_t limit) {
  if (limit == 0) throw std::invalid_argument("truncate_context: limit must be >= 1");
  std::vector<Tokens> kept;
  std::size_t budget = limit;
  for (auto it = utterances.rbegin(); it != utterances.rend() && budget > 0;
       ++it) {
    if (it->empty()) continue;
    if (it->size() <= budget) {
      kept.push_back(*it);
      budget -= it->size();
    } else {
      kept.emplace_back(it->end() - static_cast<std::ptrdiff_t>(budget),
                        it->end());
      budget = 0;
    }
  }
  return {kept.rbegin(), kept.rend()};
}

std::vector<Tokens> derive_lm_corpus(
    const std::vector<UngroundedExample>& dialogues) {
  std::vector<Tokens> out;
  for (const auto& d : dialogues) {
    for (const auto& u : d.context) {
      if (!u.empty()) out.push_back(u);
    }
    if (!d.response.empty()) out.push_back(d.response);
  }
  return out;
}

std::size_t word_count(const std::vector<Tokens>& utterances) {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.size();
  return n;
}

Tokens flatten(const std::vector<Tokens>& utterances) {
  Tokens out;
  out.reserve(word_count(utterances));
  for (const auto& u : utterances) out.insert(out.end(), u.begin(), u.end());
  return out;
}

}  // namespace kgdial::data
