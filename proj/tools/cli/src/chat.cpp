// SPDX-License-Identifier: Apache-2.0
#include "kgdial/cli/chat.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "kgdial/data/batch.hpp"
#include "kgdial/data/text.hpp"

namespace kgdial::cli {

data::Document load_text_document(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open document '" + path + "'");
  data::Document doc;
  std::string line;
  while (std::getline(f, line)) {
    for (auto& s : data::split_sentences(data::tokenize(line))) {
      doc.sentences.push_back(std::move(s));
    }
  }
  if (doc.sentences.empty()) throw std::runtime_error("document '" + path + "' is empty");
  return doc;
}

std::string render_with_sources(const model::GeneratedResponse& r) {
  std::string out;
  for (std::size_t i = 0; i < r.tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += r.tokens[i] + "[" + model::source_name(r.sources[i]) + "]";
  }
  return out;
}

ChatSession::ChatSession(const model::Model& model, data::Document document,
                         model::GenerateOptions options)
    : model_(model), document_(std::move(document)), options_(options) {
  if (document_.sentences.empty()) throw std::invalid_argument("chat: empty document");
}

std::vector<data::Tokens> ChatSession::visible_context() const {
  return data::truncate_context(history_, model_.config().max_context_words);
}

model::GeneratedResponse ChatSession::respond(const std::string& utterance) {
  data::Tokens turn = data::tokenize(utterance);
  if (turn.empty()) throw std::invalid_argument("chat: empty utterance");
  history_.push_back(std::move(turn));
  data::GroundedExample ex;
  ex.context = visible_context();
  ex.knowledge = document_.sentences;
  const auto enc = data::encode_grounded(ex, model_.vocab(), model_.config().max_context_words);
  auto r = model::generate(model_, enc, options_);
  if (!r.tokens.empty()) history_.push_back(r.tokens);
  return r;
}

void chat_loop(ChatSession& session, std::istream& in, std::ostream& out) {
  std::string line;
  while (true) {
    out << "> " << std::flush;
    if (!std::getline(in, line)) break;
    if (line == "/quit") break;
    if (line == "/reset") {
      session.reset();
      out << "[history cleared]\n";
      continue;
    }
    if (data::tokenize(line).empty()) continue;
    out << render_with_sources(session.respond(line)) << "\n";
  }
  out << "\n";
}

}  // namespace kgdial::cli
