// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kgdial/data/types.hpp"
#include "kgdial/model/beam_search.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::cli {

/// Reads a plain-text document: each line is tokenized and split into
/// sentences. Throws std::runtime_error when the file is missing or empty.
data::Document load_text_document(const std::string& path);

/// "word[source]" for every generated token.
std::string render_with_sources(const model::GeneratedResponse& r);

/// Grounded conversation over one document. Both sides of the exchange are
/// kept in the history; the model sees at most max_context_words of it.
class ChatSession {
 public:
  ChatSession(const model::Model& model, data::Document document,
              model::GenerateOptions options = {});

  model::GeneratedResponse respond(const std::string& utterance);
  void reset() { history_.clear(); }

  const std::vector<data::Tokens>& history() const { return history_; }
  /// The truncated context the next response would be conditioned on.
  std::vector<data::Tokens> visible_context() const;

 private:
  const model::Model& model_;
  data::Document document_;
  model::GenerateOptions options_;
  std::vector<data::Tokens> history_;
};

/// Prompt loop: "/reset" clears the history, "/quit" or end of input stops.
void chat_loop(ChatSession& session, std::istream& in, std::ostream& out);

}  // namespace kgdial::cli
