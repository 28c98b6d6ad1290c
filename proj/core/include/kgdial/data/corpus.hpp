// SPDX-License-Identifier: Apache-2.0
//
// Line-delimited JSON corpora, optionally gzip-compressed (".gz").
//
//   grounded:    {"context": [str], "knowledge": [str], "response": str}
//   ungrounded:  {"context": [str], "response": str}
//   documents:   {"text": str}  or  {"sentences": [str]}

#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kgdial/data/types.hpp"

namespace kgdial::data {

enum class CorpusKind { grounded, ungrounded, documents };

using CorpusRecord = std::variant<GroundedExample, UngroundedExample, Document>;

struct LoadStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t rejected = 0;  // records with an empty required field
};

/// Reads lines from plain or gzip files.
class LineReader {
 public:
  explicit LineReader(const std::string& path);
  ~LineReader();
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;

  bool next(std::string& line);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Writes lines to plain or gzip files.
class LineWriter {
 public:
  explicit LineWriter(const std::string& path);
  ~LineWriter();
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;

  void write(const std::string& line);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Streaming, order-preserving corpus reader. Malformed lines raise
/// FormatError naming the line; records with empty required fields are
/// skipped and counted in stats().rejected.
class CorpusReader {
 public:
  CorpusReader(const std::string& path, CorpusKind kind);

  std::optional<CorpusRecord> next();
  const LoadStats& stats() const { return stats_; }

 private:
  std::string path_;
  CorpusKind kind_;
  LineReader reader_;
  LoadStats stats_;
};

std::vector<GroundedExample> load_grounded(const std::string& path,
                                           LoadStats* stats = nullptr);
std::vector<UngroundedExample> load_ungrounded(const std::string& path,
                                               LoadStats* stats = nullptr);
std::vector<Document> load_documents(const std::string& path,
                                     LoadStats* stats = nullptr);

std::string to_json_line(const GroundedExample& ex);
std::string to_json_line(const UngroundedExample& ex);
std::string to_json_line(const Document& doc);

void write_corpus(const std::string& path,
                  const std::vector<GroundedExample>& examples);
void write_corpus(const std::string& path,
                  const std::vector<UngroundedExample>& examples);
void write_corpus(const std::string& path, const std::vector<Document>& docs);

std::string join_tokens(const Tokens& tokens);

}  // namespace kgdial::data
