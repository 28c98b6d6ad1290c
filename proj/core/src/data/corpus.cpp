// SPDX-License-Identifier: Apache-2.0
#include "kgdial/data/corpus.hpp"

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "kgdial/common/error.hpp"
#include "kgdial/data/text.hpp"

namespace kgdial::data {

using nlohmann::json;

// ---------------------------------------------------------------------------
// gzip-transparent line I/O (zlib reads uncompressed files as-is)

struct LineReader::Impl {
  gzFile file = nullptr;
  std::vector<char> buf = std::vector<char>(1 << 16);
};

LineReader::LineReader(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->file = gzopen(path.c_str(), "rb");
  if (!impl_->file) throw std::runtime_error("cannot open " + path);
}

LineReader::~LineReader() {
  if (impl_ && impl_->file) gzclose(impl_->file);
}

bool LineReader::next(std::string& line) {
  line.clear();
  while (true) {
    char* got = gzgets(impl_->file, impl_->buf.data(),
                       static_cast<int>(impl_->buf.size()));
    if (!got) return !line.empty();
    line += got;
    if (!line.empty() && line.back() == '\n') {
      line.pop_back();
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
  }
}

struct LineWriter::Impl {
  gzFile file = nullptr;
};

LineWriter::LineWriter(const std::string& path) : impl_(std::make_unique<Impl>()) {
  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  impl_->file = gzopen(path.c_str(), gz ? "wb" : "wbT");
  if (!impl_->file) throw std::runtime_error("cannot write " + path);
}

LineWriter::~LineWriter() {
  if (impl_ && impl_->file) gzclose(impl_->file);
}

void LineWriter::write(const std::string& line) {
  gzwrite(impl_->file, line.data(), static_cast<unsigned>(line.size()));
  gzputc(impl_->file, '\n');
}

// ---------------------------------------------------------------------------
// record parsing

namespace {

std::vector<Tokens> token_list(const json& arr, const char* field) {
  if (!arr.is_array()) {
    throw FormatError(std::string("field '") + field + "' must be a string list");
  }
  std::vector<Tokens> out;
  for (const auto& s : arr) {
    if (!s.is_string()) {
      throw FormatError(std::string("field '") + field + "' must contain strings");
    }
    Tokens t = tokenize(s.get<std::string>());
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

Tokens token_string(const json& s, const char* field) {
  if (!s.is_string()) {
    throw FormatError(std::string("field '") + field + "' must be a string");
  }
  return tokenize(s.get<std::string>());
}

const json& require(const json& obj, const char* field) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw FormatError(std::string("missing field '") + field + "'");
  }
  return *it;
}

std::optional<CorpusRecord> parse_record(const json& obj, CorpusKind kind) {
  if (!obj.is_object()) throw FormatError("record is not an object");
  switch (kind) {
    case CorpusKind::grounded: {
      GroundedExample ex;
      ex.context = token_list(require(obj, "context"), "context");
      ex.knowledge = token_list(require(obj, "knowledge"), "knowledge");
      ex.response = token_string(require(obj, "response"), "response");
      if (ex.context.empty() || ex.knowledge.empty() || ex.response.empty()) {
        return std::nullopt;
      }
      return ex;
    }
    case CorpusKind::ungrounded: {
      UngroundedExample ex;
      ex.context = token_list(require(obj, "context"), "context");
      ex.response = token_string(require(obj, "response"), "response");
      if (ex.context.empty() || ex.response.empty()) return std::nullopt;
      return ex;
    }
    case CorpusKind::documents: {
      Document doc;
      if (auto it = obj.find("sentences"); it != obj.end()) {
        doc.sentences = token_list(*it, "sentences");
      } else if (auto t = obj.find("text"); t != obj.end()) {
        doc.sentences = split_sentences(token_string(*t, "text"));
      } else {
        throw FormatError("document needs 'text' or 'sentences'");
      }
      if (doc.sentences.empty()) return std::nullopt;
      return doc;
    }
  }
  return std::nullopt;
}

json string_list(const std::vector<Tokens>& items) {
  json arr = json::array();
  for (const auto& t : items) arr.push_back(join_tokens(t));
  return arr;
}

}  // namespace

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

CorpusReader::CorpusReader(const std::string& path, CorpusKind kind)
    : path_(path), kind_(kind), reader_(path) {}

std::optional<CorpusRecord> CorpusReader::next() {
  std::string line;
  while (reader_.next(line)) {
    ++stats_.lines;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::optional<CorpusRecord> rec;
    try {
      rec = parse_record(json::parse(line), kind_);
    } catch (const json::exception& e) {
      throw FormatError(path_ + ":" + std::to_string(stats_.lines) +
                        ": malformed record: " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path_ + ":" + std::to_string(stats_.lines) + ": " +
                        e.what());
    }
    if (!rec) {
      ++stats_.rejected;
      continue;
    }
    ++stats_.records;
    return rec;
  }
  return std::nullopt;
}

namespace {

template <typename T>
std::vector<T> load_all(const std::string& path, CorpusKind kind,
                        LoadStats* stats) {
  CorpusReader reader(path, kind);
  std::vector<T> out;
  while (auto rec = reader.next()) out.push_back(std::get<T>(std::move(*rec)));
  if (stats) *stats = reader.stats();
  return out;
}

template <typename T>
void write_all(const std::string& path, const std::vector<T>& items) {
  LineWriter w(path);
  for (const auto& it : items) w.write(to_json_line(it));
}

}  // namespace

std::vector<GroundedExample> load_grounded(const std::string& path,
                                           LoadStats* stats) {
  return load_all<GroundedExample>(path, CorpusKind::grounded, stats);
}

std::vector<UngroundedExample> load_ungrounded(const std::string& path,
                                               LoadStats* stats) {
  return load_all<UngroundedExample>(path, CorpusKind::ungrounded, stats);
}

std::vector<Document> load_documents(const std::string& path,
                                     LoadStats* stats) {
  return load_all<Document>(path, CorpusKind::documents, stats);
}

std::string to_json_line(const GroundedExample& ex) {
  json j;
  j["context"] = string_list(ex.context);
  j["knowledge"] = string_list(ex.knowledge);
  j["response"] = join_tokens(ex.response);
  return j.dump();
}

std::string to_json_line(const UngroundedExample& ex) {
  json j;
  j["context"] = string_list(ex.context);
  j["response"] = join_tokens(ex.response);
  return j.dump();
}

std::string to_json_line(const Document& doc) {
  json j;
  j["sentences"] = string_list(doc.sentences);
  return j.dump();
}

void write_corpus(const std::string& path,
                  const std::vector<GroundedExample>& examples) {
  write_all(path, examples);
}

void write_corpus(const std::string& path,
                  const std::vector<UngroundedExample>& examples) {
  write_all(path, examples);
}

void write_corpus(const std::string& path, const std::vector<Document>& docs) {
  write_all(path, docs);
}

}  // namespace kgdial::data
