// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace kgdial::model {
class Model;
}

namespace kgdial::eval {

/// Token -> fixed-dimension vector, read from GloVe-style text: one token
/// per line followed by whitespace-separated reals.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  /// Throws FormatError ("line N: ...") on ragged or non-numeric rows.
  static EmbeddingTable load(const std::string& path);
  static EmbeddingTable read(std::istream& in, const std::string& origin = "<stream>");

  /// Adds or replaces a vector; its size must match the table dimension
  /// (the first insertion fixes it).
  void set(const std::string& token, std::vector<double> vec);

  /// Empty span when the token is absent.
  std::span<const double> get(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return index_.size(); }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<double>> index_;
};

/// Copies table vectors into both input-embedding tables (context and
/// knowledge) for every vocabulary token the table covers. Requires the
/// table dimension to equal the model's embedding size. Returns the number
/// of tokens initialized.
std::size_t initialize_embeddings(model::Model& model, const EmbeddingTable& table);

}  // namespace kgdial::eval
