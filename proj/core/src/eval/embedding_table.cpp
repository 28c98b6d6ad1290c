// SPDX-License-Identifier: Apache-2.0
#include "kgdial/eval/embedding_table.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kgdial/common/error.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::eval {

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding table " + path);
  return read(in, path);
}

EmbeddingTable EmbeddingTable::read(std::istream& in, const std::string& origin) {
  EmbeddingTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    std::string num;
    while (fields >> num) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(num, &used));
        if (used != num.size()) throw std::invalid_argument(num);
      } catch (const std::exception&) {
        throw FormatError(origin + ":" + std::to_string(lineno) + ": bad number '" + num + "'");
      }
    }
    if (vec.empty() || (table.dim_ != 0 && vec.size() != table.dim_)) {
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.dim_) + " values, got " +
                        std::to_string(vec.size()));
    }
    table.set(token, std::move(vec));
  }
  return table;
}

void EmbeddingTable::set(const std::string& token, std::vector<double> vec) {
  if (vec.empty()) throw std::invalid_argument("embedding vector is empty");
  if (dim_ == 0) dim_ = vec.size();
  if (vec.size() != dim_) {
    throw std::invalid_argument("embedding for '" + token + "' has " +
                                std::to_string(vec.size()) + " values, table has " +
                                std::to_string(dim_));
  }
  index_[token] = std::move(vec);
}

std::span<const double> EmbeddingTable::get(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return {};
  return it->second;
}

std::size_t initialize_embeddings(model::Model& model, const EmbeddingTable& table) {
  const std::size_t E = model.config().embed_dim;
  if (table.dim() != E) {
    throw std::invalid_argument("embedding table dimension " + std::to_string(table.dim()) +
                                " != model embed_dim " + std::to_string(E));
  }
  auto input = model.registry().get("embedding").mutable_values();
  auto knowledge = model.registry().get("kn_embedding").mutable_values();
  std::size_t count = 0;
  for (std::size_t id = 0; id < model.vocab_size(); ++id) {
    auto v = table.get(model.vocab().token(id));
    if (v.empty()) continue;
    std::copy(v.begin(), v.end(), input.begin() + static_cast<std::ptrdiff_t>(id * E));
    std::copy(v.begin(), v.end(), knowledge.begin() + static_cast<std::ptrdiff_t>(id * E));
    ++count;
  }
  return count;
}

}  // namespace kgdial::eval
