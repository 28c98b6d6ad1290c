// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <string>
#include <vector>

#include "kgdial/autodiff/tensor.hpp"
#include "kgdial/common/rng.hpp"
#include "kgdial/data/types.hpp"
#include "kgdial/data/vocabulary.hpp"
#include "kgdial/model/config.hpp"

namespace kgdial::test {

inline ad::Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng,
                                bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return ad::Tensor::from({rows, cols}, std::move(v), requires_grad);
}

inline data::Tokens words(const std::string& text) {
  data::Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Tiny structure-preserving configuration for fast model tests.
inline model::ModelConfig tiny_config() {
  model::ModelConfig c = model::ModelConfig::toy();
  c.embed_dim = 4;
  c.hidden_size = 6;
  c.layers = 2;
  c.attention_size = 5;
  c.mlp_size = 7;
  return c;
}

inline data::Vocabulary letters_vocab(std::size_t n) {
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < n; ++i) toks.push_back("w" + std::to_string(i));
  return data::Vocabulary(toks);
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ reinterpret_cast<std::uintptr_t>(this));
    path_ = std::filesystem::temp_directory_path() /
            ("kgdial_" + tag + "_" + std::to_string(rng.next() % 1000000007ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace kgdial::test
