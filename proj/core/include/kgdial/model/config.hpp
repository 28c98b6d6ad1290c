// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

namespace kgdial::model {

enum class EvalManager { argmax, sample };

/// Architecture sizes. Defaults are the full-scale settings; toy() shrinks
/// the dimensions without touching the structure.
struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t hidden_size = 1024;  // encoders, decoder; BiGRU directions get half each
  std::size_t layers = 3;
  std::size_t attention_size = 512;
  std::size_t mlp_size = 1024;     // first layer of the vocabulary MLPs
  std::size_t vocab_cap = 60000;
  std::size_t max_context_words = 128;
  double dropout = 0.1;
  EvalManager eval_manager = EvalManager::argmax;

  static ModelConfig toy();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep the values of `base`; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j,
                                   const ModelConfig& base = {});

}  // namespace kgdial::model
