// SPDX-License-Identifier: Apache-2.0
#include "kgdial/model/config.hpp"

#include <stdexcept>

namespace kgdial::model {

using nlohmann::json;

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.embed_dim = 16;
  c.hidden_size = 32;
  c.layers = 2;
  c.attention_size = 16;
  c.mlp_size = 32;
  c.vocab_cap = 200;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string("model.") + name + " must be > 0");
  };
  positive(embed_dim, "embed_dim");
  positive(hidden_size, "hidden_size");
  if (hidden_size % 2 != 0) {
    throw std::invalid_argument("model.hidden_size must be even (split across BiGRU directions)");
  }
  positive(layers, "layers");
  positive(attention_size, "attention_size");
  positive(mlp_size, "mlp_size");
  positive(vocab_cap, "vocab_cap");
  positive(max_context_words, "max_context_words");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("model.dropout must lie in [0,1)");
  }
}

json to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"hidden_size", c.hidden_size},
              {"layers", c.layers},
              {"attention_size", c.attention_size},
              {"mlp_size", c.mlp_size},
              {"vocab_cap", c.vocab_cap},
              {"max_context_words", c.max_context_words},
              {"dropout", c.dropout},
              {"eval_manager", c.eval_manager == EvalManager::argmax ? "argmax" : "sample"}};
}

ModelConfig model_config_from_json(const json& j, const ModelConfig& base) {
  if (!j.is_object()) throw std::invalid_argument("model: expected an object");
  ModelConfig c = base;
  for (const auto& [key, value] : j.items()) {
    auto size = [&](std::size_t& field) {
      if (!value.is_number_unsigned()) {
        throw std::invalid_argument("model." + key + " must be a non-negative integer");
      }
      field = value.get<std::size_t>();
    };
    if (key == "embed_dim") size(c.embed_dim);
    else if (key == "hidden_size") size(c.hidden_size);
    else if (key == "layers") size(c.layers);
    else if (key == "attention_size") size(c.attention_size);
    else if (key == "mlp_size") size(c.mlp_size);
    else if (key == "vocab_cap") size(c.vocab_cap);
    else if (key == "max_context_words") size(c.max_context_words);
    else if (key == "dropout") {
      if (!value.is_number()) throw std::invalid_argument("model.dropout must be a number");
      c.dropout = value.get<double>();
    } else if (key == "eval_manager") {
      const auto s = value.is_string() ? value.get<std::string>() : "";
      if (s == "argmax") c.eval_manager = EvalManager::argmax;
      else if (s == "sample") c.eval_manager = EvalManager::sample;
      else throw std::invalid_argument("model.eval_manager must be \"argmax\" or \"sample\"");
    } else {
      throw std::invalid_argument("model: unknown field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

}  // namespace kgdial::model
