// SPDX-License-Identifier: Apache-2.0
//
// Run configuration file (JSON). Every section is optional:
//
//   {
//     "toy": true, "seed": 7, "out": "runs/toy",
//     "model": {...}, "schedule": {...},
//     "stages": {"context": {...}, "lm": {...}, "knowledge_encoder": {...}, "grounded": {...}},
//     "data": {"ungrounded": "...", "ungrounded_valid": "...", "documents": "...",
//              "documents_valid": "...", "grounded_train": "...", "grounded_valid": "...",
//              "grounded_test": "...", "embeddings": "..."},
//     "fine_tune": false,
//     "ablate": {"lm": false, "context": false, "knowledge": false},
//     "skip_pretrain": {"context": false, "lm": false, "knowledge": false},
//     "valid_fraction": 0.05
//   }
//
// Relative paths resolve against the directory holding the config file.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "kgdial/model/config.hpp"
#include "kgdial/training/schedule.hpp"
#include "kgdial/training/stages.hpp"

namespace kgdial::cli {

/// Invalid configuration; `what()` names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataPaths {
  std::string ungrounded;
  std::string ungrounded_valid;
  std::string documents;
  std::string documents_valid;
  std::string grounded_train;
  std::string grounded_valid;
  std::string grounded_test;
  std::string embeddings;
  bool operator==(const DataPaths&) const = default;
};

struct RunConfig {
  bool toy = false;
  std::uint64_t seed = 7;
  std::string out = "runs/default";
  model::ModelConfig model;
  training::ScheduleConfig schedule;
  training::StageConfig context;
  training::StageConfig lm;
  training::StageConfig knowledge_encoder;
  training::StageConfig grounded;
  DataPaths data;
  bool fine_tune = false;
  model::SourceMask enabled = model::kAllSources;  // false = ablated
  training::SkipPretrain skip;
  double valid_fraction = 0.05;  // held out when no *_valid file is given

  const training::StageConfig& stage(training::StageId id) const;
  training::StageConfig& stage(training::StageId id);

  /// Grounded-stage settings with the run-level flags applied.
  training::StageConfig grounded_stage() const;

  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const training::StageConfig& c);

/// Throws ConfigError naming the field. `base_dir` resolves relative paths.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);

/// Field-level checks, including that every referenced path exists.
void validate(const RunConfig& c);

/// CRC-32 of the canonical JSON form without "out", as 8 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace kgdial::cli
