// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format (all integers little-endian):
//
//   "KGDCKPT\0"  u32 version  u64 header_len  header (JSON, UTF-8)  u32 crc32(header)
//   per tensor, in header order:  rows*cols float32  u32 crc32(payload)
//
// The header holds the model config, vocabulary, tensor table, stage
// provenance, trained-group flags and the run metadata.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/autodiff/registry.hpp"
#include "kgdial/model/model.hpp"

namespace kgdial::cli {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string build_id;
  bool operator==(const CheckpointMeta&) const = default;
};

struct TensorRecord {
  std::string name;
  ad::Group group = ad::Group::theta_e;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  bool operator==(const TensorRecord&) const = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  model::ModelConfig config;
  std::vector<std::string> vocabulary;  // regular tokens in id order
  std::vector<TensorRecord> tensors;
  std::map<std::string, std::size_t> provenance;
  /// Groups written by at least one completed stage; the rest still hold
  /// their random initialization.
  std::vector<ad::Group> trained_groups;
  CheckpointMeta meta;

  bool partial() const { return trained_groups.size() < ad::kGroupCount; }
  bool operator==(const Checkpoint&) const = default;
};

/// Groups covered by the stages recorded in `provenance`.
std::vector<ad::Group> trained_groups(const std::map<std::string, std::size_t>& provenance);

Checkpoint make_checkpoint(const model::Model& model, const CheckpointMeta& meta);

std::string serialize_checkpoint(const Checkpoint& ck);
/// Throws FormatError on bad magic, unsupported version, truncation or a
/// checksum mismatch.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ck, const std::string& path);
void save_checkpoint(const model::Model& model, const CheckpointMeta& meta,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Builds a model from a checkpoint. Throws FormatError when a tensor is
/// missing, unknown, in the wrong group or of the wrong shape.
std::unique_ptr<model::Model> model_from_checkpoint(const Checkpoint& ck);

}  // namespace kgdial::cli
