// SPDX-License-Identifier: Apache-2.0
#include "kgdial/cli/run_config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <zlib.h>

namespace kgdial::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using training::StageConfig;
using training::StageId;

namespace {

// Toy-profile training defaults: short warmup and a larger step size so
// the four stages finish in seconds on one core.
training::ScheduleConfig toy_schedule() {
  training::ScheduleConfig s;
  s.base_lr = 5e-3;
  s.warmup_steps = 50;
  s.anneal_rate = 4e-3;
  return s;
}

StageConfig toy_stage(StageId id) {
  StageConfig s;
  s.max_steps = id == StageId::grounded ? 1000 : 600;
  s.batch_size = id == StageId::knowledge_encoder ? 8 : 16;
  s.eval_every = 25;
  s.patience = 4;
  return s;
}

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw ConfigError(field + ": " + msg);
}

bool get_bool(const json& v, const std::string& field) {
  if (!v.is_boolean()) fail(field, "expected true or false");
  return v.get<bool>();
}

bool is_non_negative_integer(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

std::size_t get_size(const json& v, const std::string& field) {
  if (!is_non_negative_integer(v)) fail(field, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double get_number(const json& v, const std::string& field) {
  if (!v.is_number()) fail(field, "expected a number");
  return v.get<double>();
}

std::string get_string(const json& v, const std::string& field) {
  if (!v.is_string()) fail(field, "expected a string");
  return v.get<std::string>();
}

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) fail(field, "expected an object");
}

StageConfig stage_from_json(const json& j, StageConfig c, const std::string& prefix) {
  require_object(j, prefix);
  for (const auto& [key, v] : j.items()) {
    const std::string field = prefix + "." + key;
    if (key == "max_steps") c.max_steps = get_size(v, field);
    else if (key == "batch_size") c.batch_size = get_size(v, field);
    else if (key == "eval_every") c.eval_every = get_size(v, field);
    else if (key == "patience") c.patience = get_size(v, field);
    else if (key == "beta1") c.adam.beta1 = get_number(v, field);
    else if (key == "beta2") c.adam.beta2 = get_number(v, field);
    else if (key == "eps") c.adam.eps = get_number(v, field);
    else if (key == "clip_norm") c.adam.clip_norm = get_number(v, field);
    else fail(field, "unknown field");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    fail(prefix, e.what());
  }
  if (c.adam.beta1 < 0 || c.adam.beta1 >= 1) fail(prefix + ".beta1", "must be in [0, 1)");
  if (c.adam.beta2 < 0 || c.adam.beta2 >= 1) fail(prefix + ".beta2", "must be in [0, 1)");
  if (!(c.adam.eps > 0)) fail(prefix + ".eps", "must be > 0");
  if (c.adam.clip_norm < 0) fail(prefix + ".clip_norm", "must be >= 0");
  return c;
}

std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || base_dir.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

}  // namespace

const StageConfig& RunConfig::stage(StageId id) const {
  switch (id) {
    case StageId::context: return context;
    case StageId::lm: return lm;
    case StageId::knowledge_encoder: return knowledge_encoder;
    case StageId::grounded: return grounded;
  }
  return grounded;
}

StageConfig& RunConfig::stage(StageId id) {
  return const_cast<StageConfig&>(std::as_const(*this).stage(id));
}

StageConfig RunConfig::grounded_stage() const {
  StageConfig s = grounded;
  s.fine_tune = fine_tune;
  s.enabled = enabled;
  s.skip = skip;
  return s;
}

json to_json(const StageConfig& c) {
  return {{"max_steps", c.max_steps}, {"batch_size", c.batch_size},
          {"eval_every", c.eval_every}, {"patience", c.patience},
          {"beta1", c.adam.beta1},       {"beta2", c.adam.beta2},
          {"eps", c.adam.eps},           {"clip_norm", c.adam.clip_norm}};
}

json to_json(const RunConfig& c) {
  return {
      {"toy", c.toy},
      {"seed", c.seed},
      {"out", c.out},
      {"model", model::to_json(c.model)},
      {"schedule", training::to_json(c.schedule)},
      {"stages",
       {{"context", to_json(c.context)},
        {"lm", to_json(c.lm)},
        {"knowledge_encoder", to_json(c.knowledge_encoder)},
        {"grounded", to_json(c.grounded)}}},
      {"data",
       {{"ungrounded", c.data.ungrounded},
        {"ungrounded_valid", c.data.ungrounded_valid},
        {"documents", c.data.documents},
        {"documents_valid", c.data.documents_valid},
        {"grounded_train", c.data.grounded_train},
        {"grounded_valid", c.data.grounded_valid},
        {"grounded_test", c.data.grounded_test},
        {"embeddings", c.data.embeddings}}},
      {"fine_tune", c.fine_tune},
      {"ablate",
       {{"lm", !c.enabled[0]}, {"context", !c.enabled[1]}, {"knowledge", !c.enabled[2]}}},
      {"skip_pretrain",
       {{"context", c.skip.context}, {"lm", c.skip.lm}, {"knowledge", c.skip.knowledge}}},
      {"valid_fraction", c.valid_fraction},
  };
}

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  require_object(j, "config");
  RunConfig c;
  if (j.contains("toy")) c.toy = get_bool(j.at("toy"), "toy");
  if (c.toy) {
    c.model = model::ModelConfig::toy();
    c.schedule = toy_schedule();
    c.context = toy_stage(StageId::context);
    c.lm = toy_stage(StageId::lm);
    c.knowledge_encoder = toy_stage(StageId::knowledge_encoder);
    c.grounded = toy_stage(StageId::grounded);
  }
  for (const auto& [key, v] : j.items()) {
    if (key == "toy") continue;
    if (key == "seed") {
      if (!is_non_negative_integer(v)) fail("seed", "expected a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "out") {
      c.out = resolve(get_string(v, "out"), base_dir);
    } else if (key == "model") {
      try {
        c.model = model::model_config_from_json(v, c.model);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "schedule") {
      try {
        c.schedule = training::schedule_config_from_json(v, c.schedule);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "stages") {
      require_object(v, "stages");
      for (const auto& [name, sv] : v.items()) {
        auto id = training::parse_stage(name);
        if (!id) fail("stages." + name, "unknown stage");
        c.stage(*id) = stage_from_json(sv, c.stage(*id), "stages." + name);
      }
    } else if (key == "data") {
      require_object(v, "data");
      for (const auto& [name, pv] : v.items()) {
        const std::string p = resolve(get_string(pv, "data." + name), base_dir);
        if (name == "ungrounded") c.data.ungrounded = p;
        else if (name == "ungrounded_valid") c.data.ungrounded_valid = p;
        else if (name == "documents") c.data.documents = p;
        else if (name == "documents_valid") c.data.documents_valid = p;
        else if (name == "grounded_train") c.data.grounded_train = p;
        else if (name == "grounded_valid") c.data.grounded_valid = p;
        else if (name == "grounded_test") c.data.grounded_test = p;
        else if (name == "embeddings") c.data.embeddings = p;
        else fail("data." + name, "unknown field");
      }
    } else if (key == "fine_tune") {
      c.fine_tune = get_bool(v, "fine_tune");
    } else if (key == "ablate") {
      require_object(v, "ablate");
      for (const auto& [name, bv] : v.items()) {
        const bool off = get_bool(bv, "ablate." + name);
        if (name == "lm") c.enabled[0] = !off;
        else if (name == "context") c.enabled[1] = !off;
        else if (name == "knowledge") c.enabled[2] = !off;
        else fail("ablate." + name, "unknown component");
      }
    } else if (key == "skip_pretrain") {
      require_object(v, "skip_pretrain");
      for (const auto& [name, bv] : v.items()) {
        const bool skip = get_bool(bv, "skip_pretrain." + name);
        if (name == "context") c.skip.context = skip;
        else if (name == "lm") c.skip.lm = skip;
        else if (name == "knowledge") c.skip.knowledge = skip;
        else fail("skip_pretrain." + name, "unknown stage");
      }
    } else if (key == "valid_fraction") {
      c.valid_fraction = get_number(v, "valid_fraction");
    } else {
      fail(key, "unknown field");
    }
  }
  if (!(c.valid_fraction > 0.0 && c.valid_fraction < 1.0)) {
    fail("valid_fraction", "must be in (0, 1)");
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return run_config_from_json(j, fs::path(path).parent_path().string());
}

void validate(const RunConfig& c) {
  try {
    c.model.validate();
    c.schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (std::none_of(c.enabled.begin(), c.enabled.end(), [](bool b) { return b; })) {
    fail("ablate", "all three components are ablated");
  }
  auto check = [](const std::string& path, const std::string& field) {
    if (!path.empty() && !fs::exists(path)) fail(field, "file not found: " + path);
  };
  check(c.data.ungrounded, "data.ungrounded");
  check(c.data.ungrounded_valid, "data.ungrounded_valid");
  check(c.data.documents, "data.documents");
  check(c.data.documents_valid, "data.documents_valid");
  check(c.data.grounded_train, "data.grounded_train");
  check(c.data.grounded_valid, "data.grounded_valid");
  check(c.data.grounded_test, "data.grounded_test");
  check(c.data.embeddings, "data.embeddings");
}

std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("out");  // where artifacts land does not change them
  const std::string canon = j.dump();
  const auto h = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(canon.data()),
                       static_cast<uInt>(canon.size()));
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(h));
  return buf;
}

}  // namespace kgdial::cli
