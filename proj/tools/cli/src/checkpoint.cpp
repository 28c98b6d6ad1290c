// SPDX-License-Identifier: Apache-2.0
#include "kgdial/cli/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <zlib.h>

#include "kgdial/common/error.hpp"
#include "kgdial/training/stages.hpp"

namespace kgdial::cli {

namespace {

constexpr char kMagic[8] = {'K', 'G', 'D', 'C', 'K', 'P', 'T', '\0'};

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

template <class T>
void put(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <class T>
  T get(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(sizeof(T), what));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json header_json(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : ck.tensors) {
    tensors.push_back({{"name", t.name},
                       {"group", std::string(ad::group_name(t.group))},
                       {"rows", t.rows},
                       {"cols", t.cols}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (auto g : ck.trained_groups) groups.push_back(std::string(ad::group_name(g)));
  return {{"format_version", ck.version},
          {"model_config", model::to_json(ck.config)},
          {"vocabulary", ck.vocabulary},
          {"tensors", tensors},
          {"provenance", ck.provenance},
          {"trained_groups", groups},
          {"partial", ck.partial()},
          {"config_hash", ck.meta.config_hash},
          {"seed", ck.meta.seed},
          {"build_id", ck.meta.build_id}};
}

ad::Group group_from(const std::string& name) {
  auto g = ad::parse_group(name);
  if (!g) throw FormatError("checkpoint: unknown parameter group '" + name + "'");
  return *g;
}

}  // namespace

std::vector<ad::Group> trained_groups(const std::map<std::string, std::size_t>& provenance) {
  std::set<ad::Group> seen;
  for (const auto& [name, steps] : provenance) {
    (void)steps;
    auto stage = training::parse_stage(name);
    if (!stage) continue;
    // The grounded stage trains whatever the skipped stages left untouched.
    const auto groups = *stage == training::StageId::grounded
                            ? std::vector<ad::Group>(ad::kAllGroups.begin(), ad::kAllGroups.end())
                            : training::stage_groups(*stage);
    seen.insert(groups.begin(), groups.end());
  }
  return {seen.begin(), seen.end()};
}

Checkpoint make_checkpoint(const model::Model& model, const CheckpointMeta& meta) {
  Checkpoint ck;
  ck.config = model.config();
  ck.vocabulary = model.vocab().regular_tokens();
  for (const auto& p : model.registry().parameters()) {
    TensorRecord t;
    t.name = p.name;
    t.group = p.group;
    t.rows = p.tensor.rows();
    t.cols = p.tensor.cols();
    const auto v = p.tensor.values();
    t.values.assign(v.begin(), v.end());
    ck.tensors.push_back(std::move(t));
  }
  ck.provenance = model.provenance();
  ck.trained_groups = trained_groups(ck.provenance);
  ck.meta = meta;
  return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, ck.version);
  const std::string header = header_json(ck).dump();
  put<std::uint64_t>(out, header.size());
  out += header;
  put<std::uint32_t>(out, crc(header.data(), header.size()));
  for (const auto& t : ck.tensors) {
    if (t.values.size() != t.rows * t.cols) {
      throw std::invalid_argument("checkpoint: tensor '" + t.name + "' size mismatch");
    }
    const std::size_t start = out.size();
    for (float f : t.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    put<std::uint32_t>(out, crc(out.data() + start, out.size() - start));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Cursor in(bytes);
  if (std::memcmp(in.take(sizeof(kMagic), "magic"), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic (not a kgdial checkpoint)");
  }
  Checkpoint ck;
  ck.version = in.get<std::uint32_t>("version");
  if (ck.version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(ck.version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = in.get<std::uint64_t>("header length");
  if (header_len > bytes.size()) throw FormatError("checkpoint truncated while reading header");
  const char* hp = in.take(static_cast<std::size_t>(header_len), "header");
  const std::string header(hp, static_cast<std::size_t>(header_len));
  if (in.get<std::uint32_t>("header checksum") != crc(header.data(), header.size())) {
    throw FormatError("checkpoint: header checksum mismatch");
  }
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header);
    ck.config = model::model_config_from_json(h.at("model_config"));
    ck.vocabulary = h.at("vocabulary").get<std::vector<std::string>>();
    ck.provenance = h.at("provenance").get<std::map<std::string, std::size_t>>();
    for (const auto& g : h.at("trained_groups")) {
      ck.trained_groups.push_back(group_from(g.get<std::string>()));
    }
    ck.meta.config_hash = h.at("config_hash").get<std::string>();
    ck.meta.seed = h.at("seed").get<std::uint64_t>();
    ck.meta.build_id = h.at("build_id").get<std::string>();
    for (const auto& t : h.at("tensors")) {
      TensorRecord rec;
      rec.name = t.at("name").get<std::string>();
      rec.group = group_from(t.at("group").get<std::string>());
      rec.rows = t.at("rows").get<std::size_t>();
      rec.cols = t.at("cols").get<std::size_t>();
      ck.tensors.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: invalid header: ") + e.what());
  }
  for (auto& t : ck.tensors) {
    const std::size_t n = t.rows * t.cols;
    if (n > bytes.size() / 4) throw FormatError("checkpoint truncated in tensor '" + t.name + "'");
    const char* p = in.take(4 * n, ("tensor '" + t.name + "'").c_str());
    if (in.get<std::uint32_t>("tensor checksum") != crc(p, 4 * n)) {
      throw FormatError("checkpoint: checksum mismatch in tensor '" + t.name + "'");
    }
    t.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t u = 0;
      for (std::size_t b = 0; b < 4; ++b) {
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[4 * i + b])) << (8 * b);
      }
      t.values[i] = std::bit_cast<float>(u);
    }
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes after last tensor");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for checkpoint '" + path + "'");
}

void save_checkpoint(const model::Model& model, const CheckpointMeta& meta,
                     const std::string& path) {
  save_checkpoint(make_checkpoint(model, meta), path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize_checkpoint(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::unique_ptr<model::Model> model_from_checkpoint(const Checkpoint& ck) {
  auto m = std::make_unique<model::Model>(ck.config, data::Vocabulary(ck.vocabulary), ck.meta.seed);
  auto& reg = m->registry();
  if (ck.tensors.size() != reg.parameters().size()) {
    throw FormatError("checkpoint: expected " + std::to_string(reg.parameters().size()) +
                      " tensors, found " + std::to_string(ck.tensors.size()));
  }
  for (const auto& t : ck.tensors) {
    if (!reg.contains(t.name)) throw FormatError("checkpoint: unknown tensor '" + t.name + "'");
    if (reg.group_of(t.name) != t.group) {
      throw FormatError("checkpoint: tensor '" + t.name + "' is in the wrong group");
    }
    auto& dst = reg.get(t.name);
    if (dst.rows() != t.rows || dst.cols() != t.cols) {
      throw FormatError("checkpoint: tensor '" + t.name + "' has shape " +
                        std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                        ", config expects " + std::to_string(dst.rows()) + "x" +
                        std::to_string(dst.cols()));
    }
    std::copy(t.values.begin(), t.values.end(), dst.mutable_values().begin());
  }
  m->provenance() = ck.provenance;
  return m;
}

}  // namespace kgdial::cli
