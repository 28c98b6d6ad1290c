// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgdial/cli/chat.hpp"
#include "kgdial/cli/checkpoint.hpp"
#include "kgdial/cli/cli.hpp"
#include "kgdial/cli/run_config.hpp"
#include "kgdial/common/error.hpp"
#include "kgdial/training/stages.hpp"
#include "test_util.hpp"

namespace kgdial::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using test::TempDir;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome kgdial(std::vector<std::string> args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = run(args, in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  std::vector<json> out;
  for (std::string line; std::getline(f, line);) out.push_back(json::parse(line));
  return out;
}

// --- checkpoint format ------------------------------------------------------

model::Model small_model(std::uint64_t seed = 5) {
  return model::Model(test::tiny_config(), test::letters_vocab(10), seed);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  auto m = small_model();
  m.provenance()["context"] = 12;
  const CheckpointMeta meta{"0badc0de", 5, "test"};
  const std::string first = serialize_checkpoint(make_checkpoint(m, meta));
  const auto ck = deserialize_checkpoint(first);
  EXPECT_EQ(ck.meta, meta);
  EXPECT_EQ(ck.provenance.at("context"), 12u);
  EXPECT_EQ(serialize_checkpoint(ck), first);
  auto rebuilt = model_from_checkpoint(ck);
  EXPECT_EQ(serialize_checkpoint(make_checkpoint(*rebuilt, meta)), first);

  TempDir dir("ckpt");
  save_checkpoint(ck, dir.file("a.kgd"));
  EXPECT_EQ(slurp(dir.file("a.kgd")), first);
  save_checkpoint(*model_from_checkpoint(load_checkpoint(dir.file("a.kgd"))), meta,
                  dir.file("b.kgd"));
  EXPECT_EQ(slurp(dir.file("b.kgd")), first);
}

TEST(Checkpoint, RebuiltModelKeepsConfigVocabularyAndValues) {
  auto m = small_model();
  auto r = model_from_checkpoint(make_checkpoint(m, {}));
  EXPECT_EQ(r->config(), m.config());
  EXPECT_EQ(r->vocab_size(), m.vocab_size());
  EXPECT_EQ(r->vocab().id("w3"), m.vocab().id("w3"));
  const auto& a = m.registry().parameters();
  const auto& b = r->registry().parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    for (std::size_t j = 0; j < a[i].tensor.size(); ++j) {
      EXPECT_EQ(b[i].tensor.values()[j], static_cast<double>(static_cast<float>(a[i].tensor.values()[j])));
    }
  }
}

std::string error_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(Checkpoint, CorruptionTruncationAndVersionAreDiagnosed) {
  const std::string good = serialize_checkpoint(make_checkpoint(small_model(), {}));
  auto payload = good;
  payload[payload.size() - 10] ^= 0x01;
  EXPECT_NE(error_of(payload).find("checksum mismatch in tensor"), std::string::npos)
      << error_of(payload);
  auto header = good;
  header[24] ^= 0x20;
  EXPECT_NE(error_of(header).find("header checksum"), std::string::npos) << error_of(header);
  EXPECT_NE(error_of(good.substr(0, good.size() - 3)).find("truncated"), std::string::npos);
  EXPECT_NE(error_of(good.substr(0, 10)).find("truncated"), std::string::npos);
  auto version = good;
  version[8] = 2;
  EXPECT_NE(error_of(version).find("version 2"), std::string::npos) << error_of(version);
  EXPECT_NE(error_of("not a checkpoint at all").find("magic"), std::string::npos);
  EXPECT_NE(error_of(good + "x").find("trailing"), std::string::npos);
}

TEST(Checkpoint, ShapeAndNameMismatchesAreRejected) {
  const auto good = make_checkpoint(small_model(), {});
  auto shape = good;
  shape.tensors[0].rows += 1;
  shape.tensors[0].values.resize(shape.tensors[0].rows * shape.tensors[0].cols);
  EXPECT_THROW(model_from_checkpoint(shape), FormatError);
  auto name = good;
  name.tensors[1].name = "bogus";
  EXPECT_THROW(model_from_checkpoint(name), FormatError);
  auto missing = good;
  missing.tensors.pop_back();
  EXPECT_THROW(model_from_checkpoint(missing), FormatError);
  auto group = good;
  group.tensors[0].group = group.tensors[0].group == ad::Group::theta_pi ? ad::Group::theta_e
                                                                         : ad::Group::theta_pi;
  EXPECT_THROW(model_from_checkpoint(group), FormatError);
}

TEST(Checkpoint, PartialCheckpointsFlagUntrainedGroups) {
  auto m = small_model();
  auto fresh = make_checkpoint(m, {});
  EXPECT_TRUE(fresh.partial());
  EXPECT_TRUE(fresh.trained_groups.empty());
  m.provenance()["context"] = 3;
  auto a = deserialize_checkpoint(serialize_checkpoint(make_checkpoint(m, {})));
  EXPECT_TRUE(a.partial());
  auto expect = training::stage_groups(training::StageId::context);
  std::sort(expect.begin(), expect.end());
  auto got = a.trained_groups;
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, expect);
  auto loaded = model_from_checkpoint(a);
  EXPECT_EQ(loaded->provenance().at("context"), 3u);
  for (const char* s : {"lm", "knowledge_encoder", "grounded"}) m.provenance()[s] = 1;
  EXPECT_FALSE(make_checkpoint(m, {}).partial());
}

TEST(Checkpoint, MissingFileIsRuntimeError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.kgd"), std::runtime_error);
}

// --- run configuration --------------------------------------------------------

std::string config_error(const json& j, const std::string& base = "") {
  try {
    validate(run_config_from_json(j, base));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, JsonRoundTripAndToyProfile) {
  const auto c = run_config_from_json(json{{"toy", true}, {"seed", 9}});
  EXPECT_EQ(c.model, model::ModelConfig::toy());
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(run_config_from_json(to_json(c)), c);
  EXPECT_EQ(run_config_from_json(json::object()).model, model::ModelConfig{});
}

TEST(RunConfig, FieldLevelDiagnostics) {
  EXPECT_NE(config_error({{"stages", {{"context", {{"bogus", 1}}}}}}).find("stages.context.bogus"),
            std::string::npos);
  EXPECT_NE(config_error({{"seed", "x"}}).find("seed"), std::string::npos);
  EXPECT_NE(config_error({{"stages", {{"warp", json::object()}}}}).find("stages.warp"),
            std::string::npos);
  EXPECT_NE(config_error({{"data", {{"ungrounded", "/nonexistent.jsonl"}}}}).find("data.ungrounded"),
            std::string::npos);
  EXPECT_NE(config_error({{"stages", {{"lm", {{"beta1", 1.5}}}}}}).find("stages.lm.beta1"),
            std::string::npos);
  EXPECT_NE(config_error({{"ablate", {{"lm", true}, {"context", true}, {"knowledge", true}}}}), "");
  EXPECT_EQ(config_error({{"toy", true}}), "");
}

TEST(RunConfig, RelativePathsResolveAgainstConfigDirectory) {
  TempDir dir("cfg");
  std::ofstream(dir.file("u.jsonl")) << "";
  std::ofstream(dir.file("c.json")) << json{{"data", {{"ungrounded", "u.jsonl"}}}}.dump();
  const auto c = load_run_config(dir.file("c.json"));
  EXPECT_EQ(fs::path(c.data.ungrounded), dir.path() / "u.jsonl");
}

TEST(RunConfig, HashIgnoresOutputDirectory) {
  auto a = run_config_from_json(json{{"toy", true}, {"out", "x"}});
  auto b = run_config_from_json(json{{"toy", true}, {"out", "y"}});
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 8u);
  b.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
}

// --- subcommands and exit codes -------------------------------------------------

TEST(Cli, UsageErrorsExitOne) {
  auto none = kgdial({});
  EXPECT_EQ(none.code, kUsage);
  auto unknown = kgdial({"frobnicate"});
  EXPECT_EQ(unknown.code, kUsage);
  auto flag = kgdial({"synth-data", "--no-such-flag"});
  EXPECT_EQ(flag.code, kUsage);
  EXPECT_NE(flag.err.find("Usage"), std::string::npos) << flag.err;
  EXPECT_EQ(kgdial({"evaluate", "--test", "t.jsonl"}).code, kUsage);
  EXPECT_EQ(kgdial({"generate", "--checkpoint"}).code, kUsage);
  auto help = kgdial({"--help"});
  EXPECT_EQ(help.code, kOk);
  for (const char* sub : {"synth-data", "pretrain-context", "pretrain-lm", "pretrain-knowledge",
                          "train-grounded", "evaluate", "generate", "chat"}) {
    EXPECT_NE(help.out.find(sub), std::string::npos) << sub;
  }
}

TEST(Cli, ConfigErrorsExitTwo) {
  TempDir dir("cfgerr");
  auto missing = kgdial({"pretrain-context", "--config", dir.file("nope.json")});
  EXPECT_EQ(missing.code, kConfig);
  EXPECT_NE(missing.err.find("--config"), std::string::npos);
  std::ofstream(dir.file("bad.json")) << R"({"stages": {"context": {"max_steps": -3}}})";
  auto bad = kgdial({"pretrain-context", "--config", dir.file("bad.json")});
  EXPECT_EQ(bad.code, kConfig);
  EXPECT_NE(bad.err.find("stages.context.max_steps"), std::string::npos) << bad.err;
  EXPECT_EQ(kgdial({"pretrain-context"}).code, kConfig);  // no corpus for a vocabulary
  EXPECT_EQ(kgdial({"synth-data"}).code, kConfig);
  EXPECT_EQ(kgdial({"synth-data", "--out", dir.file("s"), "--vocab", "3"}).code, kConfig);
}

// A complete toy run through every subcommand, shared by the tests below.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("pipeline");
    const std::string data = dir_->file("data");
    ASSERT_EQ(kgdial({"synth-data", "--seed", "3", "--out", data, "--grounded-train", "12",
                      "--grounded-valid", "4", "--grounded-test", "5", "--ungrounded", "60",
                      "--documents", "30", "--vocab", "60"})
                  .code,
              kOk);
    json cfg = json::parse(slurp(data + "/config.json"));
    const json stage = {{"max_steps", 6}, {"batch_size", 4}, {"eval_every", 3}};
    cfg["stages"] = {{"context", stage}, {"lm", stage}, {"knowledge_encoder", stage},
                     {"grounded", stage}};
    std::ofstream(data + "/run.json") << cfg.dump(2);
    config_ = data + "/run.json";
    std::string prev;
    for (const char* cmd :
         {"pretrain-context", "pretrain-lm", "pretrain-knowledge", "train-grounded"}) {
      std::vector<std::string> args = {cmd, "--config", config_, "--out", dir_->file(cmd)};
      if (!prev.empty()) args.insert(args.end(), {"--checkpoint", prev});
      const auto r = kgdial(args);
      ASSERT_EQ(r.code, kOk) << cmd << ": " << r.err;
      prev = dir_->file(cmd) + "/checkpoint.kgd";
    }
    final_ = prev;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static std::string ck(const std::string& stage) { return dir_->file(stage) + "/checkpoint.kgd"; }

  static TempDir* dir_;
  static std::string config_;
  static std::string final_;
};

TempDir* Pipeline::dir_ = nullptr;
std::string Pipeline::config_;
std::string Pipeline::final_;

TEST_F(Pipeline, EveryStageWritesCheckpointMetricsAndManifest) {
  const std::string hash = config_hash(load_run_config(config_));
  for (const char* cmd :
       {"pretrain-context", "pretrain-lm", "pretrain-knowledge", "train-grounded"}) {
    const auto m = json::parse(slurp(dir_->file(cmd) + "/manifest.json"));
    EXPECT_EQ(m["command"], cmd);
    EXPECT_EQ(m["seed"], 3);
    EXPECT_EQ(m["config_hash"], hash);
    EXPECT_EQ(m["build_id"], build_id());
    const auto metrics = read_jsonl(dir_->file(cmd) + "/metrics.jsonl");
    ASSERT_FALSE(metrics.empty()) << cmd;
    for (const auto& r : metrics) {
      EXPECT_EQ(r["config_hash"], hash);
      EXPECT_EQ(r["seed"], 3);
    }
    const auto c = load_checkpoint(ck(cmd));
    EXPECT_EQ(c.meta.config_hash, hash);
    EXPECT_EQ(c.meta.seed, 3u);
  }
  const auto last = load_checkpoint(final_);
  EXPECT_FALSE(last.partial());
  EXPECT_EQ(last.provenance.size(), 4u);
}

TEST_F(Pipeline, PretrainLmFromStageAChangesOnlyLanguageModelGroups) {
  const auto a = load_checkpoint(ck("pretrain-context"));
  const auto b = load_checkpoint(ck("pretrain-lm"));
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const bool lm = a.tensors[i].group == ad::Group::theta_l || a.tensors[i].group == ad::Group::theta_ol;
    if (lm) {
      EXPECT_NE(a.tensors[i].values, b.tensors[i].values) << a.tensors[i].name;
    } else {
      EXPECT_EQ(a.tensors[i].values, b.tensors[i].values) << a.tensors[i].name;
    }
  }
}

TEST_F(Pipeline, GroundedStageRequiresPretrainingOrExplicitSkip) {
  auto r = kgdial({"train-grounded", "--config", config_, "--checkpoint", ck("pretrain-context"),
                   "--out", dir_->file("g1")});
  EXPECT_EQ(r.code, kConfig);
  EXPECT_NE(r.err.find("lm"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("knowledge_encoder"), std::string::npos) << r.err;
  r = kgdial({"train-grounded", "--config", config_, "--checkpoint", ck("pretrain-context"),
              "--skip-pretrain", "lm,knowledge", "--out", dir_->file("g2")});
  EXPECT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(kgdial({"train-grounded", "--config", config_, "--ablate", "nothing"}).code, kConfig);
}

TEST_F(Pipeline, RerunReproducesCheckpointAndLossCurve) {
  auto r = kgdial({"pretrain-context", "--config", config_, "--out", dir_->file("again")});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(slurp(dir_->file("again") + "/checkpoint.kgd"), slurp(ck("pretrain-context")));
  EXPECT_EQ(slurp(dir_->file("again") + "/metrics.jsonl"),
            slurp(dir_->file("pretrain-context") + "/metrics.jsonl"));
  r = kgdial({"pretrain-context", "--config", config_, "--seed", "4", "--out", dir_->file("other")});
  ASSERT_EQ(r.code, kOk);
  EXPECT_NE(slurp(dir_->file("other") + "/checkpoint.kgd"), slurp(ck("pretrain-context")));
}

TEST_F(Pipeline, EvaluatePrintsOneMetricRecord) {
  auto r = kgdial({"evaluate", "--config", config_, "--checkpoint", final_});
  ASSERT_EQ(r.code, kOk) << r.err;
  ASSERT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["examples"], 5);
  EXPECT_GE(j["ppl"].get<double>(), 1.0);
  EXPECT_GE(j["f1"].get<double>(), 0.0);
  EXPECT_LE(j["f1"].get<double>(), 1.0);
  EXPECT_EQ(j["seed"], 3);
  EXPECT_TRUE(j.contains("bleu4"));
  EXPECT_TRUE(j.contains("config_hash"));
}

TEST_F(Pipeline, GenerateIsByteIdenticalAcrossRuns) {
  for (const char* d : {"gen1", "gen2"}) {
    auto r = kgdial({"generate", "--config", config_, "--checkpoint", final_, "--beam", "5", "--out",
                     dir_->file(d)});
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  const auto a = slurp(dir_->file("gen1") + "/generations.jsonl");
  EXPECT_EQ(a, slurp(dir_->file("gen2") + "/generations.jsonl"));
  const auto recs = read_jsonl(dir_->file("gen1") + "/generations.jsonl");
  ASSERT_EQ(recs.size(), 5u);
  for (const auto& rec : recs) {
    for (const char* key : {"context", "knowledge", "gold", "generated", "sources", "seed"}) {
      EXPECT_TRUE(rec.contains(key)) << key;
    }
  }
}

TEST_F(Pipeline, ChatReplaysDeterministically) {
  const std::string doc = dir_->file("data") + "/document.txt";
  const std::string script = "hello there\ntell me more\n/reset\nwhat about it\n/quit\n";
  auto a = kgdial({"chat", "--checkpoint", final_, "--document", doc, "--config", config_}, script);
  auto b = kgdial({"chat", "--checkpoint", final_, "--document", doc, "--config", config_}, script);
  ASSERT_EQ(a.code, kOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("[history cleared]"), std::string::npos);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '>'), 5);

  auto missing = kgdial({"chat", "--checkpoint", final_, "--document", dir_->file("none.txt")});
  EXPECT_EQ(missing.code, kConfig);
  EXPECT_EQ(kgdial({"chat", "--checkpoint", final_}).code, kUsage);
}

TEST_F(Pipeline, CorruptCheckpointIsRuntimeError) {
  std::string bytes = slurp(final_);
  bytes[bytes.size() - 20] ^= 0x40;
  std::ofstream(dir_->file("bad.kgd"), std::ios::binary) << bytes;
  auto r = kgdial({"evaluate", "--config", config_, "--checkpoint", dir_->file("bad.kgd")});
  EXPECT_EQ(r.code, kRuntime);
  EXPECT_NE(r.err.find("checksum"), std::string::npos) << r.err;
}

// --- chat session ---------------------------------------------------------------

TEST(Chat, HistoryResetAndTruncation) {
  auto m = small_model();
  data::Document doc;
  doc.sentences = {test::words("w1 w2 w3"), test::words("w4 omega")};
  model::GenerateOptions opt;
  opt.max_len = 4;
  ChatSession s(m, doc, opt);
  s.respond("w5 w6");
  EXPECT_GE(s.history().size(), 1u);
  EXPECT_EQ(s.history()[0], test::words("w5 w6"));
  s.reset();
  EXPECT_TRUE(s.history().empty());

  std::string long_turn;
  for (int i = 0; i < 50; ++i) long_turn += "w7 ";
  for (int t = 0; t < 4; ++t) s.respond(long_turn);
  std::size_t words = 0;
  for (const auto& u : s.visible_context()) words += u.size();
  EXPECT_LE(words, 128u);
  EXPECT_GE(words, 100u);
  EXPECT_THROW(s.respond("  "), std::invalid_argument);
}

TEST(Chat, RendersSourceTags) {
  model::GeneratedResponse r;
  r.tokens = {"hi", "omega"};
  r.sources = {model::Source::lm, model::Source::knowledge};
  EXPECT_EQ(render_with_sources(r), "hi[lm] omega[knowledge]");
}

TEST(Chat, DocumentLoading) {
  TempDir dir("doc");
  std::ofstream(dir.file("d.txt")) << "The sky is blue. Grass is green.\nWater is wet\n";
  std::ofstream(dir.file("e.txt")) << "\n\n";
  const auto d = load_text_document(dir.file("d.txt"));
  EXPECT_EQ(d.sentences.size(), 3u);
  EXPECT_THROW(load_text_document(dir.file("e.txt")), std::runtime_error);
  EXPECT_THROW(load_text_document(dir.file("none.txt")), std::runtime_error);
}

}  // namespace
}  // namespace kgdial::cli
