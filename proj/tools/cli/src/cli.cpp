// SPDX-License-Identifier: Apache-2.0
#include "kgdial/cli/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "kgdial/cli/chat.hpp"
#include "kgdial/cli/checkpoint.hpp"
#include "kgdial/cli/run_config.hpp"
#include "kgdial/common/error.hpp"
#include "kgdial/data/corpus.hpp"
#include "kgdial/data/synth.hpp"
#include "kgdial/data/text.hpp"
#include "kgdial/data/vocabulary.hpp"
#include "kgdial/eval/evaluate.hpp"
#include "kgdial/training/stages.hpp"

#ifndef KGDIAL_BUILD_ID
#define KGDIAL_BUILD_ID "unknown"
#endif

namespace kgdial::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using training::StageId;

const char* build_id() { return KGDIAL_BUILD_ID; }

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  std::string checkpoint;
};

struct TrainFlags {
  bool fine_tune = false;
  std::vector<std::string> ablate;
  std::vector<std::string> skip;
};

struct EvalFlags {
  std::string test;
  std::string embeddings;
  std::size_t beam = 5;
  std::size_t max_len = 32;
  bool sample = false;
  bool discretized_ppl = false;
};

struct SynthFlags {
  std::size_t train = 128;
  std::size_t valid = 32;
  std::size_t test = 64;
  std::size_t ungrounded = 5000;
  std::size_t documents = 2000;
  std::size_t vocab = 200;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Random seed (overrides the config)");
  app->add_option("--config", c.config, "Run configuration (JSON)");
  app->add_option("--out", c.out, "Output directory");
}

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::exists(path)) throw ConfigError(flag + ": file not found: " + path);
}

RunConfig resolve_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    require_file(c.config, "--config");
    cfg = load_run_config(c.config);
  } else {
    cfg = run_config_from_json(json{{"toy", true}});
  }
  if (c.seed) cfg.seed = *c.seed;
  validate(cfg);
  return cfg;
}

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_tail(std::vector<T> all, double fraction,
                                                     const std::string& what) {
  if (all.size() < 2) throw ConfigError(what + ": need at least 2 records to hold out a validation split");
  auto n_valid = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(all.size())));
  n_valid = std::clamp<std::size_t>(n_valid, 1, all.size() - 1);
  std::vector<T> valid(all.end() - static_cast<std::ptrdiff_t>(n_valid), all.end());
  all.resize(all.size() - n_valid);
  return {std::move(all), std::move(valid)};
}

template <class T, class Loader>
std::pair<std::vector<T>, std::vector<T>> load_split(const std::string& train_path,
                                                     const std::string& valid_path,
                                                     double fraction, const std::string& field,
                                                     Loader load) {
  if (train_path.empty()) throw ConfigError("data." + field + ": required by this subcommand");
  auto train = load(train_path);
  if (!valid_path.empty()) return {std::move(train), load(valid_path)};
  return split_tail(std::move(train), fraction, "data." + field);
}

auto grounded_loader = [](const std::string& p) { return data::load_grounded(p); };
auto ungrounded_loader = [](const std::string& p) { return data::load_ungrounded(p); };
auto document_loader = [](const std::string& p) { return data::load_documents(p); };

data::Vocabulary build_vocabulary(const RunConfig& cfg) {
  data::VocabularyBuilder b;
  bool any = false;
  if (!cfg.data.ungrounded.empty()) {
    for (const auto& e : data::load_ungrounded(cfg.data.ungrounded)) b.add(e);
    any = true;
  }
  if (!cfg.data.documents.empty()) {
    for (const auto& d : data::load_documents(cfg.data.documents)) b.add(d);
    any = true;
  }
  if (!cfg.data.grounded_train.empty()) {
    for (const auto& e : data::load_grounded(cfg.data.grounded_train)) b.add(e);
    any = true;
  }
  if (!any) throw ConfigError("data: no training corpus configured to build a vocabulary from");
  return b.build(cfg.model.vocab_cap);
}

struct Loaded {
  std::unique_ptr<model::Model> model;
  CheckpointMeta source_meta;
};

Loaded load_model(const std::string& path) {
  require_file(path, "--checkpoint");
  auto ck = load_checkpoint(path);
  Loaded l;
  l.source_meta = ck.meta;
  l.model = model_from_checkpoint(ck);
  return l;
}

std::string out_dir(const Common& c, const RunConfig& cfg, const std::string& sub) {
  const fs::path dir = c.out.empty() ? fs::path(cfg.out) / sub : fs::path(c.out);
  fs::create_directories(dir);
  return dir.string();
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << j.dump(2) << "\n";
}

json manifest(const std::string& command, const RunConfig& cfg, const std::string& hash,
              const std::string& checkpoint_in) {
  return {{"command", command},     {"config", to_json(cfg)}, {"config_hash", hash},
          {"seed", cfg.seed},       {"build_id", build_id()}, {"checkpoint_in", checkpoint_in}};
}

class JsonlFile {
 public:
  explicit JsonlFile(const std::string& path) : f_(path, std::ios::trunc) {
    if (!f_) throw std::runtime_error("cannot write '" + path + "'");
  }
  void write(const json& j) { f_ << j.dump() << "\n" << std::flush; }

 private:
  std::ofstream f_;
};

// --- subcommands -------------------------------------------------------------

int cmd_synth(const Common& c, const SynthFlags& s, std::ostream& out) {
  if (c.out.empty()) throw ConfigError("--out: required for synth-data");
  const std::uint64_t seed = c.seed.value_or(7);
  data::SynthOptions o;
  o.seed = seed;
  o.vocab_size = s.vocab;
  o.n_grounded = s.train + s.valid + s.test;
  o.n_ungrounded = s.ungrounded;
  o.n_docs = s.documents;
  if (s.train == 0 || s.valid == 0 || s.test == 0) {
    throw ConfigError("--grounded-train/--grounded-valid/--grounded-test: must be > 0");
  }
  if (s.ungrounded < 2 || s.documents < 2) {
    throw ConfigError("--ungrounded/--documents: need at least 2 records");
  }
  data::SynthCorpus corpus;
  try {
    corpus = data::synth_copy_corpus(o);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synth-data: ") + e.what());
  }
  fs::create_directories(c.out);
  const fs::path dir(c.out);
  auto slice = [](const auto& v, std::size_t a, std::size_t b) {
    return std::vector<typename std::decay_t<decltype(v)>::value_type>(
        v.begin() + static_cast<std::ptrdiff_t>(a), v.begin() + static_cast<std::ptrdiff_t>(b));
  };
  const auto& g = corpus.grounded;
  data::write_corpus((dir / "grounded_train.jsonl").string(), slice(g, 0, s.train));
  data::write_corpus((dir / "grounded_valid.jsonl").string(), slice(g, s.train, s.train + s.valid));
  data::write_corpus((dir / "grounded_test.jsonl").string(), slice(g, s.train + s.valid, g.size()));
  const std::size_t u_valid = std::max<std::size_t>(1, s.ungrounded / 50);
  const std::size_t d_valid = std::max<std::size_t>(1, s.documents / 40);
  const auto& u = corpus.ungrounded;
  const auto& d = corpus.documents;
  data::write_corpus((dir / "ungrounded.jsonl").string(), slice(u, 0, u.size() - u_valid));
  data::write_corpus((dir / "ungrounded_valid.jsonl").string(), slice(u, u.size() - u_valid, u.size()));
  data::write_corpus((dir / "documents.jsonl").string(), slice(d, 0, d.size() - d_valid));
  data::write_corpus((dir / "documents_valid.jsonl").string(), slice(d, d.size() - d_valid, d.size()));
  {
    std::ofstream doc(dir / "document.txt");
    for (const auto& sent : g.back().knowledge) doc << data::join_tokens(sent) << "\n";
  }
  const json config = {{"toy", true},
                       {"seed", seed},
                       {"out", "run"},
                       {"data",
                        {{"ungrounded", "ungrounded.jsonl"},
                         {"ungrounded_valid", "ungrounded_valid.jsonl"},
                         {"documents", "documents.jsonl"},
                         {"documents_valid", "documents_valid.jsonl"},
                         {"grounded_train", "grounded_train.jsonl"},
                         {"grounded_valid", "grounded_valid.jsonl"},
                         {"grounded_test", "grounded_test.jsonl"}}}};
  write_json_file((dir / "config.json").string(), config);
  const RunConfig cfg = run_config_from_json(config, dir.string());
  write_json_file((dir / "manifest.json").string(),
                  manifest("synth-data", cfg, config_hash(cfg), ""));
  out << "wrote synthetic corpora to " << dir.string() << "\n";
  return kOk;
}

int cmd_train(const std::string& command, StageId stage, const Common& c, const TrainFlags& t,
              std::ostream& out) {
  RunConfig cfg = resolve_config(c);
  if (stage == StageId::grounded) {
    cfg.fine_tune = cfg.fine_tune || t.fine_tune;
    for (const auto& a : t.ablate) {
      if (a == "lm") cfg.enabled[0] = false;
      else if (a == "context") cfg.enabled[1] = false;
      else if (a == "knowledge") cfg.enabled[2] = false;
      else throw ConfigError("--ablate: unknown component '" + a + "'");
    }
    for (const auto& s : t.skip) {
      if (s == "context") cfg.skip.context = true;
      else if (s == "lm") cfg.skip.lm = true;
      else if (s == "knowledge") cfg.skip.knowledge = true;
      else throw ConfigError("--skip-pretrain: unknown stage '" + s + "'");
    }
    validate(cfg);
  }
  const std::string hash = config_hash(cfg);

  std::unique_ptr<model::Model> model;
  if (!c.checkpoint.empty()) {
    model = load_model(c.checkpoint).model;
  } else {
    model = std::make_unique<model::Model>(cfg.model, build_vocabulary(cfg), cfg.seed);
  }
  const training::SkipPretrain skip = stage == StageId::grounded ? cfg.skip : training::SkipPretrain{};
  const auto missing = training::missing_prerequisites(*model, stage, skip);
  if (!missing.empty()) {
    std::string names;
    for (auto s : missing) names += std::string(names.empty() ? "" : ", ") + training::stage_name(s);
    throw ConfigError(std::string(training::stage_name(stage)) +
                      ": checkpoint lacks pretraining stages: " + names +
                      " (pass --checkpoint from those stages or skip them)");
  }

  const std::string dir = out_dir(c, cfg, training::stage_name(stage));
  JsonlFile metrics((fs::path(dir) / "metrics.jsonl").string());
  const training::MetricsSink sink = [&](const json& rec) {
    json r = rec;
    r["config_hash"] = hash;
    r["seed"] = cfg.seed;
    metrics.write(r);
  };

  training::StageReport report;
  const auto& sched = cfg.schedule;
  switch (stage) {
    case StageId::context: {
      auto [tr, va] = load_split<data::UngroundedExample>(
          cfg.data.ungrounded, cfg.data.ungrounded_valid, cfg.valid_fraction, "ungrounded",
          ungrounded_loader);
      report = training::stage_context(*model, tr, va, cfg.context, sched, cfg.seed, sink);
      break;
    }
    case StageId::lm: {
      auto [tr, va] = load_split<data::UngroundedExample>(
          cfg.data.ungrounded, cfg.data.ungrounded_valid, cfg.valid_fraction, "ungrounded",
          ungrounded_loader);
      report = training::stage_lm(*model, data::derive_lm_corpus(tr), data::derive_lm_corpus(va),
                                  cfg.lm, sched, cfg.seed, sink);
      break;
    }
    case StageId::knowledge_encoder: {
      auto [tr, va] = load_split<data::Document>(cfg.data.documents, cfg.data.documents_valid,
                                                 cfg.valid_fraction, "documents", document_loader);
      report = training::stage_knowledge_encoder(*model, tr, va, cfg.knowledge_encoder, sched,
                                                 cfg.seed, sink);
      break;
    }
    case StageId::grounded: {
      auto [tr, va] = load_split<data::GroundedExample>(
          cfg.data.grounded_train, cfg.data.grounded_valid, cfg.valid_fraction, "grounded_train",
          grounded_loader);
      report = training::stage_grounded(*model, tr, va, cfg.grounded_stage(), sched, cfg.seed, sink);
      break;
    }
  }

  const CheckpointMeta meta{hash, cfg.seed, build_id()};
  const std::string ck_path = (fs::path(dir) / "checkpoint.kgd").string();
  save_checkpoint(*model, meta, ck_path);
  json m = manifest(command, cfg, hash, c.checkpoint);
  m["provenance"] = model->provenance();
  m["steps"] = report.steps;
  m["best_step"] = report.best_step;
  m["best_val"] = report.best_val;
  m["early_stopped"] = report.early_stopped;
  write_json_file((fs::path(dir) / "manifest.json").string(), m);
  out << training::stage_name(stage) << ": " << report.steps << " steps, best validation loss "
      << report.best_val << " at step " << report.best_step << "; checkpoint " << ck_path << "\n";
  return kOk;
}

model::GenerateOptions generate_options(const EvalFlags& e, std::uint64_t seed) {
  if (e.beam < 1) throw ConfigError("--beam: must be >= 1");
  if (e.max_len < 1) throw ConfigError("--max-len: must be >= 1");
  model::GenerateOptions g;
  g.beam_size = e.beam;
  g.max_len = e.max_len;
  g.manager = e.sample ? model::ManagerMode::sample : model::ManagerMode::argmax;
  g.seed = seed;
  return g;
}

std::string test_path(const EvalFlags& e, const RunConfig& cfg) {
  const std::string p = !e.test.empty() ? e.test : cfg.data.grounded_test;
  if (p.empty()) throw ConfigError("--test: required (or set data.grounded_test in --config)");
  require_file(p, "--test");
  return p;
}

json tag(json j, const std::string& hash, std::uint64_t seed) {
  j["config_hash"] = hash;
  j["seed"] = seed;
  return j;
}

int cmd_evaluate(const Common& c, const EvalFlags& e, std::ostream& out) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint: required for evaluate");
  const RunConfig cfg = resolve_config(c);
  auto loaded = load_model(c.checkpoint);
  const std::string hash = c.config.empty() ? loaded.source_meta.config_hash : config_hash(cfg);
  const auto test = data::load_grounded(test_path(e, cfg));
  std::optional<eval::EmbeddingTable> table;
  const std::string emb = !e.embeddings.empty() ? e.embeddings : cfg.data.embeddings;
  if (!emb.empty()) {
    require_file(emb, "--embeddings");
    table = eval::EmbeddingTable::load(emb);
  }
  eval::EvalOptions opts;
  opts.generate = generate_options(e, cfg.seed);
  opts.ppl.discretized = e.discretized_ppl;
  opts.embeddings = table ? &*table : nullptr;
  const auto result = eval::evaluate_model(*loaded.model, test, opts);
  json record = tag(eval::to_json(result.report), hash, cfg.seed);
  record["checkpoint"] = c.checkpoint;
  out << record.dump() << "\n";
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    JsonlFile((fs::path(c.out) / "eval.jsonl").string()).write(record);
    JsonlFile gens((fs::path(c.out) / "generations.jsonl").string());
    for (const auto& g : result.generations) gens.write(tag(eval::to_json(g), hash, cfg.seed));
    write_json_file((fs::path(c.out) / "manifest.json").string(),
                    manifest("evaluate", cfg, hash, c.checkpoint));
  }
  return kOk;
}

int cmd_generate(const Common& c, const EvalFlags& e, std::ostream& out) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint: required for generate");
  const RunConfig cfg = resolve_config(c);
  auto loaded = load_model(c.checkpoint);
  const std::string hash = c.config.empty() ? loaded.source_meta.config_hash : config_hash(cfg);
  const auto test = data::load_grounded(test_path(e, cfg));
  const auto gopts = generate_options(e, cfg.seed);
  std::unique_ptr<JsonlFile> file;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    file = std::make_unique<JsonlFile>((fs::path(c.out) / "generations.jsonl").string());
    write_json_file((fs::path(c.out) / "manifest.json").string(),
                    manifest("generate", cfg, hash, c.checkpoint));
  }
  const auto& m = *loaded.model;
  for (const auto& ex : test) {
    const auto enc = data::encode_grounded(ex, m.vocab(), m.config().max_context_words);
    const eval::GenerationRecord rec{ex, model::generate(m, enc, gopts)};
    const json j = tag(eval::to_json(rec), hash, cfg.seed);
    if (file) file->write(j);
    else out << j.dump() << "\n";
  }
  return kOk;
}

int cmd_chat(const Common& c, const std::string& document, const EvalFlags& e,
             std::istream& in, std::ostream& out) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint: required for chat");
  if (document.empty()) throw ConfigError("--document: required for chat");
  require_file(document, "--document");
  const RunConfig cfg = resolve_config(c);
  auto loaded = load_model(c.checkpoint);
  ChatSession session(*loaded.model, load_text_document(document), generate_options(e, cfg.seed));
  chat_loop(session, in, out);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Knowledge-grounded dialogue generation: staged training, evaluation, chat",
               "kgdial"};
  app.require_subcommand(1);

  Common common;
  TrainFlags train;
  EvalFlags ev;
  SynthFlags synth;
  std::string document;

  auto* synth_cmd = app.add_subcommand("synth-data", "Write the synthetic copy corpora and a toy config");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--grounded-train", synth.train, "Grounded training examples");
  synth_cmd->add_option("--grounded-valid", synth.valid, "Grounded validation examples");
  synth_cmd->add_option("--grounded-test", synth.test, "Grounded test examples");
  synth_cmd->add_option("--ungrounded", synth.ungrounded, "Ungrounded dialogues");
  synth_cmd->add_option("--documents", synth.documents, "Plain documents");
  synth_cmd->add_option("--vocab", synth.vocab, "Word types");

  std::vector<std::pair<CLI::App*, StageId>> stage_cmds;
  auto add_stage = [&](const char* name, const char* help, StageId id) {
    auto* sc = app.add_subcommand(name, help);
    add_common(sc, common);
    sc->add_option("--checkpoint", common.checkpoint, "Checkpoint to continue from");
    stage_cmds.emplace_back(sc, id);
    return sc;
  };
  add_stage("pretrain-context", "Stage A: context encoder and context processor", StageId::context);
  add_stage("pretrain-lm", "Stage B: language model head", StageId::lm);
  add_stage("pretrain-knowledge", "Stage C: knowledge encoder (bidirectional LM)",
            StageId::knowledge_encoder);
  auto* grounded_cmd =
      add_stage("train-grounded", "Stage D: knowledge processor and manager", StageId::grounded);
  grounded_cmd->add_flag("--fine-tune", train.fine_tune, "Also update pretrained groups");
  grounded_cmd->add_option("--ablate", train.ablate, "Disable components: lm, context, knowledge")
      ->delimiter(',');
  grounded_cmd->add_option("--skip-pretrain", train.skip,
                           "Pretraining stages to skip: context, lm, knowledge")
      ->delimiter(',');

  auto add_eval_flags = [&](CLI::App* sc) {
    add_common(sc, common);
    sc->add_option("--checkpoint", common.checkpoint, "Trained checkpoint")->required();
    sc->add_option("--beam", ev.beam, "Beam size");
    sc->add_option("--max-len", ev.max_len, "Maximum response length");
    sc->add_flag("--sample", ev.sample, "Sample the manager instead of taking its argmax");
  };
  auto* eval_cmd = app.add_subcommand("evaluate", "Perplexity, F1, BLEU and source statistics");
  add_eval_flags(eval_cmd);
  eval_cmd->add_option("--test", ev.test, "Grounded test corpus (JSONL)");
  eval_cmd->add_option("--embeddings", ev.embeddings, "Word vectors for embedding metrics");
  eval_cmd->add_flag("--discretized-ppl", ev.discretized_ppl, "Score PPL with the one-hot manager");
  auto* gen_cmd = app.add_subcommand("generate", "Beam-search responses for a test corpus");
  add_eval_flags(gen_cmd);
  gen_cmd->add_option("--test", ev.test, "Grounded test corpus (JSONL)");
  auto* chat_cmd = app.add_subcommand("chat", "Interactive conversation grounded on a document");
  add_eval_flags(chat_cmd);
  chat_cmd->add_option("--document", document, "Plain-text document, one or more sentences per line")
      ->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(common, synth, out);
    for (const auto& [sc, id] : stage_cmds) {
      if (sc->parsed()) return cmd_train(sc->get_name(), id, common, train, out);
    }
    if (eval_cmd->parsed()) return cmd_evaluate(common, ev, out);
    if (gen_cmd->parsed()) return cmd_generate(common, ev, out);
    if (chat_cmd->parsed()) return cmd_chat(common, document, ev, in, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  err << app.help();
  return kUsage;
}

}  // namespace kgdial::cli
