// SPDX-License-Identifier: Apache-2.0
#include "kgdial/training/stages.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "kgdial/data/batch.hpp"
#include "kgdial/data/text.hpp"

namespace kgdial::training {

using ad::Group;
using model::LossMode;
using model::Model;
using model::NllOptions;
using model::Tape;
using model::Tensor;
using nlohmann::json;

const char* stage_name(StageId s) {
  switch (s) {
    case StageId::context: return "context";
    case StageId::lm: return "lm";
    case StageId::knowledge_encoder: return "knowledge_encoder";
    case StageId::grounded: return "grounded";
  }
  return "?";
}

std::optional<StageId> parse_stage(const std::string& name) {
  for (auto s : {StageId::context, StageId::lm, StageId::knowledge_encoder, StageId::grounded}) {
    if (name == stage_name(s)) return s;
  }
  return std::nullopt;
}

std::vector<Group> stage_groups(StageId stage, bool fine_tune) {
  switch (stage) {
    case StageId::context:
      return {Group::theta_e, Group::theta_d, Group::theta_s,
              Group::theta_v, Group::theta_g, Group::theta_o};
    case StageId::lm:
      return {Group::theta_l, Group::theta_ol};
    case StageId::knowledge_encoder:
      return {Group::theta_k};
    case StageId::grounded:
      if (fine_tune) return {ad::kAllGroups.begin(), ad::kAllGroups.end()};
      return {Group::theta_s_prime, Group::theta_v_prime, Group::theta_g_prime, Group::theta_pi};
  }
  return {};
}

void StageConfig::validate() const {
  if (max_steps == 0) throw std::invalid_argument("stage.max_steps must be > 0");
  if (batch_size == 0) throw std::invalid_argument("stage.batch_size must be > 0");
  if (eval_every == 0) throw std::invalid_argument("stage.eval_every must be > 0");
  if (std::none_of(enabled.begin(), enabled.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("stage: ablating all three components leaves nothing to decode");
  }
}

std::vector<StageId> missing_prerequisites(const Model& model, StageId stage,
                                           const SkipPretrain& skip) {
  std::vector<StageId> missing;
  auto need = [&](StageId s, bool skipped) {
    if (!skipped && !model.provenance().count(stage_name(s))) missing.push_back(s);
  };
  if (stage == StageId::lm) need(StageId::context, skip.context);
  if (stage == StageId::grounded) {
    need(StageId::context, skip.context);
    need(StageId::lm, skip.lm);
    need(StageId::knowledge_encoder, skip.knowledge);
  }
  return missing;
}

namespace {

struct LoopSpec {
  StageId stage;
  std::size_t n_train = 0;
  std::vector<Group> groups;
  std::function<Tensor(Tape&, std::size_t index, std::size_t step, Rng&)> loss;
  std::function<double()> validate;  // empty without validation data
  std::vector<ad::ParameterRegistry*> extra;
  bool uses_tau = false;
};

void check_prerequisites(const Model& model, StageId stage, const SkipPretrain& skip) {
  const auto missing = missing_prerequisites(model, stage, skip);
  if (missing.empty()) return;
  std::string names;
  for (auto s : missing) names += std::string(names.empty() ? "" : ", ") + stage_name(s);
  throw std::invalid_argument(std::string("stage ") + stage_name(stage) +
                              " needs completed stages: " + names);
}

StageReport run_loop(Model& model, const LoopSpec& spec, const StageConfig& cfg,
                     const ScheduleConfig& sched, std::uint64_t seed, const MetricsSink& sink) {
  cfg.validate();
  sched.validate();
  if (spec.n_train == 0) {
    throw std::invalid_argument(std::string("stage ") + stage_name(spec.stage) +
                                ": empty training corpus");
  }
  auto& reg = model.registry();
  reg.freeze_all_except(spec.groups);
  reg.sync_requires_grad();
  std::vector<ad::ParameterRegistry*> regs{&reg};
  regs.insert(regs.end(), spec.extra.begin(), spec.extra.end());

  Rng root(seed);
  Rng order_rng = root.split(1);
  Rng noise = root.split(2);
  std::vector<std::size_t> order(spec.n_train);
  auto reshuffle = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.index(i)]);
  };
  reshuffle();
  std::size_t cursor = 0;

  Adam adam(cfg.adam);
  StageReport report;
  report.stage = spec.stage;
  report.best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot;
  std::size_t bad_evals = 0;
  const std::size_t batch = std::min(cfg.batch_size, spec.n_train);

  try {
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
      for (auto* r : regs) r->zero_grad();
      double total = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        if (cursor == order.size()) {
          reshuffle();
          cursor = 0;
        }
        const std::size_t idx = order[cursor++];
        Tape tape;
        Tensor loss = spec.loss(tape, idx, step, noise);
        total += loss.item();
        if (loss.requires_grad()) {
          tape.backward(tape.scale(loss, 1.0 / static_cast<double>(batch)));
        }
      }
      const double lr = lr_at(step, sched);
      adam.step(regs, lr);
      const double train_loss = total / static_cast<double>(batch);
      report.train_losses.push_back(train_loss);
      report.steps = step;

      json rec{{"stage", stage_name(spec.stage)}, {"step", step}, {"lr", lr},
               {"train_loss", train_loss}};
      if (spec.uses_tau) rec["tau"] = tau_at(step, sched);
      bool stop = false;
      if (spec.validate && (step % cfg.eval_every == 0 || step == cfg.max_steps)) {
        const double v = spec.validate();
        rec["val_loss"] = v;
        report.val_losses.emplace_back(step, v);
        if (v < report.best_val) {
          report.best_val = v;
          report.best_step = step;
          best_snapshot = reg.snapshot();
          bad_evals = 0;
        } else if (cfg.patience > 0 && ++bad_evals >= cfg.patience) {
          stop = true;
        }
      }
      if (sink) sink(rec);
      if (stop) {
        report.early_stopped = true;
        break;
      }
    }
  } catch (...) {
    for (auto g : ad::kAllGroups) reg.set_frozen(g, false);
    reg.enable_all_grads();
    throw;
  }

  if (!best_snapshot.empty() && report.best_step != report.steps) reg.restore(best_snapshot);
  if (best_snapshot.empty()) report.best_val = 0.0;
  for (auto g : ad::kAllGroups) reg.set_frozen(g, false);
  reg.enable_all_grads();
  model.provenance()[stage_name(spec.stage)] = report.steps;
  return report;
}

template <typename Example, typename Encode>
std::vector<data::EncodedExample> encode_all(const std::vector<Example>& items, Encode encode) {
  std::vector<data::EncodedExample> out;
  out.reserve(items.size());
  for (const auto& it : items) out.push_back(encode(it));
  return out;
}

// Token-level NLL over an encoded set, without noise.
double mean_token_nll(const Model& model, const std::vector<data::EncodedExample>& set,
                      const NllOptions& opt) {
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : set) {
    Tape tape(Tape::Mode::inference);
    auto r = model::sequence_nll(tape, model, ex, opt, nullptr);
    nll += r.nll_sum;
    tokens += r.tokens;
  }
  return nll / static_cast<double>(tokens);
}

}  // namespace

StageReport stage_context(Model& model, const std::vector<data::UngroundedExample>& train,
                          const std::vector<data::UngroundedExample>& valid,
                          const StageConfig& cfg, const ScheduleConfig& sched,
                          std::uint64_t seed, const MetricsSink& sink) {
  const std::size_t limit = model.config().max_context_words;
  auto encode = [&](const data::UngroundedExample& ex) {
    return data::encode_ungrounded(ex, model.vocab(), limit);
  };
  const auto tr = encode_all(train, encode);
  const auto va = encode_all(valid, encode);
  NllOptions opt;
  opt.mode = LossMode::context_only;

  LoopSpec spec;
  spec.stage = StageId::context;
  spec.n_train = tr.size();
  spec.groups = stage_groups(StageId::context);
  spec.loss = [&](Tape& tape, std::size_t i, std::size_t, Rng&) {
    return model::sequence_nll(tape, model, tr[i], opt).loss;
  };
  if (!va.empty()) spec.validate = [&] { return mean_token_nll(model, va, opt); };
  return run_loop(model, spec, cfg, sched, seed, sink);
}

StageReport stage_lm(Model& model, const std::vector<data::Tokens>& train,
                     const std::vector<data::Tokens>& valid, const StageConfig& cfg,
                     const ScheduleConfig& sched, std::uint64_t seed, const MetricsSink& sink) {
  check_prerequisites(model, StageId::lm, cfg.skip);
  auto encode_nonempty = [&](const std::vector<data::Tokens>& items) {
    std::vector<data::EncodedExample> out;
    for (const auto& u : items) {
      if (!u.empty()) out.push_back(data::encode_utterance(u, model.vocab()));
    }
    return out;
  };
  const auto tr = encode_nonempty(train);
  const auto va = encode_nonempty(valid);
  NllOptions opt;
  opt.mode = LossMode::lm_only;

  LoopSpec spec;
  spec.stage = StageId::lm;
  spec.n_train = tr.size();
  spec.groups = stage_groups(StageId::lm);
  spec.loss = [&](Tape& tape, std::size_t i, std::size_t, Rng&) {
    return model::sequence_nll(tape, model, tr[i], opt).loss;
  };
  if (!va.empty()) spec.validate = [&] { return mean_token_nll(model, va, opt); };
  return run_loop(model, spec, cfg, sched, seed, sink);
}

void init_bilm_heads(BiLmHeads& heads, const Model& model, Rng& rng) {
  const std::size_t D = model.knowledge_dim() / 2, V = model.vocab_size();
  heads.fwd_w = heads.registry.add(Group::theta_k, "bilm.fwd.w", nn::init_matrix(D, V, rng));
  heads.fwd_b = heads.registry.add(Group::theta_k, "bilm.fwd.b", Tensor::zeros({1, V}));
  heads.bwd_w = heads.registry.add(Group::theta_k, "bilm.bwd.w", nn::init_matrix(D, V, rng));
  heads.bwd_b = heads.registry.add(Group::theta_k, "bilm.bwd.b", Tensor::zeros({1, V}));
}

Tensor bilm_document_loss(Tape& tape, const Model& model, const BiLmHeads& heads,
                          const data::EncodedExample& doc) {
  const std::size_t D = model.knowledge_dim() / 2, V = model.vocab_size();
  const auto enc = model.encode_knowledge(tape, doc.knowledge, doc.knowledge_ext);
  // [I; 0] and [0; I] pick the forward / backward halves of [fwd; bwd].
  Tensor sel_f = Tensor::zeros({2 * D, D}), sel_b = Tensor::zeros({2 * D, D});
  for (std::size_t i = 0; i < D; ++i) {
    sel_f.mutable_values()[i * D + i] = 1.0;
    sel_b.mutable_values()[(D + i) * D + i] = 1.0;
  }
  const Tensor zero_row = Tensor::zeros({1, D});
  std::vector<Tensor> terms;
  for (std::size_t s = 0; s < enc.hidden.size(); ++s) {
    const auto& words = doc.knowledge[s];
    const std::size_t l = words.size();
    Tensor states = tape.concat(enc.hidden[s], 0);  // l x 2D
    const Tensor fwd_parts[] = {zero_row, tape.matmul(states, sel_f)};
    const Tensor bwd_parts[] = {tape.matmul(states, sel_b), zero_row};
    std::vector<std::size_t> fwd_idx(l), bwd_idx(l);
    std::iota(fwd_idx.begin(), fwd_idx.end(), std::size_t{0});  // state before word t
    std::iota(bwd_idx.begin(), bwd_idx.end(), std::size_t{1});  // state after word t
    Tensor fwd_in = tape.gather_rows(tape.concat(fwd_parts, 0), fwd_idx);
    Tensor bwd_in = tape.gather_rows(tape.concat(bwd_parts, 0), bwd_idx);
    Tensor lp_f = tape.log(tape.softmax(tape.add(tape.matmul(fwd_in, heads.fwd_w), heads.fwd_b)));
    Tensor lp_b = tape.log(tape.softmax(tape.add(tape.matmul(bwd_in, heads.bwd_w), heads.bwd_b)));
    Tensor target = Tensor::zeros({l, V});
    for (std::size_t t = 0; t < l; ++t) target.mutable_values()[t * V + words[t]] = 1.0;
    terms.push_back(tape.sum(tape.mul(tape.add(lp_f, lp_b), target)));
  }
  return tape.scale(tape.sum(tape.concat(terms, 1)), -1.0);
}

StageReport stage_knowledge_encoder(Model& model, const std::vector<data::Document>& train,
                                    const std::vector<data::Document>& valid,
                                    const StageConfig& cfg, const ScheduleConfig& sched,
                                    std::uint64_t seed, const MetricsSink& sink) {
  std::size_t skipped = 0;
  auto encode_usable = [&](const std::vector<data::Document>& docs, bool count) {
    std::vector<data::EncodedExample> out;
    for (const auto& d : docs) {
      std::size_t words = 0;
      for (const auto& s : d.sentences) words += s.size();
      if (words < 2) {
        if (count) ++skipped;
        continue;
      }
      out.push_back(data::encode_document(d, model.vocab()));
    }
    return out;
  };
  const auto tr = encode_usable(train, true);
  const auto va = encode_usable(valid, false);

  BiLmHeads heads;
  Rng head_rng = Rng(seed).split(7);
  init_bilm_heads(heads, model, head_rng);

  LoopSpec spec;
  spec.stage = StageId::knowledge_encoder;
  spec.n_train = tr.size();
  spec.groups = stage_groups(StageId::knowledge_encoder);
  spec.extra = {&heads.registry};
  spec.loss = [&](Tape& tape, std::size_t i, std::size_t, Rng&) {
    return bilm_document_loss(tape, model, heads, tr[i]);
  };
  if (!va.empty()) {
    spec.validate = [&] {
      double total = 0.0;
      for (const auto& d : va) {
        Tape tape(Tape::Mode::inference);
        total += bilm_document_loss(tape, model, heads, d).item();
      }
      return total / static_cast<double>(va.size());
    };
  }
  auto report = run_loop(model, spec, cfg, sched, seed, sink);
  report.skipped = skipped;
  return report;
}

NllOptions grounded_train_options(const Model& model, const StageConfig& cfg,
                                  const ScheduleConfig& sched, std::size_t step) {
  NllOptions opt;
  opt.mode = LossMode::grounded;
  opt.manager = model::ManagerMode::gumbel;
  opt.tau = tau_at(step, sched);
  opt.enabled = cfg.enabled;
  opt.dropout = model.config().dropout;
  opt.weak_supervision = sched.weak_supervision;
  opt.modal_words = sched.modal_words;
  return opt;
}

StageReport stage_grounded(Model& model, const std::vector<data::GroundedExample>& train,
                           const std::vector<data::GroundedExample>& valid,
                           const StageConfig& cfg, const ScheduleConfig& sched,
                           std::uint64_t seed, const MetricsSink& sink) {
  cfg.validate();
  if (!cfg.fine_tune) check_prerequisites(model, StageId::grounded, cfg.skip);
  const std::size_t limit = model.config().max_context_words;
  auto encode = [&](const data::GroundedExample& ex) {
    return data::encode_grounded(ex, model.vocab(), limit);
  };
  const auto tr = encode_all(train, encode);
  const auto va = encode_all(valid, encode);

  auto groups = stage_groups(StageId::grounded, cfg.fine_tune);
  auto add = [&](StageId s) {
    for (auto g : stage_groups(s)) {
      if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
    }
  };
  if (cfg.skip.context) add(StageId::context);
  if (cfg.skip.lm) add(StageId::lm);
  if (cfg.skip.knowledge) add(StageId::knowledge_encoder);

  NllOptions val_opt;
  val_opt.mode = LossMode::grounded;
  val_opt.manager = model::ManagerMode::soft;
  val_opt.enabled = cfg.enabled;

  LoopSpec spec;
  spec.stage = StageId::grounded;
  spec.n_train = tr.size();
  spec.groups = groups;
  spec.uses_tau = true;
  spec.loss = [&](Tape& tape, std::size_t i, std::size_t step, Rng& rng) {
    return model::sequence_nll(tape, model, tr[i],
                               grounded_train_options(model, cfg, sched, step), &rng)
        .loss;
  };
  if (!va.empty()) spec.validate = [&] { return mean_token_nll(model, va, val_opt); };
  return run_loop(model, spec, cfg, sched, seed, sink);
}

}  // namespace kgdial::training
