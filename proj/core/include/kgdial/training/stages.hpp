// SPDX-License-Identifier: Apache-2.0
//
// The four training stages. Each stage freezes every parameter group outside
// its own set, runs Adam with the warmup / inverse-sqrt schedule, tracks the
// validation loss and restores the best parameters seen.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgdial/data/types.hpp"
#include "kgdial/model/decoder.hpp"
#include "kgdial/model/model.hpp"
#include "kgdial/training/optimizer.hpp"
#include "kgdial/training/schedule.hpp"

namespace kgdial::training {

enum class StageId { context, lm, knowledge_encoder, grounded };
const char* stage_name(StageId s);
std::optional<StageId> parse_stage(const std::string& name);

/// Groups updated by a stage. Grounded with fine_tune covers every group.
std::vector<ad::Group> stage_groups(StageId stage, bool fine_tune = false);

struct SkipPretrain {
  bool context = false;
  bool lm = false;
  bool knowledge = false;
  bool operator==(const SkipPretrain&) const = default;
};

struct StageConfig {
  std::size_t max_steps = 1000;
  std::size_t batch_size = 64;
  std::size_t eval_every = 100;
  /// Evaluations without improvement before stopping; 0 never stops early.
  std::size_t patience = 5;
  bool fine_tune = false;            // grounded only
  model::SourceMask enabled = model::kAllSources;  // grounded only
  SkipPretrain skip;                 // lm and grounded prerequisites
  AdamConfig adam;

  void validate() const;
  bool operator==(const StageConfig&) const = default;
};

/// Line-delimited metrics sink; receives one object per logged step.
using MetricsSink = std::function<void(const nlohmann::json&)>;

struct StageReport {
  StageId stage = StageId::context;
  std::size_t steps = 0;
  std::vector<double> train_losses;  // one per optimizer step
  std::vector<std::pair<std::size_t, double>> val_losses;
  double best_val = 0.0;
  std::size_t best_step = 0;
  bool early_stopped = false;
  std::size_t skipped = 0;  // documents with < 2 tokens (knowledge stage)
};

/// Groups whose parameters a stage would leave untrained, given which
/// stages already ran. Empty means the stage may run.
std::vector<StageId> missing_prerequisites(const model::Model& model, StageId stage,
                                           const SkipPretrain& skip);

StageReport stage_context(model::Model& model, const std::vector<data::UngroundedExample>& train,
                          const std::vector<data::UngroundedExample>& valid,
                          const StageConfig& cfg, const ScheduleConfig& sched,
                          std::uint64_t seed, const MetricsSink& sink = {});

/// Decoder runs over each utterance alone from a zero state.
StageReport stage_lm(model::Model& model, const std::vector<data::Tokens>& train,
                     const std::vector<data::Tokens>& valid, const StageConfig& cfg,
                     const ScheduleConfig& sched, std::uint64_t seed,
                     const MetricsSink& sink = {});

StageReport stage_knowledge_encoder(model::Model& model,
                                    const std::vector<data::Document>& train,
                                    const std::vector<data::Document>& valid,
                                    const StageConfig& cfg, const ScheduleConfig& sched,
                                    std::uint64_t seed, const MetricsSink& sink = {});

/// Full mixture with Gumbel manager plus weak supervision. Throws when all
/// three components are ablated.
StageReport stage_grounded(model::Model& model, const std::vector<data::GroundedExample>& train,
                           const std::vector<data::GroundedExample>& valid,
                           const StageConfig& cfg, const ScheduleConfig& sched,
                           std::uint64_t seed, const MetricsSink& sink = {});

/// Temporary next-word heads of the bidirectional language model. They
/// live outside the model registry and are discarded after the stage.
struct BiLmHeads {
  ad::ParameterRegistry registry;
  ad::Tensor fwd_w, fwd_b, bwd_w, bwd_b;  // K/2 x |V|, 1 x |V|
};
void init_bilm_heads(BiLmHeads& heads, const model::Model& model, Rng& rng);

/// Summed forward + backward negative log-likelihood of every word of every
/// sentence of an encoded document (sentences with one word still count).
model::Tensor bilm_document_loss(model::Tape& tape, const model::Model& model,
                                 const BiLmHeads& heads, const data::EncodedExample& doc);

/// Teacher-forced loss options used by the grounded stage at `step`.
model::NllOptions grounded_train_options(const model::Model& model, const StageConfig& cfg,
                                         const ScheduleConfig& sched, std::size_t step);

}  // namespace kgdial::training
