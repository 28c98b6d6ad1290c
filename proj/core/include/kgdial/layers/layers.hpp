// SPDX-License-Identifier: Apache-2.0
//
// Recurrent and feed-forward building blocks. All vectors are 1 x n rows;
// weights map row inputs on the right (y = x W + b).

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgdial/autodiff/registry.hpp"
#include "kgdial/autodiff/tape.hpp"
#include "kgdial/common/rng.hpp"

namespace kgdial::nn {

using ad::Tape;
using ad::Tensor;

/// Standard GRU gates over the concatenated input [x; h_prev]:
///   z  = sigmoid([x; h] W_z + b_z)
///   r  = sigmoid([x; h] W_r + b_r)
///   h~ = tanh([x; r*h] W_h + b_h)
///   h' = (1 - z) * h + z * h~
struct GruParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Tensor w_z, b_z, w_r, b_r, w_h, b_h;
};

struct StackedGruParams {
  std::vector<GruParams> layers;
};

struct BiGruParams {
  GruParams forward;
  GruParams backward;
};

/// Additive scorer v . tanh(W_h h + W_s s + b); `v` is stored as a column.
struct AttentionParams {
  Tensor w_h;  // memory_dim x inner
  Tensor w_s;  // state_dim x inner
  Tensor b;    // 1 x inner
  Tensor v;    // inner x 1
};

enum class Activation { linear, tanh, sigmoid };
enum class Terminal { none, softmax, sigmoid };

struct FeedForwardParams {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::vector<Activation> activations;  // one per layer
  Terminal terminal = Terminal::none;
};

// --- construction ----------------------------------------------------------

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng);

GruParams make_gru(ad::ParameterRegistry& reg, ad::Group group,
                   const std::string& prefix, std::size_t input_size,
                   std::size_t hidden_size, Rng& rng);
StackedGruParams make_stacked_gru(ad::ParameterRegistry& reg, ad::Group group,
                                  const std::string& prefix,
                                  std::size_t input_size,
                                  std::size_t hidden_size, std::size_t layers,
                                  Rng& rng);
BiGruParams make_bigru(ad::ParameterRegistry& reg, ad::Group group,
                       const std::string& prefix, std::size_t input_size,
                       std::size_t hidden_per_direction, Rng& rng);
AttentionParams make_attention(ad::ParameterRegistry& reg, ad::Group group,
                               const std::string& prefix,
                               std::size_t memory_dim, std::size_t state_dim,
                               std::size_t inner, Rng& rng);
/// `sizes` lists input then each layer's output size.
FeedForwardParams make_feed_forward(ad::ParameterRegistry& reg,
                                    ad::Group group, const std::string& prefix,
                                    const std::vector<std::size_t>& sizes,
                                    const std::vector<Activation>& activations,
                                    Terminal terminal, Rng& rng);

// --- forward ---------------------------------------------------------------

Tensor gru_step(Tape& tape, const Tensor& x, const Tensor& h_prev,
                const GruParams& p);

struct StackedGruOutput {
  std::vector<Tensor> top;     // top-layer state per step
  std::vector<Tensor> finals;  // last state per layer
};

StackedGruOutput run_stacked_gru(Tape& tape, std::span<const Tensor> seq,
                                 std::span<const Tensor> init,
                                 const StackedGruParams& p);

/// One step of every layer; returns the new per-layer states.
std::vector<Tensor> stacked_gru_step(Tape& tape, const Tensor& x,
                                     std::span<const Tensor> prev,
                                     const StackedGruParams& p);

/// Position j of the output is [fwd_j ; bwd_j].
std::vector<Tensor> run_bigru(Tape& tape, std::span<const Tensor> seq,
                              const BiGruParams& p);

Tensor attention_score(Tape& tape, const Tensor& s, const Tensor& h,
                       const AttentionParams& p);

/// memory (L x d) -> memory W_h (L x inner); reusable across decoder steps.
Tensor project_memory(Tape& tape, const Tensor& memory,
                      const AttentionParams& p);

/// Scores of state `s` against every row of a projected memory; 1 x L.
Tensor attention_scores(Tape& tape, const Tensor& s,
                        const Tensor& projected_memory,
                        const AttentionParams& p);

/// Optional dropout on the network input, with a caller-owned mask.
struct InputDropout {
  Tensor mask;
  double rate = 0.0;
};

Tensor feed_forward(Tape& tape, const Tensor& x, const FeedForwardParams& p,
                    const std::optional<InputDropout>& dropout = std::nullopt);

Tensor average_pool(Tape& tape, std::span<const Tensor> vectors);

/// 0/1 mask with keep probability 1 - rate.
Tensor sample_dropout_mask(ad::Shape shape, double rate, Rng& rng);

}  // namespace kgdial::nn
