// SPDX-License-Identifier: Apache-2.0
#include "kgdial/layers/layers.hpp"

#include <algorithm>
#include <cmath>

#include "kgdial/common/error.hpp"

namespace kgdial::nn {

namespace {

void expect_row(const Tensor& t, std::size_t cols, const char* what) {
  if (t.rows() != 1 || t.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected (1," +
                     std::to_string(cols) + "), got " + t.shape().str());
  }
}

}  // namespace

Tensor init_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::from({rows, cols}, std::move(v));
}

GruParams make_gru(ad::ParameterRegistry& reg, ad::Group group,
                   const std::string& prefix, std::size_t input_size,
                   std::size_t hidden_size, Rng& rng) {
  GruParams p;
  p.input_size = input_size;
  p.hidden_size = hidden_size;
  const std::size_t in = input_size + hidden_size;
  p.w_z = reg.add(group, prefix + ".w_z", init_matrix(in, hidden_size, rng));
  p.b_z = reg.add(group, prefix + ".b_z", Tensor::zeros({1, hidden_size}));
  p.w_r = reg.add(group, prefix + ".w_r", init_matrix(in, hidden_size, rng));
  p.b_r = reg.add(group, prefix + ".b_r", Tensor::zeros({1, hidden_size}));
  p.w_h = reg.add(group, prefix + ".w_h", init_matrix(in, hidden_size, rng));
  p.b_h = reg.add(group, prefix + ".b_h", Tensor::zeros({1, hidden_size}));
  return p;
}

StackedGruParams make_stacked_gru(ad::ParameterRegistry& reg, ad::Group group,
                                  const std::string& prefix,
                                  std::size_t input_size,
                                  std::size_t hidden_size, std::size_t layers,
                                  Rng& rng) {
  if (layers == 0) throw ShapeError("stacked GRU needs at least one layer");
  StackedGruParams p;
  for (std::size_t l = 0; l < layers; ++l) {
    p.layers.push_back(make_gru(reg, group, prefix + "." + std::to_string(l),
                                l == 0 ? input_size : hidden_size, hidden_size,
                                rng));
  }
  return p;
}

BiGruParams make_bigru(ad::ParameterRegistry& reg, ad::Group group,
                       const std::string& prefix, std::size_t input_size,
                       std::size_t hidden_per_direction, Rng& rng) {
  BiGruParams p;
  p.forward = make_gru(reg, group, prefix + ".fwd", input_size,
                       hidden_per_direction, rng);
  p.backward = make_gru(reg, group, prefix + ".bwd", input_size,
                        hidden_per_direction, rng);
  return p;
}

AttentionParams make_attention(ad::ParameterRegistry& reg, ad::Group group,
                               const std::string& prefix,
                               std::size_t memory_dim, std::size_t state_dim,
                               std::size_t inner, Rng& rng) {
  AttentionParams p;
  p.w_h = reg.add(group, prefix + ".w_h", init_matrix(memory_dim, inner, rng));
  p.w_s = reg.add(group, prefix + ".w_s", init_matrix(state_dim, inner, rng));
  p.b = reg.add(group, prefix + ".b", Tensor::zeros({1, inner}));
  p.v = reg.add(group, prefix + ".v", init_matrix(inner, 1, rng));
  return p;
}

FeedForwardParams make_feed_forward(ad::ParameterRegistry& reg,
                                    ad::Group group, const std::string& prefix,
                                    const std::vector<std::size_t>& sizes,
                                    const std::vector<Activation>& activations,
                                    Terminal terminal, Rng& rng) {
  if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
    throw ShapeError("feed-forward: need n+1 sizes for n activations");
  }
  FeedForwardParams p;
  p.activations = activations;
  p.terminal = terminal;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::string name = prefix + "." + std::to_string(l);
    p.weights.push_back(
        reg.add(group, name + ".w", init_matrix(sizes[l], sizes[l + 1], rng)));
    p.biases.push_back(
        reg.add(group, name + ".b", Tensor::zeros({1, sizes[l + 1]})));
  }
  return p;
}

Tensor gru_step(Tape& tape, const Tensor& x, const Tensor& h_prev,
                const GruParams& p) {
  expect_row(x, p.input_size, "gru_step input");
  expect_row(h_prev, p.hidden_size, "gru_step hidden");
  const Tensor xh_parts[] = {x, h_prev};
  Tensor xh = tape.concat(xh_parts, 1);
  Tensor z = tape.sigmoid(tape.add(tape.matmul(xh, p.w_z), p.b_z));
  Tensor r = tape.sigmoid(tape.add(tape.matmul(xh, p.w_r), p.b_r));
  const Tensor xrh_parts[] = {x, tape.mul(r, h_prev)};
  Tensor xrh = tape.concat(xrh_parts, 1);
  Tensor cand = tape.tanh(tape.add(tape.matmul(xrh, p.w_h), p.b_h));
  // (1 - z) * h + z * h~  ==  h + z * (h~ - h)
  return tape.add(h_prev, tape.mul(z, tape.sub(cand, h_prev)));
}

std::vector<Tensor> stacked_gru_step(Tape& tape, const Tensor& x,
                                     std::span<const Tensor> prev,
                                     const StackedGruParams& p) {
  if (prev.size() != p.layers.size()) {
    throw ShapeError("stacked GRU: " + std::to_string(prev.size()) +
                     " initial states for " + std::to_string(p.layers.size()) +
                     " layers");
  }
  std::vector<Tensor> next;
  next.reserve(p.layers.size());
  Tensor input = x;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    input = gru_step(tape, input, prev[l], p.layers[l]);
    next.push_back(input);
  }
  return next;
}

StackedGruOutput run_stacked_gru(Tape& tape, std::span<const Tensor> seq,
                                 std::span<const Tensor> init,
                                 const StackedGruParams& p) {
  if (seq.empty()) throw ShapeError("run_stacked_gru: empty sequence");
  StackedGruOutput out;
  out.finals.assign(init.begin(), init.end());
  out.top.reserve(seq.size());
  for (const auto& x : seq) {
    out.finals = stacked_gru_step(tape, x, out.finals, p);
    out.top.push_back(out.finals.back());
  }
  return out;
}

std::vector<Tensor> run_bigru(Tape& tape, std::span<const Tensor> seq,
                              const BiGruParams& p) {
  if (seq.empty()) throw ShapeError("run_bigru: empty sequence");
  const std::size_t n = seq.size();
  std::vector<Tensor> fwd(n), bwd(n);
  Tensor h = Tensor::zeros({1, p.forward.hidden_size});
  for (std::size_t j = 0; j < n; ++j) {
    h = gru_step(tape, seq[j], h, p.forward);
    fwd[j] = h;
  }
  h = Tensor::zeros({1, p.backward.hidden_size});
  for (std::size_t j = n; j-- > 0;) {
    h = gru_step(tape, seq[j], h, p.backward);
    bwd[j] = h;
  }
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor parts[] = {fwd[j], bwd[j]};
    out.push_back(tape.concat(parts, 1));
  }
  return out;
}

Tensor attention_score(Tape& tape, const Tensor& s, const Tensor& h,
                       const AttentionParams& p) {
  expect_row(h, p.w_h.rows(), "attention memory");
  expect_row(s, p.w_s.rows(), "attention state");
  Tensor pre = tape.add(tape.add(tape.matmul(h, p.w_h), tape.matmul(s, p.w_s)),
                        p.b);
  return tape.matmul(tape.tanh(pre), p.v);
}

Tensor project_memory(Tape& tape, const Tensor& memory,
                      const AttentionParams& p) {
  if (memory.cols() != p.w_h.rows()) {
    throw ShapeError("attention memory width " + std::to_string(memory.cols()) +
                     " != " + std::to_string(p.w_h.rows()));
  }
  return tape.matmul(memory, p.w_h);
}

Tensor attention_scores(Tape& tape, const Tensor& s,
                        const Tensor& projected_memory,
                        const AttentionParams& p) {
  expect_row(s, p.w_s.rows(), "attention state");
  Tensor state = tape.add(tape.matmul(s, p.w_s), p.b);       // 1 x inner
  Tensor pre = tape.tanh(tape.add(projected_memory, state));  // L x inner
  return tape.transpose(tape.matmul(pre, p.v));              // 1 x L
}

Tensor feed_forward(Tape& tape, const Tensor& x, const FeedForwardParams& p,
                    const std::optional<InputDropout>& dropout) {
  if (x.rows() != 1 || x.cols() != p.weights.front().rows()) {
    throw ShapeError("feed_forward: input " + x.shape().str() +
                     " does not match first layer " +
                     p.weights.front().shape().str());
  }
  Tensor h = x;
  if (dropout && dropout->rate > 0.0) {
    h = tape.dropout(h, dropout->mask, dropout->rate);
  }
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    h = tape.add(tape.matmul(h, p.weights[l]), p.biases[l]);
    switch (p.activations[l]) {
      case Activation::linear: break;
      case Activation::tanh: h = tape.tanh(h); break;
      case Activation::sigmoid: h = tape.sigmoid(h); break;
    }
  }
  switch (p.terminal) {
    case Terminal::none: return h;
    case Terminal::softmax: return tape.softmax(h);
    case Terminal::sigmoid: return tape.sigmoid(h);
  }
  return h;
}

Tensor average_pool(Tape& tape, std::span<const Tensor> vectors) {
  if (vectors.empty()) throw ShapeError("average_pool: empty list");
  Tensor stacked = tape.concat(vectors, 0);  // n x d
  Tensor weights = Tensor::full({1, vectors.size()},
                                1.0 / static_cast<double>(vectors.size()));
  return tape.matmul(weights, stacked);
}

Tensor sample_dropout_mask(ad::Shape shape, double rate, Rng& rng) {
  std::vector<double> m(shape.size());
  for (double& v : m) v = rng.uniform() < rate ? 0.0 : 1.0;
  return Tensor::from(shape, std::move(m));
}

}  // namespace kgdial::nn
