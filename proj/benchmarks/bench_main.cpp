// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "kgdial/autodiff/registry.hpp"
#include "kgdial/data/batch.hpp"
#include "kgdial/data/text.hpp"
#include "kgdial/layers/layers.hpp"
#include "kgdial/model/beam_search.hpp"
#include "kgdial/model/decoder.hpp"

namespace {

using namespace kgdial;

model::Model toy_model() {
  std::vector<std::string> toks;
  for (int i = 0; i < 196; ++i) toks.push_back("w" + std::to_string(i));
  return model::Model(model::ModelConfig::toy(), data::Vocabulary(toks), 1);
}

data::EncodedExample toy_example(const model::Model& m) {
  data::GroundedExample g;
  g.context = {data::tokenize("w1 w2 w3 w4 w5 w6"), data::tokenize("w7 w8 zeta w9")};
  for (int s = 0; s < 8; ++s) {
    data::Tokens sent;
    for (int w = 0; w < 12; ++w) sent.push_back("w" + std::to_string((s * 13 + w * 7) % 196));
    g.knowledge.push_back(sent);
  }
  g.response = data::tokenize("w3 w10 w11 zeta w12 w13 w14 w15");
  return data::encode_grounded(g, m.vocab());
}

void BM_GruStep(benchmark::State& state) {
  const auto h = static_cast<std::size_t>(state.range(0));
  ad::ParameterRegistry reg;
  Rng rng(1);
  const auto p = nn::make_gru(reg, ad::Group::theta_d, "gru", h, h, rng);
  const auto x = nn::init_matrix(1, h, rng);
  auto s = ad::Tensor::zeros({1, h});
  for (auto _ : state) {
    ad::Tape tape(ad::Tape::Mode::inference);
    s = nn::gru_step(tape, x, s, p);
    benchmark::DoNotOptimize(s.values().data());
  }
}
BENCHMARK(BM_GruStep)->Arg(32)->Arg(128)->Arg(512);

void BM_SequenceNllForward(benchmark::State& state) {
  const auto m = toy_model();
  const auto ex = toy_example(m);
  model::NllOptions opt;
  for (auto _ : state) {
    ad::Tape tape(ad::Tape::Mode::inference);
    Rng rng(3);
    benchmark::DoNotOptimize(model::sequence_nll(tape, m, ex, opt, &rng).nll_sum);
  }
}
BENCHMARK(BM_SequenceNllForward)->Unit(benchmark::kMicrosecond);

void BM_SequenceNllForwardBackward(benchmark::State& state) {
  auto m = toy_model();
  const auto ex = toy_example(m);
  model::NllOptions opt;
  opt.dropout = 0.1;
  opt.weak_supervision = 1.0;
  for (auto _ : state) {
    m.registry().zero_grad();
    ad::Tape tape;
    Rng rng(3);
    tape.backward(model::sequence_nll(tape, m, ex, opt, &rng).loss);
  }
}
BENCHMARK(BM_SequenceNllForwardBackward)->Unit(benchmark::kMicrosecond);

void BM_Generate(benchmark::State& state) {
  const auto m = toy_model();
  const auto ex = toy_example(m);
  model::GenerateOptions opt;
  opt.beam_size = static_cast<std::size_t>(state.range(0));
  opt.max_len = 16;
  for (auto _ : state) benchmark::DoNotOptimize(model::generate(m, ex, opt).log_prob);
}
BENCHMARK(BM_Generate)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
