// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace kgdial {

// Portable deterministic generator. Distributions are derived from raw
// mt19937_64 bits so draws are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1); never returns 0.
  double open_uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  /// Standard Gumbel(0, 1) sample: -log(-log(u)).
  double gumbel();
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream; the parent advances by one draw.
  Rng split(std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
};

}  // namespace kgdial
