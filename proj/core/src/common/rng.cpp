// SPDX-License-Identifier: Apache-2.0
#include "kgdial/common/rng.hpp"

#include <cmath>

namespace kgdial {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::open_uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  return n == 0 ? 0 : static_cast<std::size_t>(engine_() % n);
}

double Rng::gumbel() { return -std::log(-std::log(open_uniform())); }

Rng Rng::split(std::uint64_t stream) {
  std::uint64_t base = engine_();
  // splitmix64 finalizer decorrelates neighbouring stream ids
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

}  // namespace kgdial
