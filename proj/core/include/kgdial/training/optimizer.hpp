// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgdial/autodiff/registry.hpp"

namespace kgdial::training {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; 0 disables
  bool operator==(const AdamConfig&) const = default;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bias-corrected Adam over the unfrozen tensors of one or more registries.
/// Frozen tensors are neither read nor written and keep no moments.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Applies one update from the accumulated gradients and returns the
  /// global gradient norm before clipping. Throws NonFiniteGradient, naming
  /// the tensor, before touching any parameter if a gradient is NaN or inf.
  double step(ad::ParameterRegistry& reg, double lr) {
    ad::ParameterRegistry* regs[] = {&reg};
    return step(regs, lr);
  }
  double step(std::span<ad::ParameterRegistry* const> regs, double lr);

  std::size_t steps() const { return t_; }
  /// Number of tensors with optimizer state.
  std::size_t state_size() const { return moments_.size(); }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::unordered_map<const void*, Moments> moments_;
};

}  // namespace kgdial::training
