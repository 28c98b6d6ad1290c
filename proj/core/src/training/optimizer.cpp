// SPDX-License-Identifier: Apache-2.0
#include "kgdial/training/optimizer.hpp"

#include <cmath>

namespace kgdial::training {

double Adam::step(std::span<ad::ParameterRegistry* const> regs, double lr) {
  std::vector<ad::NamedParameter*> live;
  for (auto* reg : regs) {
    for (auto g : ad::kAllGroups) {
      if (reg->frozen(g)) continue;
      for (auto* p : reg->group(g)) live.push_back(p);
    }
  }
  double sq = 0.0;
  for (auto* p : live) {
    if (!p->tensor.has_grad()) continue;
    for (double g : p->tensor.mutable_grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteGradient("non-finite gradient in '" + p->name + "'");
      }
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto* p : live) {
    auto values = p->tensor.mutable_values();
    auto& mom = moments_[p->tensor.node()];
    if (mom.m.empty()) {
      mom.m.assign(values.size(), 0.0);
      mom.v.assign(values.size(), 0.0);
    }
    const bool has = p->tensor.has_grad();
    std::span<double> grad = has ? p->tensor.mutable_grad() : std::span<double>{};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has ? grad[i] * clip : 0.0;
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  return norm;
}

}  // namespace kgdial::training
