// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "kgdial/autodiff/tape.hpp"

namespace kgdial::ad {

/// Builds a scalar on the given tape from tensors it captures.
using ScalarFn = std::function<Tensor(Tape&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t elements = 0;
  std::string worst;  // "tensor#index" of the worst element
};

enum class Stencil {
  central,        // (f(x+h) - f(x-h)) / 2h
  central_fourth  // five-point, O(h^4) truncation error
};

/// Compares reverse-mode gradients with central differences for every
/// element of `wrt`. Relative error per element is
///   |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
/// `f` must be deterministic (fixed dropout masks and Gumbel noise);
/// a function whose value changes between two identical calls is rejected.
GradCheckReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> wrt,
                                  double eps = 1e-5, Stencil stencil = Stencil::central);

/// Single-input convenience form returning only the max relative error.
double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                         Tensor x, double eps = 1e-5);

}  // namespace kgdial::ad
