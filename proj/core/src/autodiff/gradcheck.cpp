// SPDX-License-Identifier: Apache-2.0
#include "kgdial/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kgdial::ad {

namespace {

double evaluate(const ScalarFn& f) {
  Tape tape(Tape::Mode::inference);
  return f(tape).item();
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& f, std::vector<Tensor> wrt,
                                  double eps, Stencil stencil) {
  std::vector<bool> saved_flags;
  for (auto& t : wrt) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }

  const double base = evaluate(f);
  if (evaluate(f) != base) {
    throw std::invalid_argument(
        "finite_diff_check: function is not deterministic (fix dropout masks "
        "and sampling noise)");
  }

  {
    Tape tape;
    Tensor y = f(tape);
    tape.backward(y);
  }

  GradCheckReport report;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    const std::vector<double> analytic = wrt[t].grad();
    auto values = wrt[t].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      auto at = [&](double h) {
        values[i] = orig + h;
        return evaluate(f);
      };
      double numeric = 0.0;
      if (stencil == Stencil::central) {
        numeric = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        numeric = (8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps))) / (12.0 * eps);
      }
      values[i] = orig;
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.elements;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = std::to_string(t) + "#" + std::to_string(i);
      }
    }
  }

  for (std::size_t t = 0; t < wrt.size(); ++t) {
    wrt[t].zero_grad();
    wrt[t].set_requires_grad(saved_flags[t]);
  }
  return report;
}

double finite_diff_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                         Tensor x, double eps) {
  return finite_diff_check([&](Tape& tape) { return f(tape, x); }, {x}, eps)
      .max_rel_error;
}

}  // namespace kgdial::ad
