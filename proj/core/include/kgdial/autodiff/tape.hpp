// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "kgdial/autodiff/tensor.hpp"

namespace kgdial::ad {

/// Extra arguments for primitives that need more than tensor operands.
struct PrimitiveAttrs {
  std::size_t axis = 1;                // concat: 0 stacks rows, 1 joins columns
  std::vector<std::size_t> indices;    // gather_rows / scatter_add
  std::size_t width = 0;               // scatter_add output width
  double rate = 0.0;                   // dropout probability
};

/// Ordered record of executed primitives.
///
/// An op is recorded only when one of its inputs requires a gradient, so the
/// record is topologically ordered by construction. A tape in inference mode
/// never records. Tapes are single-threaded; use one per thread.
///
/// Elementwise binary ops (add, sub, mul) broadcast 2-D: each operand
/// dimension must equal the output's or be 1.
class Tape {
 public:
  enum class Mode { record, inference };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor forward_primitive(OpId op, std::span<const Tensor> inputs,
                           const PrimitiveAttrs& attrs = {});

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  /// Softmax along each row.
  Tensor softmax(const Tensor& x);
  /// Rows of `table` at `indices`; repeated indices accumulate gradient.
  Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
  /// x * mask / (1 - rate) with a caller-supplied 0/1 mask.
  Tensor dropout(const Tensor& x, const Tensor& mask, double rate);
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor transpose(const Tensor& x);
  /// Row vector (1 x n) -> (1 x width) with y[targets[i]] += x[i].
  Tensor scatter_add(const Tensor& x, std::span<const std::size_t> targets,
                     std::size_t width);

  Tensor scale(const Tensor& x, double factor) {
    return mul(x, Tensor::scalar(factor));
  }
  /// 1 - x, elementwise.
  Tensor one_minus(const Tensor& x) { return sub(Tensor::scalar(1.0), x); }

  /// Accumulate d(root)/d(leaf) into every reachable requires-grad leaf.
  void backward(const Tensor& root);

  std::size_t size() const { return records_.size(); }
  bool recording() const { return mode_ == Mode::record; }
  void clear() { records_.clear(); }

 private:
  Tensor finish(std::shared_ptr<detail::Node> out,
                std::span<const Tensor> inputs);

  Mode mode_;
  std::vector<std::shared_ptr<detail::Node>> records_;
};

}  // namespace kgdial::ad
