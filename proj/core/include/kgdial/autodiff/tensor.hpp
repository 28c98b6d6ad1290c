// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors with reverse-mode gradient storage.
//
// Every tensor is a row-major matrix (rows x cols); vectors are 1 x n rows
// and scalars are 1 x 1. A Tensor is a cheap shared handle: copying it
// aliases the same storage, which is how parameters are shared between the
// registry, the model, and the tape.

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kgdial::ad {

struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

enum class OpId {
  leaf,
  add,
  sub,
  mul,
  matmul,
  concat,
  tanh,
  sigmoid,
  exp,
  log,
  softmax,
  gather_rows,
  dropout,
  sum,
  mean,
  transpose,
  scatter_add,
};

const char* op_name(OpId op);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  OpId op = OpId::leaf;
  std::vector<std::shared_ptr<Node>> inputs;
  std::vector<std::size_t> indices;  // gather_rows / scatter_add targets
  double scale = 1.0;                // dropout keep-scale
  std::size_t axis = 0;              // concat axis

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const { return shape().size(); }
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }

  std::span<const double> values() const;
  /// Direct write access; used by optimizers and initializers, never by ops.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  /// Gradient accumulated so far; all zeros if nothing reached this tensor.
  std::vector<double> grad() const;
  bool has_grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Fresh leaf holding a copy of the values, detached from any history.
  Tensor clone(bool requires_grad = false) const;

  const detail::Node* node() const { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;

  friend class Tape;
};

}  // namespace kgdial::ad
