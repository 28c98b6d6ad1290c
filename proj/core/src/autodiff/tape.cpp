// SPDX-License-Identifier: Apache-2.0
#include "kgdial/autodiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kgdial/common/error.hpp"

namespace kgdial::ad {

using detail::Node;

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << rows << "," << cols << ")";
  return os.str();
}

const char* op_name(OpId op) {
  switch (op) {
    case OpId::leaf: return "leaf";
    case OpId::add: return "add";
    case OpId::sub: return "sub";
    case OpId::mul: return "mul";
    case OpId::matmul: return "matmul";
    case OpId::concat: return "concat";
    case OpId::tanh: return "tanh";
    case OpId::sigmoid: return "sigmoid";
    case OpId::exp: return "exp";
    case OpId::log: return "log";
    case OpId::softmax: return "softmax";
    case OpId::gather_rows: return "gather_rows";
    case OpId::dropout: return "dropout";
    case OpId::sum: return "sum";
    case OpId::mean: return "mean";
    case OpId::transpose: return "transpose";
    case OpId::scatter_add: return "scatter_add";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tensor

namespace {

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> values,
                                bool requires_grad) {
  if (shape.rows == 0 || shape.cols == 0) {
    throw ShapeError("tensor dimensions must be positive, got " + shape.str());
  }
  if (values.size() != shape.size()) {
    throw ShapeError("tensor " + shape.str() + " needs " +
                     std::to_string(shape.size()) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  return Tensor(make_node(shape, std::vector<double>(shape.size(), value),
                          requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  return Tensor(make_node(shape, std::move(values), requires_grad));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  Shape s{1, values.size()};
  return Tensor(make_node(s, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_node({1, 1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on non-scalar tensor " + shape().str());
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(size(), 0.0);
  return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(make_node(shape(), node_->value, requires_grad));
}

// ---------------------------------------------------------------------------
// Forward ops

namespace {

Shape broadcast_shape(const Shape& a, const Shape& b, OpId op) {
  auto dim = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op_name(op)) + ": cannot broadcast " +
                     a.str() + " with " + b.str());
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline std::size_t bidx(const Shape& s, std::size_t r, std::size_t c) {
  return (s.rows == 1 ? 0 : r) * s.cols + (s.cols == 1 ? 0 : c);
}

std::shared_ptr<Node> blank(Shape shape, OpId op) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value.assign(shape.size(), 0.0);
  node->op = op;
  return node;
}

template <typename F>
std::shared_ptr<Node> elementwise_binary(const Tensor& a, const Tensor& b,
                                         OpId op, F f) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  Shape so = broadcast_shape(sa, sb, op);
  auto out = blank(so, op);
  auto va = a.values();
  auto vb = b.values();
  if (sa == so && sb == so) {
    for (std::size_t i = 0; i < so.size(); ++i) out->value[i] = f(va[i], vb[i]);
    return out;
  }
  for (std::size_t r = 0; r < so.rows; ++r) {
    for (std::size_t c = 0; c < so.cols; ++c) {
      out->value[r * so.cols + c] = f(va[bidx(sa, r, c)], vb[bidx(sb, r, c)]);
    }
  }
  return out;
}

template <typename F>
std::shared_ptr<Node> elementwise_unary(const Tensor& x, OpId op, F f) {
  auto out = blank(x.shape(), op);
  auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) out->value[i] = f(v[i]);
  return out;
}

}  // namespace

Tensor Tape::finish(std::shared_ptr<Node> out, std::span<const Tensor> inputs) {
  bool needs = false;
  if (mode_ == Mode::record) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    out->requires_grad = true;
    out->inputs.reserve(inputs.size());
    for (const auto& t : inputs) out->inputs.push_back(t.node_);
    records_.push_back(out);
  }
  return Tensor(std::move(out));
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return finish(elementwise_binary(a, b, OpId::add,
                                   [](double x, double y) { return x + y; }),
                in);
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return finish(elementwise_binary(a, b, OpId::sub,
                                   [](double x, double y) { return x - y; }),
                in);
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  return finish(elementwise_binary(a, b, OpId::mul,
                                   [](double x, double y) { return x * y; }),
                in);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.cols != sb.rows) {
    throw ShapeError("matmul: inner dimensions differ, " + sa.str() + " x " +
                     sb.str());
  }
  auto out = blank({sa.rows, sb.cols}, OpId::matmul);
  auto va = a.values();
  auto vb = b.values();
  const std::size_t n = sb.cols;
  for (std::size_t i = 0; i < sa.rows; ++i) {
    double* orow = out->value.data() + i * n;
    for (std::size_t k = 0; k < sa.cols; ++k) {
      const double aik = va[i * sa.cols + k];
      if (aik == 0.0) continue;
      const double* brow = vb.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  const Tensor in[] = {a, b};
  return finish(std::move(out), in);
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  Shape so = parts[0].shape();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Shape& s = parts[i].shape();
    if (axis == 1) {
      if (s.rows != so.rows) {
        throw ShapeError("concat(axis=1): row counts differ, " + so.str() +
                         " vs " + s.str());
      }
      so.cols += s.cols;
    } else {
      if (s.cols != so.cols) {
        throw ShapeError("concat(axis=0): column counts differ, " + so.str() +
                         " vs " + s.str());
      }
      so.rows += s.rows;
    }
  }
  auto out = blank(so, OpId::concat);
  out->axis = axis;
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), out->value.begin() + off);
      off += p.size();
    }
  } else {
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t pc = p.cols();
      auto v = p.values();
      for (std::size_t r = 0; r < so.rows; ++r) {
        std::copy(v.begin() + r * pc, v.begin() + (r + 1) * pc,
                  out->value.begin() + r * so.cols + col);
      }
      col += pc;
    }
  }
  return finish(std::move(out), parts);
}

Tensor Tape::tanh(const Tensor& x) {
  const Tensor in[] = {x};
  return finish(
      elementwise_unary(x, OpId::tanh, [](double v) { return std::tanh(v); }),
      in);
}

Tensor Tape::sigmoid(const Tensor& x) {
  const Tensor in[] = {x};
  return finish(elementwise_unary(x, OpId::sigmoid,
                                  [](double v) {
                                    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
                                    const double e = std::exp(v);
                                    return e / (1.0 + e);
                                  }),
                in);
}

Tensor Tape::exp(const Tensor& x) {
  const Tensor in[] = {x};
  return finish(
      elementwise_unary(x, OpId::exp, [](double v) { return std::exp(v); }),
      in);
}

Tensor Tape::log(const Tensor& x) {
  for (double v : x.values()) {
    if (!(v > 0.0)) {
      throw DomainError("log: non-positive input " + std::to_string(v));
    }
  }
  const Tensor in[] = {x};
  return finish(
      elementwise_unary(x, OpId::log, [](double v) { return std::log(v); }),
      in);
}

Tensor Tape::softmax(const Tensor& x) {
  const Shape& s = x.shape();
  auto out = blank(s, OpId::softmax);
  auto v = x.values();
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double* in = v.data() + r * s.cols;
    double* o = out->value.data() + r * s.cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < s.cols; ++c) mx = std::max(mx, in[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < s.cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (std::size_t c = 0; c < s.cols; ++c) o[c] /= z;
  }
  const Tensor in[] = {x};
  return finish(std::move(out), in);
}

Tensor Tape::gather_rows(const Tensor& table,
                         std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  const Shape& s = table.shape();
  auto out = blank({indices.size(), s.cols}, OpId::gather_rows);
  auto v = table.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= s.rows) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) +
                       " out of range for table " + s.str());
    }
    std::copy(v.begin() + indices[i] * s.cols,
              v.begin() + (indices[i] + 1) * s.cols,
              out->value.begin() + i * s.cols);
  }
  out->indices.assign(indices.begin(), indices.end());
  const Tensor in[] = {table};
  return finish(std::move(out), in);
}

Tensor Tape::dropout(const Tensor& x, const Tensor& mask, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("dropout: rate must lie in [0, 1)");
  }
  if (!(x.shape() == mask.shape())) {
    throw ShapeError("dropout: mask " + mask.shape().str() +
                     " does not match input " + x.shape().str());
  }
  auto out = blank(x.shape(), OpId::dropout);
  out->scale = 1.0 / (1.0 - rate);
  auto v = x.values();
  auto m = mask.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out->value[i] = v[i] * m[i] * out->scale;
  }
  const Tensor in[] = {x, mask};
  return finish(std::move(out), in);
}

Tensor Tape::sum(const Tensor& x) {
  auto out = blank({1, 1}, OpId::sum);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out->value[0] = acc;
  const Tensor in[] = {x};
  return finish(std::move(out), in);
}

Tensor Tape::mean(const Tensor& x) {
  auto out = blank({1, 1}, OpId::mean);
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  out->value[0] = acc / static_cast<double>(x.size());
  const Tensor in[] = {x};
  return finish(std::move(out), in);
}

Tensor Tape::transpose(const Tensor& x) {
  const Shape& s = x.shape();
  auto out = blank({s.cols, s.rows}, OpId::transpose);
  auto v = x.values();
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      out->value[c * s.rows + r] = v[r * s.cols + c];
    }
  }
  const Tensor in[] = {x};
  return finish(std::move(out), in);
}

Tensor Tape::scatter_add(const Tensor& x, std::span<const std::size_t> targets,
                         std::size_t width) {
  if (x.rows() != 1 || x.cols() != targets.size()) {
    throw ShapeError("scatter_add: input " + x.shape().str() +
                     " needs one target per column, got " +
                     std::to_string(targets.size()));
  }
  auto out = blank({1, width}, OpId::scatter_add);
  auto v = x.values();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= width) {
      throw ShapeError("scatter_add: target " + std::to_string(targets[i]) +
                       " outside width " + std::to_string(width));
    }
    out->value[targets[i]] += v[i];
  }
  out->indices.assign(targets.begin(), targets.end());
  const Tensor in[] = {x};
  return finish(std::move(out), in);
}

Tensor Tape::forward_primitive(OpId op, std::span<const Tensor> inputs,
                               const PrimitiveAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (inputs.size() != n) {
      throw ShapeError(std::string(op_name(op)) + ": expected " +
                       std::to_string(n) + " inputs, got " +
                       std::to_string(inputs.size()));
    }
  };
  switch (op) {
    case OpId::add: arity(2); return add(inputs[0], inputs[1]);
    case OpId::sub: arity(2); return sub(inputs[0], inputs[1]);
    case OpId::mul: arity(2); return mul(inputs[0], inputs[1]);
    case OpId::matmul: arity(2); return matmul(inputs[0], inputs[1]);
    case OpId::concat: return concat(inputs, attrs.axis);
    case OpId::tanh: arity(1); return tanh(inputs[0]);
    case OpId::sigmoid: arity(1); return sigmoid(inputs[0]);
    case OpId::exp: arity(1); return exp(inputs[0]);
    case OpId::log: arity(1); return log(inputs[0]);
    case OpId::softmax: arity(1); return softmax(inputs[0]);
    case OpId::gather_rows: arity(1); return gather_rows(inputs[0], attrs.indices);
    case OpId::dropout: arity(2); return dropout(inputs[0], inputs[1], attrs.rate);
    case OpId::sum: arity(1); return sum(inputs[0]);
    case OpId::mean: arity(1); return mean(inputs[0]);
    case OpId::transpose: arity(1); return transpose(inputs[0]);
    case OpId::scatter_add:
      arity(1);
      return scatter_add(inputs[0], attrs.indices, attrs.width);
    case OpId::leaf: break;
  }
  throw ShapeError("forward_primitive: leaf is not an operation");
}

// ---------------------------------------------------------------------------
// Backward

namespace {

// Accumulate a broadcast gradient g (shape so) into an operand of shape s.
void reduce_into(Node& in, const Shape& so, const std::vector<double>& g,
                 double (*weight)(std::size_t, const void*), const void* ctx) {
  in.ensure_grad();
  const Shape& s = in.shape;
  if (s == so) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      in.grad[i] += g[i] * (weight ? weight(i, ctx) : 1.0);
    }
    return;
  }
  for (std::size_t r = 0; r < so.rows; ++r) {
    for (std::size_t c = 0; c < so.cols; ++c) {
      const std::size_t o = r * so.cols + c;
      in.grad[bidx(s, r, c)] += g[o] * (weight ? weight(o, ctx) : 1.0);
    }
  }
}

struct MulCtx {
  const Node* other;
  Shape so;
};

double mul_weight(std::size_t o, const void* p) {
  const auto* ctx = static_cast<const MulCtx*>(p);
  const std::size_t r = o / ctx->so.cols;
  const std::size_t c = o % ctx->so.cols;
  return ctx->other->value[bidx(ctx->other->shape, r, c)];
}

void backprop(Node& n) {
  const std::vector<double>& g = n.grad;
  auto want = [](const std::shared_ptr<Node>& p) { return p->requires_grad; };

  switch (n.op) {
    case OpId::leaf: return;
    case OpId::add:
    case OpId::sub: {
      if (want(n.inputs[0])) reduce_into(*n.inputs[0], n.shape, g, nullptr, nullptr);
      if (want(n.inputs[1])) {
        if (n.op == OpId::add) {
          reduce_into(*n.inputs[1], n.shape, g, nullptr, nullptr);
        } else {
          std::vector<double> neg(g.size());
          for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
          reduce_into(*n.inputs[1], n.shape, neg, nullptr, nullptr);
        }
      }
      return;
    }
    case OpId::mul: {
      if (want(n.inputs[0])) {
        MulCtx ctx{n.inputs[1].get(), n.shape};
        reduce_into(*n.inputs[0], n.shape, g, mul_weight, &ctx);
      }
      if (want(n.inputs[1])) {
        MulCtx ctx{n.inputs[0].get(), n.shape};
        reduce_into(*n.inputs[1], n.shape, g, mul_weight, &ctx);
      }
      return;
    }
    case OpId::matmul: {
      Node& a = *n.inputs[0];
      Node& b = *n.inputs[1];
      const std::size_t m = a.shape.rows, k = a.shape.cols, cols = b.shape.cols;
      if (a.requires_grad) {
        a.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * cols;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* bk = b.value.data() + kk * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += gi[j] * bk[j];
            a.grad[i * k + kk] += acc;
          }
        }
      }
      if (b.requires_grad) {
        b.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * cols;
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a.value[i * k + kk];
            if (aik == 0.0) continue;
            double* bg = b.grad.data() + kk * cols;
            for (std::size_t j = 0; j < cols; ++j) bg[j] += aik * gi[j];
          }
        }
      }
      return;
    }
    case OpId::concat: {
      if (n.axis == 0) {
        std::size_t off = 0;
        for (auto& p : n.inputs) {
          if (p->requires_grad) {
            p->ensure_grad();
            for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += g[off + i];
          }
          off += p->value.size();
        }
      } else {
        std::size_t col = 0;
        const std::size_t oc = n.shape.cols;
        for (auto& p : n.inputs) {
          const std::size_t pc = p->shape.cols;
          if (p->requires_grad) {
            p->ensure_grad();
            for (std::size_t r = 0; r < n.shape.rows; ++r) {
              for (std::size_t c = 0; c < pc; ++c) {
                p->grad[r * pc + c] += g[r * oc + col + c];
              }
            }
          }
          col += pc;
        }
      }
      return;
    }
    case OpId::tanh: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        x.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      }
      return;
    }
    case OpId::sigmoid: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        x.grad[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      }
      return;
    }
    case OpId::exp: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i] * n.value[i];
      return;
    }
    case OpId::log: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i] / x.value[i];
      return;
    }
    case OpId::softmax: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      const std::size_t cols = n.shape.cols;
      for (std::size_t r = 0; r < n.shape.rows; ++r) {
        const double* y = n.value.data() + r * cols;
        const double* gr = g.data() + r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += gr[c] * y[c];
        for (std::size_t c = 0; c < cols; ++c) {
          x.grad[r * cols + c] += y[c] * (gr[c] - dot);
        }
      }
      return;
    }
    case OpId::gather_rows: {
      Node& t = *n.inputs[0];
      t.ensure_grad();
      const std::size_t cols = t.shape.cols;
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        double* dst = t.grad.data() + n.indices[i] * cols;
        const double* src = g.data() + i * cols;
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
      }
      return;
    }
    case OpId::dropout: {
      Node& x = *n.inputs[0];
      if (x.requires_grad) {
        x.ensure_grad();
        const Node& m = *n.inputs[1];
        for (std::size_t i = 0; i < g.size(); ++i) {
          x.grad[i] += g[i] * m.value[i] * n.scale;
        }
      }
      return;
    }
    case OpId::sum:
    case OpId::mean: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      const double d =
          n.op == OpId::sum ? g[0] : g[0] / static_cast<double>(x.value.size());
      for (double& v : x.grad) v += d;
      return;
    }
    case OpId::transpose: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      const std::size_t rows = x.shape.rows, cols = x.shape.cols;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          x.grad[r * cols + c] += g[c * rows + r];
        }
      }
      return;
    }
    case OpId::scatter_add: {
      Node& x = *n.inputs[0];
      x.ensure_grad();
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        x.grad[i] += g[n.indices[i]];
      }
      return;
    }
  }
}

}  // namespace

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " +
                     (root.defined() ? root.shape().str() : std::string("<undefined>")));
  }
  if (records_.empty()) throw ShapeError("backward: tape is empty");
  if (!root.requires_grad()) {
    throw ShapeError("backward: root does not depend on any requires-grad leaf");
  }
  root.node_->ensure_grad();
  root.node_->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    Node& n = **it;
    if (n.grad.empty()) continue;
    backprop(n);
  }
  // Interior gradients are not needed once propagated.
  for (auto& n : records_) {
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace kgdial::ad
