// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "kgdial/autodiff/gradcheck.hpp"
#include "kgdial/autodiff/registry.hpp"
#include "kgdial/autodiff/tape.hpp"
#include "kgdial/common/error.hpp"
#include "test_util.hpp"

namespace kgdial::ad {
namespace {

using test::random_tensor;

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(Primitives, SoftmaxOfZerosIsUniform) {
  Tape tape;
  auto y = tape.softmax(Tensor::row({0, 0, 0}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Primitives, IdentityMatmul) {
  Tape tape;
  auto I = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto A = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(vals(tape.matmul(I, A)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Primitives, TanhSigmoidAtZero) {
  Tape tape;
  EXPECT_EQ(tape.tanh(Tensor::scalar(0)).item(), 0.0);
  EXPECT_EQ(tape.sigmoid(Tensor::scalar(0)).item(), 0.5);
}

TEST(Primitives, ElementwiseAndReductions) {
  Tape tape;
  auto a = Tensor::row({1, 2, 3});
  auto b = Tensor::row({4, 5, 6});
  EXPECT_EQ(vals(tape.add(a, b)), (std::vector<double>{5, 7, 9}));
  EXPECT_EQ(vals(tape.sub(a, b)), (std::vector<double>{-3, -3, -3}));
  EXPECT_EQ(vals(tape.mul(a, b)), (std::vector<double>{4, 10, 18}));
  EXPECT_EQ(tape.sum(a).item(), 6.0);
  EXPECT_EQ(tape.mean(a).item(), 2.0);
  EXPECT_DOUBLE_EQ(tape.exp(Tensor::scalar(1.0)).item(), std::exp(1.0));
  EXPECT_DOUBLE_EQ(tape.log(Tensor::scalar(std::exp(2.0))).item(), 2.0);
}

TEST(Primitives, BroadcastScalarAndRow) {
  Tape tape;
  auto m = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(vals(tape.mul(m, Tensor::scalar(2))), (std::vector<double>{2, 4, 6, 8, 10, 12}));
  EXPECT_EQ(vals(tape.add(m, Tensor::row({1, 1, 1}))), (std::vector<double>{2, 3, 4, 5, 6, 7}));
}

TEST(Primitives, ConcatBothAxes) {
  Tape tape;
  Tensor parts[] = {Tensor::row({1, 2}), Tensor::row({3, 4})};
  auto cols = tape.concat(parts, 1);
  EXPECT_EQ(cols.shape(), (Shape{1, 4}));
  auto rows = tape.concat(parts, 0);
  EXPECT_EQ(rows.shape(), (Shape{2, 2}));
  EXPECT_EQ(vals(rows), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Primitives, GatherTransposeScatterDropout) {
  Tape tape;
  auto table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  const std::size_t idx[] = {2, 0, 2};
  EXPECT_EQ(vals(tape.gather_rows(table, idx)), (std::vector<double>{5, 6, 1, 2, 5, 6}));
  EXPECT_EQ(vals(tape.transpose(table)), (std::vector<double>{1, 3, 5, 2, 4, 6}));
  const std::size_t tgt[] = {1, 3, 1};
  EXPECT_EQ(vals(tape.scatter_add(Tensor::row({0.2, 0.3, 0.5}), tgt, 4)),
            (std::vector<double>{0, 0.7, 0, 0.3}));
  auto d = tape.dropout(Tensor::row({1, 2, 3, 4}), Tensor::row({1, 0, 1, 0}), 0.5);
  EXPECT_EQ(vals(d), (std::vector<double>{2, 0, 6, 0}));
}

TEST(Primitives, ForwardPrimitiveDispatch) {
  Tape tape;
  const Tensor in[] = {Tensor::row({1, 2}), Tensor::row({3, 4})};
  EXPECT_EQ(vals(tape.forward_primitive(OpId::add, in)), (std::vector<double>{4, 6}));
  PrimitiveAttrs attrs;
  attrs.axis = 1;
  EXPECT_EQ(tape.forward_primitive(OpId::concat, in, attrs).shape(), (Shape{1, 4}));
}

TEST(Primitives, ShapeMismatchNamesShapes) {
  Tape tape;
  try {
    tape.matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(2,3)"), std::string::npos) << e.what();
  }
  EXPECT_THROW(tape.add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(Primitives, LogDomainError) {
  Tape tape;
  EXPECT_THROW(tape.log(Tensor::row({1.0, 0.0})), DomainError);
  EXPECT_THROW(tape.log(Tensor::row({-1.0})), DomainError);
}

TEST(Primitives, RecordsOnlyWhenGradNeeded) {
  Tape tape;
  tape.add(Tensor::row({1}), Tensor::row({2}));
  EXPECT_EQ(tape.size(), 0u);
  tape.add(Tensor::row({1}, true), Tensor::row({2}));
  EXPECT_EQ(tape.size(), 1u);
  Tape inference(Tape::Mode::inference);
  inference.add(Tensor::row({1}, true), Tensor::row({2}));
  EXPECT_EQ(inference.size(), 0u);
}

TEST(Backward, SquareSum) {
  Tape tape;
  auto x = Tensor::row({1, 2, 3}, true);
  tape.backward(tape.sum(tape.mul(x, x)));
  EXPECT_EQ(x.grad(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, SigmoidAtZero) {
  Tape tape;
  auto w = Tensor::scalar(0.0, true);
  tape.backward(tape.sigmoid(w));
  EXPECT_DOUBLE_EQ(w.grad()[0], 0.25);
}

TEST(Backward, UnreachableLeafGetsZero) {
  Tape tape;
  auto x = Tensor::row({1, 2}, true);
  auto unused = Tensor::row({3, 4}, true);
  tape.add(unused, unused);
  tape.backward(tape.sum(x));
  EXPECT_EQ(unused.grad(), (std::vector<double>{0, 0}));
}

TEST(Backward, NonScalarRootRejected) {
  Tape tape;
  auto x = Tensor::row({1, 2}, true);
  EXPECT_THROW(tape.backward(tape.mul(x, x)), ShapeError);
}

TEST(Backward, RepeatedGatherAccumulates) {
  Tape tape;
  auto table = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  const std::size_t idx[] = {1, 1, 0};
  tape.backward(tape.sum(tape.gather_rows(table, idx)));
  EXPECT_EQ(table.grad(), (std::vector<double>{1, 1, 2, 2}));
}

// Independent central-difference oracle for log softmax(z)[k].
TEST(Backward, LogSoftmaxMatchesHandFiniteDifferences) {
  Rng rng(11);
  auto z = random_tensor(1, 5, rng);
  const std::size_t k = 3;
  Tape tape;
  auto lp = tape.log(tape.softmax(z));
  const std::size_t pick[] = {k};
  tape.backward(tape.sum(tape.gather_rows(tape.transpose(lp), pick)));
  const auto g = z.grad();

  auto f = [&](std::vector<double> v) {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    double s = 0;
    for (double x : v) s += std::exp(x - m);
    return v[k] - m - std::log(s);
  };
  const double eps = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> p(z.values().begin(), z.values().end()), q = p;
    p[i] += eps;
    q[i] -= eps;
    const double fd = (f(p) - f(q)) / (2 * eps);
    worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-8}));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(GradCheck, MeanIsExact) {
  Rng rng(3);
  auto x = random_tensor(3, 4, rng);
  const double err = finite_diff_check([](Tape& t, const Tensor& v) { return t.mean(v); }, x);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, SumTanhWx) {
  Rng rng(5);
  auto W = random_tensor(4, 4, rng);
  auto x = random_tensor(4, 1, rng);
  auto r = finite_diff_check([&](Tape& t) { return t.sum(t.tanh(t.matmul(W, x))); }, {W, x});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  EXPECT_EQ(r.elements, 20u);
}

TEST(GradCheck, RejectsNondeterministicFunction) {
  Rng rng(1);
  auto x = random_tensor(1, 3, rng);
  Rng noise(2);
  auto f = [&](Tape& t) { return t.sum(t.mul(x, Tensor::scalar(noise.uniform()))); };
  EXPECT_THROW(finite_diff_check(f, {x}), std::invalid_argument);
}

// Every primitive at random shapes up to 6 x 8.
class PrimitiveGrad : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGrad, MatchesFiniteDifferences) {
  Rng rng(100 + GetParam());
  const std::size_t r = 1 + rng.index(6), c = 1 + rng.index(8), k = 1 + rng.index(6);
  auto a = random_tensor(r, c, rng);
  auto b = random_tensor(r, c, rng);
  auto m = random_tensor(c, k, rng);
  auto pos = random_tensor(r, c, rng, true, 0.5, 2.0);
  auto w = random_tensor(r, c, rng, false);  // fixed weights make sums non-trivial
  auto mask = Tensor::zeros({r, c});
  for (auto& v : mask.mutable_values()) v = rng.bernoulli(0.7) ? 1.0 : 0.0;
  std::vector<std::size_t> idx(4);
  for (auto& i : idx) i = rng.index(r);
  std::vector<std::size_t> tgt(c);
  for (auto& i : tgt) i = rng.index(c + 2);
  auto row = random_tensor(1, c, rng);

  auto weighted = [&](Tape& t, const Tensor& y) {
    Rng wr(y.size());
    auto wy = random_tensor(y.rows(), y.cols(), wr, false);
    return t.sum(t.mul(y, wy));
  };
  const std::vector<std::pair<const char*, std::function<Tensor(Tape&)>>> cases = {
      {"add", [&](Tape& t) { return weighted(t, t.add(a, b)); }},
      {"add_broadcast", [&](Tape& t) { return weighted(t, t.add(a, row)); }},
      {"sub", [&](Tape& t) { return weighted(t, t.sub(a, b)); }},
      {"mul", [&](Tape& t) { return weighted(t, t.mul(a, b)); }},
      {"matmul", [&](Tape& t) { return weighted(t, t.matmul(a, m)); }},
      {"concat0", [&](Tape& t) { const Tensor p[] = {a, b}; return weighted(t, t.concat(p, 0)); }},
      {"concat1", [&](Tape& t) { const Tensor p[] = {a, b}; return weighted(t, t.concat(p, 1)); }},
      {"tanh", [&](Tape& t) { return weighted(t, t.tanh(a)); }},
      {"sigmoid", [&](Tape& t) { return weighted(t, t.sigmoid(a)); }},
      {"exp", [&](Tape& t) { return weighted(t, t.exp(a)); }},
      {"log", [&](Tape& t) { return weighted(t, t.log(pos)); }},
      {"softmax", [&](Tape& t) { return weighted(t, t.softmax(a)); }},
      {"gather_rows", [&](Tape& t) { return weighted(t, t.gather_rows(a, idx)); }},
      {"dropout", [&](Tape& t) { return weighted(t, t.dropout(a, mask, 0.3)); }},
      {"sum", [&](Tape& t) { return t.sum(t.mul(a, w)); }},
      {"mean", [&](Tape& t) { return t.mean(t.mul(a, a)); }},
      {"transpose", [&](Tape& t) { return weighted(t, t.transpose(a)); }},
      {"scatter_add", [&](Tape& t) { return weighted(t, t.scatter_add(row, tgt, c + 2)); }},
  };
  for (const auto& [name, f] : cases) {
    auto rep = finite_diff_check(f, {a, b, m, pos, row});
    EXPECT_LT(rep.max_rel_error, 1e-6) << name << " worst " << rep.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomShapes, PrimitiveGrad, ::testing::Range(0, 5));

TEST(Determinism, IdenticalRunsAreBitwiseEqual) {
  auto run = [] {
    Rng rng(42);
    auto W = random_tensor(5, 3, rng);
    auto x = random_tensor(1, 5, rng);
    Tape tape;
    auto y = tape.sum(tape.log(tape.softmax(tape.tanh(tape.matmul(x, W)))));
    tape.backward(y);
    return std::make_pair(y.item(), W.grad());
  };
  EXPECT_EQ(run(), run());
}

TEST(Registry, GroupNamesAreTheFixedSet) {
  const std::vector<std::string> expected = {
      "theta_e", "theta_k", "theta_d", "theta_l", "theta_ol", "theta_s", "theta_v",
      "theta_g", "theta_o", "theta_s_prime", "theta_v_prime", "theta_g_prime", "theta_pi"};
  ASSERT_EQ(kAllGroups.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(group_name(kAllGroups[i]), expected[i]);
    EXPECT_EQ(parse_group(expected[i]), kAllGroups[i]);
  }
  EXPECT_FALSE(parse_group("theta_x").has_value());
}

TEST(Registry, DuplicateNamesRejectedAndGroupsTracked) {
  ParameterRegistry reg;
  reg.add(Group::theta_e, "a", Tensor::zeros({2, 2}, true));
  reg.add(Group::theta_k, "b", Tensor::zeros({1, 3}, true));
  EXPECT_THROW(reg.add(Group::theta_d, "a", Tensor::zeros({1, 1}, true)), std::invalid_argument);
  EXPECT_EQ(reg.group_of("b"), Group::theta_k);
  EXPECT_EQ(reg.element_count(), 7u);
  EXPECT_EQ(reg.element_count(Group::theta_e), 4u);
  reg.freeze_all_except({Group::theta_k});
  EXPECT_TRUE(reg.frozen(Group::theta_e));
  EXPECT_FALSE(reg.frozen(Group::theta_k));
}

// Freezing stops updates, not gradient flow: an upstream tensor still
// receives gradient through a frozen one.
TEST(Registry, FrozenTensorStillPropagates) {
  ParameterRegistry reg;
  auto up = reg.add(Group::theta_l, "up", Tensor::row({0.5, -0.2}, true));
  auto frozen = reg.add(Group::theta_d, "frozen", Tensor::from({2, 2}, {1, 2, 3, 4}, true));
  reg.freeze_all_except({Group::theta_l});
  reg.sync_requires_grad();
  Tape tape;
  tape.backward(tape.sum(tape.matmul(up, frozen)));
  EXPECT_EQ(up.grad(), (std::vector<double>{3, 7}));
  EXPECT_FALSE(frozen.has_grad());
  reg.enable_all_grads();
}

TEST(Registry, SnapshotRestoreRoundTrip) {
  ParameterRegistry reg;
  auto t = reg.add(Group::theta_e, "t", Tensor::row({1, 2, 3}, true));
  auto snap = reg.snapshot();
  t.mutable_values()[1] = 9;
  reg.restore(snap);
  EXPECT_EQ(vals(t), (std::vector<double>{1, 2, 3}));
}

}  // namespace
}  // namespace kgdial::ad
