// Copyright 2026 the spikegrad authors. Apache 2.0 license.

#include "spikegrad/tape.hpp"

#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "spikegrad/errors.hpp"
#include "spikegrad/tensor.hpp"

namespace sg = spikegrad;
using T = sg::Tensor<double>;
using Tape = sg::Tape<double>;

// Reference constants, frozen from a high-precision evaluation.
constexpr double kExp1 = 2.718281828459045;
constexpr double kTanh2 = 0.9640275800758169;
constexpr double kTanhD2 = 0.07065082485316447;  // 1 - tanh(2)^2
constexpr double kLn2 = 0.6931471805599453;

TEST(Autograd, AddBackward) {
  Tape t;
  auto x = t.leaf(T::scalar(2.0), true);
  auto y = t.leaf(T::scalar(5.0), true);
  auto z = t.add(x, y);
  EXPECT_EQ(z.value()[0], 7.0);
  auto g = t.backward(z);
  EXPECT_EQ(g.at(x)[0], 1.0);
  EXPECT_EQ(g.at(y)[0], 1.0);
}

TEST(Autograd, MulAndSubBackward) {
  Tape t;
  auto x = t.leaf(T::scalar(3.0), true);
  auto y = t.leaf(T::scalar(4.0), true);
  auto z = t.sub(t.mul(x, y), y);
  EXPECT_EQ(z.value()[0], 8.0);
  auto g = t.backward(z);
  EXPECT_EQ(g.at(x)[0], 4.0);
  EXPECT_EQ(g.at(y)[0], 2.0);  // x - 1
}

TEST(Autograd, DivBackward) {
  Tape t;
  auto a = t.leaf(T::scalar(1.0), true);
  auto b = t.leaf(T::scalar(4.0), true);
  auto z = t.div(a, b);
  auto g = t.backward(z);
  EXPECT_DOUBLE_EQ(g.at(a)[0], 0.25);
  EXPECT_DOUBLE_EQ(g.at(b)[0], -1.0 / 16.0);
}

TEST(Autograd, ExpBackwardUsesOutput) {
  Tape t;
  auto x = t.leaf(T::scalar(1.0), true);
  auto y = t.exp(x);
  EXPECT_EQ(y.value()[0], kExp1);
  auto g = t.backward(y);
  EXPECT_EQ(g.at(x)[0], kExp1);
}

TEST(Autograd, TanhBackward) {
  Tape t;
  auto x = t.leaf(T::scalar(2.0), true);
  auto y = t.tanh(x);
  EXPECT_EQ(y.value()[0], kTanh2);
  auto g = t.backward(y);
  EXPECT_NEAR(g.at(x)[0], kTanhD2, 1e-16);
}

TEST(Autograd, FanOutAccumulates) {
  Tape t;
  auto x = t.leaf(T::scalar(3.0), true);
  auto y = t.add(t.mul(x, x), x);  // x^2 + x
  EXPECT_EQ(y.value()[0], 12.0);
  auto g = t.backward(y);
  EXPECT_EQ(g.at(x)[0], 7.0);  // 2x + 1
}

TEST(Autograd, CancellationGradientIsPositiveZero) {
  Tape t;
  auto x = t.leaf(T::scalar(1.5), true);
  auto y = t.sub(x, x);
  EXPECT_EQ(y.value()[0], 0.0);
  auto g = t.backward(y);
  const double gx = g.at(x)[0];
  EXPECT_EQ(gx, 0.0);
  EXPECT_FALSE(std::signbit(gx));  // 1.0 + (-1.0) accumulates to +0.0
}

TEST(Autograd, DetachStopsGradient) {
  Tape t;
  auto x = t.leaf(T::scalar(3.0), true);
  auto y = t.mul(x, t.detach(x));  // d/dx of x * sg(x) is sg(x)
  EXPECT_EQ(y.value()[0], 9.0);
  auto g = t.backward(y);
  EXPECT_EQ(g.at(x)[0], 3.0);
}

TEST(Autograd, DetachForwardIsBitIdentical) {
  Tape t;
  auto x = t.leaf(T::vector({-0.0, 1.0, -2.5, 1e-300}), true);
  auto d = t.detach(x);
  EXPECT_TRUE(d.value().bit_equal(x.value()));
}

TEST(Autograd, DetachedBranchContributesNothing) {
  Tape t;
  auto x = t.leaf(T::scalar(2.0), true);
  auto y = t.add(t.mul(x, x), t.detach(t.mul(x, x)));
  auto g = t.backward(y);
  EXPECT_EQ(g.at(x)[0], 4.0);  // only the live branch counts
}

TEST(Autograd, Gt0HasZeroGradient) {
  Tape t;
  auto x = t.leaf(T::vector({-1.0, 0.5, 2.0}), true);
  auto y = t.sum(t.gt0(x));
  EXPECT_EQ(y.value()[0], 2.0);
  auto g = t.backward(y);
  ASSERT_TRUE(g.contains(x));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.at(x)[i], 0.0);
}

TEST(Autograd, UnreachedLeafGetsZeros) {
  Tape t;
  auto x = t.leaf(T::scalar(1.0), true);
  auto y = t.mul(x, x);
  auto w = t.leaf(T::vector({1.0, 2.0}), true);  // recorded after the root path
  auto g = t.backward(y);
  ASSERT_TRUE(g.contains(w));
  EXPECT_TRUE(g.at(w).same_shape(w.value()));
  EXPECT_EQ(g.at(w)[0], 0.0);
  EXPECT_EQ(g.at(w)[1], 0.0);
  EXPECT_EQ(g.size(), 2u);
}

TEST(Autograd, ConstantsAreAbsentFromGradients) {
  Tape t;
  auto x = t.leaf(T::scalar(2.0), true);
  auto c = t.constant(3.0);
  auto y = t.mul(x, c);
  auto g = t.backward(y);
  EXPECT_EQ(g.at(x)[0], 3.0);
  EXPECT_FALSE(g.contains(c));
  EXPECT_EQ(g.size(), 1u);
}

TEST(Autograd, NonScalarRootNeedsSeed) {
  Tape t;
  auto x = t.leaf(T::vector({1.0, 2.0}), true);
  auto y = t.mul(x, x);
  EXPECT_THROW(t.backward(y), sg::UsageError);
  T seed = T::vector({1.0, 10.0});
  auto g = t.backward(y, &seed);
  EXPECT_EQ(g.at(x)[0], 2.0);
  EXPECT_EQ(g.at(x)[1], 40.0);
  T bad = T::vector({1.0, 2.0, 3.0});
  EXPECT_THROW(t.backward(y, &bad), sg::ShapeError);
}

TEST(Autograd, ScalarBroadcastReducesGradient) {
  Tape t;
  auto s = t.leaf(T::scalar(2.0), true);
  auto v = t.leaf(T::vector({1.0, 2.0, 3.0}), true);
  auto y = t.sum(t.mul(v, s));
  EXPECT_EQ(y.value()[0], 12.0);
  auto g = t.backward(y);
  EXPECT_EQ(g.at(s)[0], 6.0);  // sum of v
  EXPECT_TRUE(g.at(s).is_scalar());
  EXPECT_EQ(g.at(v)[2], 2.0);
}

TEST(Autograd, MatmulBackwardHandValues) {
  Tape t;
  auto a = t.leaf(T::matrix({{1.0, 2.0}, {3.0, 4.0}}), true);
  auto b = t.leaf(T::matrix({{5.0, 6.0}, {7.0, 8.0}}), true);
  auto y = t.sum(t.matmul(a, b));
  auto g = t.backward(y);
  // d sum(AB) / dA = ones * B^T: rows are column sums of B^T = row sums of B.
  EXPECT_EQ(g.at(a).at2(0, 0), 11.0);
  EXPECT_EQ(g.at(a).at2(0, 1), 15.0);
  EXPECT_EQ(g.at(a).at2(1, 0), 11.0);
  EXPECT_EQ(g.at(b).at2(0, 0), 4.0);  // column sums of A
  EXPECT_EQ(g.at(b).at2(1, 1), 6.0);
}

TEST(Autograd, SumAxisBackwardBroadcasts) {
  Tape t;
  auto a = t.leaf(T::matrix({{1.0, 2.0}, {3.0, 4.0}}), true);
  auto r = t.sum(a, 0);
  T seed = T::vector({10.0, 20.0});
  auto g = t.backward(r, &seed);
  EXPECT_EQ(g.at(a).at2(0, 0), 10.0);
  EXPECT_EQ(g.at(a).at2(1, 0), 10.0);
  EXPECT_EQ(g.at(a).at2(0, 1), 20.0);
  EXPECT_EQ(g.at(a).at2(1, 1), 20.0);
}

TEST(Autograd, AddRowVecBackward) {
  Tape t;
  auto a = t.leaf(T::matrix({{1.0, 2.0}, {3.0, 4.0}}), true);
  auto b = t.leaf(T::vector({0.5, -0.5}), true);
  auto y = t.sum(t.add_rowvec(a, b));
  auto g = t.backward(y);
  EXPECT_EQ(g.at(a).at2(1, 1), 1.0);
  EXPECT_EQ(g.at(b)[0], 2.0);  // one per row
  EXPECT_EQ(g.at(b)[1], 2.0);
}

TEST(Autograd, CrossEntropyHandValues) {
  Tape t;
  auto logits = t.leaf(T::matrix({{0.0, 0.0}, {0.0, 0.0}}), true);
  auto loss = t.cross_entropy(logits, {0, 1});
  EXPECT_NEAR(loss.value()[0], kLn2, 1e-15);
  auto g = t.backward(loss);
  // (softmax - onehot) / batch: softmax is 0.5 everywhere.
  EXPECT_DOUBLE_EQ(g.at(logits).at2(0, 0), -0.25);
  EXPECT_DOUBLE_EQ(g.at(logits).at2(0, 1), 0.25);
  EXPECT_DOUBLE_EQ(g.at(logits).at2(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(g.at(logits).at2(1, 1), -0.25);
}

TEST(Autograd, CrossEntropyIsShiftInvariant) {
  Tape t;
  auto a = t.leaf(T::matrix({{1.0, -2.0, 0.5}}), true);
  auto b = t.leaf(T::matrix({{1001.0, 998.0, 1000.5}}), true);
  auto la = t.cross_entropy(a, {2});
  auto lb = t.cross_entropy(b, {2});
  EXPECT_NEAR(la.value()[0], lb.value()[0], 1e-12);
  EXPECT_TRUE(std::isfinite(lb.value()[0]));
}

TEST(Autograd, CrossEntropyValidation) {
  Tape t;
  auto logits = t.leaf(T::matrix({{0.0, 0.0}}), true);
  EXPECT_THROW(t.cross_entropy(logits, {2}), sg::UsageError);
  EXPECT_THROW(t.cross_entropy(logits, {-1}), sg::UsageError);
  EXPECT_THROW(t.cross_entropy(logits, {0, 1}), sg::UsageError);
  auto v = t.leaf(T::vector({1.0, 2.0}), true);
  EXPECT_THROW(t.cross_entropy(v, {0}), sg::ShapeError);
}

TEST(Autograd, CrossTapeVarRejected) {
  Tape t1;
  Tape t2;
  auto x = t1.leaf(T::scalar(1.0), true);
  auto y = t2.leaf(T::scalar(1.0), true);
  EXPECT_THROW(t2.add(x, y), sg::UsageError);
  EXPECT_THROW(t2.backward(x), sg::UsageError);
}

TEST(Autograd, BackwardIsRepeatable) {
  Tape t;
  auto x = t.leaf(T::scalar(2.0), true);
  auto y = t.mul(t.exp(x), x);
  auto g1 = t.backward(y);
  auto g2 = t.backward(y);
  EXPECT_TRUE(g1.at(x).bit_equal(g2.at(x)));
}

TEST(Autograd, GradCheckComposite) {
  auto f = [](Tape& t, sg::Var<double> x) {
    return t.add(t.mul(t.exp(x), t.tanh(x)), x);
  };
  T x = T::vector({-1.3, -0.2, 0.0, 0.4, 1.7});
  const double err = sg::grad_check(f, x, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Autograd, GradCheckMatmulChain) {
  T x = T::matrix({{0.3, -0.7}, {1.1, 0.2}});
  auto f = [](Tape& t, sg::Var<double> xv) {
    auto w = t.constant(T::matrix({{0.5, -0.25}, {1.5, 0.75}}));
    return t.tanh(t.matmul(xv, w));
  };
  const double err = sg::grad_check(f, x, 1e-5);
  EXPECT_LT(err, 1e-6);
}

TEST(Autograd, OpKindNamesRoundTrip) {
  for (int k = 0; k <= static_cast<int>(sg::OpKind::CrossEntropy); ++k) {
    const auto kind = static_cast<sg::OpKind>(k);
    auto back = sg::op_kind_from_name(sg::op_kind_name(kind));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, kind);
  }
  EXPECT_FALSE(sg::op_kind_from_name("nope").has_value());
}

TEST(Autograd, TagsStick) {
  Tape t;
  auto x = t.leaf(T::scalar(1.0), true);
  t.set_tag(x, "input");
  EXPECT_EQ(t.node(x.id).tag, "input");
}
