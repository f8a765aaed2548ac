#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "sarcnet/gradcheck.hpp"
#include "sarcnet/tensor.hpp"
#include "oracles.hpp"

using namespace sarcnet;
using T = Tensor<double>;

namespace {

T random_tensor(const Shape& shape, Rng& rng) {
  T t(shape);
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const auto eye = T::matrix({{1, 0}, {0, 1}});
  const auto m = T::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(eye, m), m);
}

TEST(Matmul, HandExpandedProduct) {
  EXPECT_EQ(matmul(T::matrix({{1, 2}, {3, 4}}), T::matrix({{5}, {6}})), T::matrix({{17}, {39}}));
}

TEST(Matmul, ZeroAnnihilates) {
  const auto z = matmul(T::matrix({{0, 0}, {0, 0}}), T::matrix({{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(z, T({2, 3}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(T({2, 3}), T({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] x [2x3]"), std::string::npos);
  }
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    T a = random_tensor({2 + rng.below(2), 3}, rng), b = random_tensor({3, 1 + rng.below(3)}, rng);
    const T proj = random_tensor({a.dim(0), b.dim(1)}, rng);
    const auto loss = [&](const T& aa, const T& bb) {
      const T out = matmul(aa, bb);
      double s = 0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * proj[i];
      return s;
    };
    const auto [ga, gb] = matmul_backward(a, b, proj);
    EXPECT_LT(max_relative_error(ga.data(), finite_diff_grad([&](const T& x) { return loss(x, b); }, a, 1e-5).data()),
              1e-4);
    EXPECT_LT(max_relative_error(gb.data(), finite_diff_grad([&](const T& x) { return loss(a, x); }, b, 1e-5).data()),
              1e-4);
  }
}

TEST(Softmax, SymmetricScores) {
  const auto p = softmax(T::vector({0, 0}));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, ClosedFormLog2) {
  const auto p = softmax(T::vector({std::log(2.0), 0}));
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeEqualScoresDoNotOverflow) {
  const auto p = softmax(T::vector({1000, 1000, 1000}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
  EXPECT_TRUE(softmax(Tensor<float>::vector({1000, 1000, 1000})).all_finite());
}

TEST(Softmax, EmptyIsDomainError) { EXPECT_THROW(softmax(T{}), DomainError); }

TEST(Softmax, PropertiesOnRandomScores) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    T s({n});
    for (auto& v : s.data()) v = rng.uniform(-20, 20);
    const T p = softmax(s);
    double total = 0;
    std::size_t arg_s = 0, arg_p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(p[i], 0.0);
      total += p[i];
      if (s[i] > s[arg_s]) arg_s = i;
      if (p[i] > p[arg_p]) arg_p = i;
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_EQ(arg_s, arg_p);
    T shifted = s;
    const double c = rng.uniform(-50, 50);
    for (auto& v : shifted.data()) v += c;
    const T q = softmax(shifted);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
  }
}

TEST(Conv1d, SlidingWindowSums) {
  const auto out = conv1d_valid(T::matrix({{1}, {2}, {3}}), T({1, 2, 1}, 1.0), T({1}));
  EXPECT_EQ(out, T::matrix({{3}, {5}}));
}

TEST(Conv1d, ZeroSequenceYieldsBias) {
  Rng rng(1);
  const T filters = random_tensor({3, 2, 4}, rng);
  const T bias = T::vector({0.5, -1, 2});
  const auto out = conv1d_valid(T({6, 4}), filters, bias);
  for (std::size_t t = 0; t < out.dim(0); ++t)
    for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(out.at(t, f), bias[f]);
}

TEST(Conv1d, TooShortSequenceIsRejected) {
  EXPECT_THROW(conv1d_valid(T({2, 3}), T({1, 3, 3}), T({1})), DomainError);
}

TEST(Conv1d, MatchesTripleLoopOracle) {
  Rng rng(2);
  {
    const T seq = random_tensor({5, 3}, rng), filters = random_tensor({2, 3, 3}, rng), bias = random_tensor({2}, rng);
    const auto got = conv1d_valid(seq, filters, bias);
    const auto want = oracles::conv1d_valid(seq, filters, bias);
    for (std::size_t t = 0; t < want.size(); ++t)
      for (std::size_t f = 0; f < 2; ++f) EXPECT_NEAR(got.at(t, f), want[t][f], 1e-12);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = 1 + rng.below(5), len = w + rng.below(17 - w), d = 1 + rng.below(8), f = 1 + rng.below(8);
    const T seq = random_tensor({len, d}, rng), filters = random_tensor({f, w, d}, rng), bias = random_tensor({f}, rng);
    const auto got = conv1d_valid(seq, filters, bias);
    const auto want = oracles::conv1d_valid(seq, filters, bias);
    for (std::size_t t = 0; t < want.size(); ++t)
      for (std::size_t k = 0; k < f; ++k) ASSERT_NEAR(got.at(t, k), want[t][k], 1e-12);
  }
}

TEST(MaxOverTime, PerColumnMaximum) {
  const auto p = max_over_time(T::matrix({{1, 9}, {5, 2}}));
  EXPECT_EQ(p.values, T::vector({5, 9}));
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{1, 0}));
}

TEST(MaxOverTime, SingleRow) {
  const auto p = max_over_time(T::matrix({{3, 4}}));
  EXPECT_EQ(p.values, T::vector({3, 4}));
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{0, 0}));
}

TEST(MaxOverTime, TiesGoToSmallestIndex) {
  EXPECT_EQ(max_over_time(T::matrix({{7}, {7}})).argmax, (std::vector<std::size_t>{0}));
}

TEST(MaxOverTime, BackwardRoutesOnlyToArgmax) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const T fm = random_tensor({1 + rng.below(6), 1 + rng.below(5)}, rng);
    const auto p = max_over_time(fm);
    const T g = max_over_time_backward(fm.shape(), p.argmax, random_tensor({fm.dim(1)}, rng));
    for (std::size_t t = 0; t < fm.dim(0); ++t)
      for (std::size_t f = 0; f < fm.dim(1); ++f)
        if (t != p.argmax[f]) EXPECT_EQ(g.at(t, f), 0.0);
  }
}

TEST(FiniteDiff, SumOfSquares) {
  const auto g = finite_diff_grad(
      [](const T& x) {
        double s = 0;
        for (auto v : x.data()) s += v * v;
        return s;
      },
      T::vector({1, 2}), 1e-5);
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantHasZeroGradient) {
  const auto g = finite_diff_grad([](const T&) { return 3.5; }, T::vector({1, -2, 7}), 1e-5);
  for (auto v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, SoftmaxCrossEntropyMatchesClosedForm) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.below(4), label = rng.below(n);
    const T logits = random_tensor({n}, rng);
    const auto g = finite_diff_grad([&](const T& z) { return -std::log(softmax(z)[label]); }, logits, 1e-5);
    const T p = softmax(logits);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(g[i], p[i] - (i == label ? 1.0 : 0.0), 1e-6);
  }
}

TEST(FiniteDiff, NonFiniteValueIsNumericError) {
  EXPECT_THROW(finite_diff_grad([](const T& x) { return 1.0 / (x[0] - x[0]); }, T::vector({1}), 1e-5), NumericError);
  EXPECT_THROW(finite_diff_grad([](const T&) { return 0.0; }, T::vector({1}), 0.0), DomainError);
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(T({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  EXPECT_THROW(T({0, 2}), DimensionError);
}

TEST(Parameter, TensorsShareShape) {
  Parameter<float> p(Tensor<float>({3, 2}, 1.0f));
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  EXPECT_EQ(p.accum_sq_grad.shape(), p.value.shape());
  EXPECT_EQ(p.accum_sq_delta.shape(), p.value.shape());
}

// Every differentiable op against central differences on >= 20 random draws.
TEST(GradientChecks, EveryLayerPasses) {
  GradCheckOptions opt;
  opt.trials = 24;
  for (const auto& r : run_gradient_checks(opt)) {
    EXPECT_TRUE(r.passed) << r.name << " max relative error " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.name;
  }
}
