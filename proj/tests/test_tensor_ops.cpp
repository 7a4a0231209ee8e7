#include <gtest/gtest.h>

#include <limits>

#include "gradient_suite.hpp"
#include "kinface/numerics/ops.hpp"

using namespace kinface;
using kinface::testing::random_tensor;

namespace {

// Direct sliding-window convolution, used as the reference for conv2d.
Tensor<double> brute_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                            std::size_t stride, std::size_t pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(0), K = w.dim(2);
  const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor<double> out({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double s = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long y = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(H) || xx >= static_cast<long>(W)) continue;
                s += x[((n * C + c) * H + y) * W + xx] * w[((o * C + c) * K + ki) * K + kj];
              }
          out[((n * O + o) * OH + i) * OW + j] = s;
        }
  return out;
}

// Scatter form of the transposed convolution.
Tensor<double> brute_conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                      std::size_t stride, std::size_t pad, std::size_t output_pad) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), O = w.dim(1), K = w.dim(2);
  const std::size_t OH = (H - 1) * stride + K + output_pad - 2 * pad;
  const std::size_t OW = (W - 1) * stride + K + output_pad - 2 * pad;
  Tensor<double> out({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH * OW; ++i) out[(n * O + o) * OH * OW + i] = b[o];
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t ki = 0; ki < K; ++ki)
              for (std::size_t kj = 0; kj < K; ++kj) {
                const long y = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long>(OH) || xx >= static_cast<long>(OW)) continue;
                out[((n * O + o) * OH + y) * OW + xx] +=
                    x[((n * C + c) * H + i) * W + j] * w[((c * O + o) * K + ki) * K + kj];
              }
  return out;
}

}  // namespace

TEST(Forward, MatmulIdentity) {
  auto eye = Var<double>::constant(Tensor<double>::from({2, 2}, {1, 0, 0, 1}));
  auto a = Var<double>::constant(Tensor<double>::from({2, 2}, {1.5, -2, 3, 4}));
  EXPECT_EQ(ops::matmul(eye, a).value(), a.value());
}

TEST(Forward, TanhAtZero) {
  auto z = Var<float>::constant(Tensor<float>({3, 2}));
  EXPECT_EQ(ops::tanh(z).value(), Tensor<float>({3, 2}));
}

TEST(Forward, ConvOnesCenterIsNine) {
  auto x = Var<double>::constant(Tensor<double>({1, 1, 4, 4}, 1.0));
  auto w = Var<double>::constant(Tensor<double>({1, 1, 3, 3}, 1.0));
  auto b = Var<double>::constant(Tensor<double>({1}));
  auto y = ops::conv2d(x, w, b, 1, 1);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  const auto ref = brute_conv2d(x.value(), w.value(), b.value(), 1, 1);
  EXPECT_EQ(ref[1 * 4 + 1], 9.0);
  EXPECT_EQ(y.value()[1 * 4 + 1], 9.0);
  EXPECT_EQ(y.value()[0], 4.0);  // corner sees a 2x2 window
  EXPECT_LE(max_abs_diff(y.value(), ref), 1e-12);
}

TEST(Forward, ConvMatchesSlidingWindow) {
  SeededRng rng(3);
  for (auto [stride, pad, k] : {std::tuple{1, 0, 3}, std::tuple{2, 2, 5}, std::tuple{2, 1, 3}}) {
    auto x = random_tensor({2, 3, 8, 8}, rng);
    auto w = random_tensor({4, 3, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng);
    auto b = random_tensor({4}, rng);
    auto y = ops::conv2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>::constant(b), stride, pad);
    EXPECT_LE(max_abs_diff(y.value(), brute_conv2d(x, w, b, stride, pad)), 1e-12);
  }
}

TEST(Forward, TransposedConvMatchesScatter) {
  SeededRng rng(4);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  auto w = random_tensor({3, 2, 5, 5}, rng);
  auto b = random_tensor({2}, rng);
  auto y = ops::conv_transpose2d(Var<double>::constant(x), Var<double>::constant(w), Var<double>::constant(b), 2, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{2, 2, 8, 8}));
  EXPECT_LE(max_abs_diff(y.value(), brute_conv_transpose2d(x, w, b, 2, 2, 1)), 1e-12);
}

TEST(Forward, ConcatAndBroadcast) {
  auto a = Var<double>::constant(Tensor<double>::from({2, 1}, {1, 2}));
  auto b = Var<double>::constant(Tensor<double>::from({2, 2}, {3, 4, 5, 6}));
  EXPECT_EQ(ops::concat<double>({a, b}, 1).value(), Tensor<double>::from({2, 3}, {1, 3, 4, 2, 5, 6}));
  auto s = ops::broadcast_spatial(b, 1, 2);
  EXPECT_EQ(s.value(), Tensor<double>::from({2, 2, 1, 2}, {3, 3, 4, 4, 5, 5, 6, 6}));
}

TEST(Forward, ShapeMismatchThrows) {
  auto a = Var<double>::constant(Tensor<double>({2, 3}));
  auto b = Var<double>::constant(Tensor<double>({2, 3}));
  EXPECT_THROW(ops::matmul(a, b), ShapeError);
  EXPECT_THROW(ops::add(a, Var<double>::constant(Tensor<double>({3, 2}))), ShapeError);
  EXPECT_THROW(ops::reshape(a, {4}), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
}

TEST(Forward, NonFiniteOutputThrows) {
  auto a = Var<double>::constant(Tensor<double>::from({2}, {1.0, std::numeric_limits<double>::max()}));
  EXPECT_THROW(ops::mul(a, a), NumericError);
}

TEST(Forward, OpsArePure) {
  SeededRng rng(8);
  auto x = Var<float>::constant(random_tensor({2, 3, 8, 8}, rng).cast<float>());
  auto w = Var<float>::constant(random_tensor({4, 3, 5, 5}, rng).cast<float>());
  auto b = Var<float>::constant(random_tensor({4}, rng).cast<float>());
  auto y1 = ops::tanh(ops::conv2d(x, w, b, 2, 2));
  auto y2 = ops::tanh(ops::conv2d(x, w, b, 2, 2));
  EXPECT_EQ(y1.value(), y2.value());
}

TEST(Backward, SquareAtThree) {
  auto x = Var<double>::leaf(Tensor<double>::scalar(3.0));
  backward(ops::mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, MeanSpreadsEvenly) {
  auto x = Var<double>::leaf(Tensor<double>({7}, 2.0));
  backward(ops::mean(x));
  for (auto g : x.grad().data()) EXPECT_DOUBLE_EQ(g, 1.0 / 7.0);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  Parameter<double> p("p", Tensor<double>::scalar(2.0));
  backward(ops::scale(p.var(), 3.0));
  backward(ops::scale(p.var(), 3.0));
  EXPECT_DOUBLE_EQ(p.gradient().item(), 6.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.gradient().item(), 0.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = Var<double>::leaf(Tensor<double>({3}, 1.0));
  EXPECT_THROW(backward(ops::tanh(x)), ShapeError);
}

TEST(Backward, RejectsUnrecordedGraph) {
  auto c = Var<double>::constant(Tensor<double>::scalar(1.0));
  EXPECT_THROW(backward(ops::mean(c)), GraphError);
  auto x = Var<double>::leaf(Tensor<double>({3}, 1.0));
  Var<double> y;
  {
    NoGradGuard guard;
    y = ops::mean(x);
  }
  EXPECT_THROW(backward(y), GraphError);
}

TEST(Backward, FrozenParameterReceivesNoGradient) {
  Parameter<double> a("a", Tensor<double>::scalar(2.0));
  Parameter<double> b("b", Tensor<double>::scalar(5.0));
  b.set_trainable(false);
  backward(ops::mul(a.var(), b.var()));
  EXPECT_DOUBLE_EQ(a.gradient().item(), 5.0);
  EXPECT_DOUBLE_EQ(b.gradient().item(), 0.0);
}

TEST(Backward, ClampedCrossEntropyIsFinite) {
  auto p = Var<double>::leaf(Tensor<double>::from({2}, {1e-30, 0.5}));
  auto loss = ops::binary_cross_entropy(p, Tensor<double>::from({2}, {1.0, 1.0}));
  EXPECT_NEAR(loss.value().item(), 0.5 * (-std::log(1e-7) - std::log(0.5)), 1e-9);
  backward(loss);
  EXPECT_EQ(p.grad()[0], 0.0);
  EXPECT_NEAR(p.grad()[1], -0.5 / 0.5, 1e-12);
}
