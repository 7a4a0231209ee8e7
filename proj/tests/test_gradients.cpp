#include <gtest/gtest.h>

#include "gradient_suite.hpp"
#include "kinface/numerics/layers.hpp"

using namespace kinface;
using kinface::testing::max_relative_error;
using kinface::testing::random_tensor;

TEST(Gradients, EveryOpMatchesCentralDifferences) {
  for (const auto& r : kinface::testing::run_gradient_suite()) {
    EXPECT_LE(r.max_rel_error, 1e-4) << r.op;
  }
}

TEST(Gradients, SuiteCoversRequiredOpKinds) {
  std::vector<std::string> names;
  for (const auto& r : kinface::testing::run_gradient_suite()) names.push_back(r.op);
  for (const char* required : {"matmul", "dense", "conv2d", "conv_transpose2d", "leaky_relu", "tanh", "sigmoid",
                               "add", "mul", "maximum", "mean", "l2_norm", "binary_cross_entropy", "reshape",
                               "concat"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), required), names.end()) << required;
  }
}

TEST(Gradients, TwoLayerDenseNetwork) {
  SeededRng rng(21);
  ParameterSet<double> params;
  DenseLayer<double> l1(params, "l1", 4, 6, rng);
  DenseLayer<double> l2(params, "l2", 6, 2, rng);
  const auto x = random_tensor({3, 4}, rng);
  auto loss = [&](const std::vector<Var<double>>& v) {
    auto h = ops::tanh(ops::dense(Var<double>::constant(x), v[0], v[1]));
    return ops::mean(ops::mul(ops::dense(h, v[2], v[3]), ops::dense(h, v[2], v[3])));
  };
  const double err = max_relative_error(
      loss, {l1.weight.value(), l1.bias.value(), l2.weight.value(), l2.bias.value()}, 1e-5);
  EXPECT_LE(err, 1e-4);
}

TEST(Gradients, Linearity) {
  SeededRng rng(5);
  const auto x0 = random_tensor({4, 3}, rng);
  const auto w = random_tensor({3, 2}, rng);
  auto l1 = [&](const Var<double>& x) { return ops::sum(ops::tanh(ops::matmul(x, Var<double>::constant(w)))); };
  auto l2 = [&](const Var<double>& x) { return ops::mean(ops::mul(x, x)); };
  const double a = 2.5, b = -0.75;

  auto grad_of = [&](auto&& f) {
    auto x = Var<double>::leaf(x0);
    backward(f(x));
    return x.grad();
  };
  const auto g1 = grad_of(l1);
  const auto g2 = grad_of(l2);
  const auto gc = grad_of([&](const Var<double>& x) { return ops::add(ops::scale(l1(x), a), ops::scale(l2(x), b)); });
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * g1[i] + b * g2[i], 1e-10);
}
