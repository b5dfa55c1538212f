#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "cips/gradcheck.hpp"
#include "cips/optim.hpp"
#include "cips/tensor.hpp"
#include "cips/tensor_io.hpp"
#include "test_util.hpp"

using namespace cips;
using cips::test::randn;

TEST(TensorOps, LeakyReluAtBothSigns) {
  const Tensor y = leaky_relu(Tensor::from({2}, {-1.0, 2.0}), 0.2);
  EXPECT_DOUBLE_EQ(y.at(0), -0.2);
  EXPECT_DOUBLE_EQ(y.at(1), 2.0);
}

TEST(TensorOps, SineAtExactPoints) {
  const Tensor y = sin(Tensor::from({2}, {0.0, std::numbers::pi / 2}));
  EXPECT_EQ(y.at(0), 0.0);
  EXPECT_EQ(y.at(1), 1.0);
}

TEST(TensorOps, MatmulPlusBias) {
  const Tensor y = add(matmul(Tensor::from({1, 2}, {3, 4}), Tensor::from({2, 1}, {1, 1})), Tensor::from({1}, {0}));
  ASSERT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_EQ(y.at(0), 7.0);
}

TEST(TensorOps, MatmulTransposesMatchNaiveLoops) {
  const Tensor a = randn({5, 7}, 1), b = randn({7, 3}, 2);
  const Tensor at = randn({7, 5}, 3), bt = randn({3, 7}, 4);
  auto naive = [](const Tensor& x, const Tensor& y, bool tx, bool ty) {
    const std::size_t m = tx ? x.dim(1) : x.dim(0), k = tx ? x.dim(0) : x.dim(1);
    const std::size_t n = ty ? y.dim(0) : y.dim(1);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p)
          out[i * n + j] += (tx ? x.at(p, i) : x.at(i, p)) * (ty ? y.at(j, p) : y.at(p, j));
    return Tensor::from({m, n}, out);
  };
  EXPECT_TRUE(test::bit_equal(matmul(a, b), naive(a, b, false, false)));
  EXPECT_TRUE(test::bit_equal(matmul(at, b, true, false), naive(at, b, true, false)));
  EXPECT_TRUE(test::bit_equal(matmul(a, bt, false, true), naive(a, bt, false, true)));
  EXPECT_TRUE(test::bit_equal(matmul(at, bt, true, true), naive(at, bt, true, true)));
}

TEST(TensorOps, MatmulRowsIndependentOfBatch) {
  const Tensor a = randn({9, 6}, 5), b = randn({6, 4}, 6);
  const Tensor full = matmul(a, b);
  for (std::int64_t r : {0, 4, 8}) {
    EXPECT_TRUE(test::bit_equal(matmul(gather_rows(a, {r}), b), gather_rows(full, {r})));
  }
}

TEST(TensorOps, ShapeMismatchNamesBothShapes) {
  try {
    add(Tensor::zeros({2, 3}), Tensor::zeros({4}));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(to_string(Shape{2, 3})), std::string::npos) << msg;
    EXPECT_NE(msg.find(to_string(Shape{4})), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(TensorOps, DivisionByExactZeroThrows) {
  EXPECT_THROW(div(Tensor::from({2}, {1, 2}), Tensor::from({2}, {1, 0})), std::domain_error);
}

TEST(TensorOps, BroadcastingIsRestricted) {
  EXPECT_NO_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3})));
  EXPECT_NO_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({2, 1})));
  EXPECT_NO_THROW(add(Tensor::zeros({2, 3}), Tensor::scalar(1.0)));
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({1, 3, 1})), ShapeError);
  EXPECT_THROW(add(Tensor::zeros({3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(TensorOps, ReductionsAndRowNorm) {
  const Tensor a = Tensor::from({2, 2}, {3, 4, 6, 8});
  EXPECT_EQ(sum(a).item(), 21.0);
  EXPECT_EQ(mean(a).item(), 5.25);
  EXPECT_EQ(sum(a, 0).to_vector(), (std::vector<double>{9, 12}));
  EXPECT_EQ(sum(a, 1).to_vector(), (std::vector<double>{7, 14}));
  EXPECT_EQ(row_l2_norm(a).to_vector(), (std::vector<double>{5, 10}));
}

TEST(TensorOps, WeightedGatherSkipsNegativeIndices) {
  auto plan = std::make_shared<GatherPlan>();
  plan->taps = 2;
  plan->index = {0, -1, 1, 0};
  plan->weight = {2.0, 5.0, 1.0, 1.0};
  const Tensor src = Tensor::from({2, 1}, {10, 100});
  EXPECT_EQ(weighted_gather(src, plan).to_vector(), (std::vector<double>{20, 110}));
}

TEST(Autodiff, SquareDerivative) {
  Tensor x = Tensor::scalar(3.0).set_requires_grad(true);
  EXPECT_EQ(grad(square(x), {x})[0].item(), 6.0);
}

TEST(Autodiff, LeakyReluSlopes) {
  Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0}).set_requires_grad(true);
  const auto g = grad(sum(leaky_relu(x, 0.2)), {x})[0];
  EXPECT_DOUBLE_EQ(g.at(0), 0.2);
  EXPECT_EQ(g.at(1), 1.0);  // positive slope at exactly zero
  EXPECT_EQ(g.at(2), 1.0);
}

TEST(Autodiff, NonScalarRootThrows) {
  Tensor x = randn({3}, 1, 1.0, true);
  EXPECT_THROW(backward(square(x)), GradError);
}

TEST(Autodiff, DetachedRootGivesEmptyMap) {
  Tensor x = randn({3}, 1, 1.0, true);
  EXPECT_TRUE(backward(sum(square(x)).detach()).empty());
  NoGradGuard no_grad;
  EXPECT_TRUE(backward(sum(square(x))).empty());
}

TEST(Autodiff, BackwardIsLinear) {
  Tensor x = randn({4, 3}, 2, 1.0, true);
  const double alpha = 0.7, beta = -1.3;
  auto f = [&] { return sum(sin(x)); };
  auto g = [&] { return sum(mul(square(x), x)); };
  const Tensor both = grad(add(scale(f(), alpha), scale(g(), beta)), {x})[0];
  const Tensor gf = grad(f(), {x})[0], gg = grad(g(), {x})[0];
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_NEAR(both.at(i), alpha * gf.at(i) + beta * gg.at(i), 1e-12);
  }
}

TEST(Autodiff, SecondOrderLinearCritic) {
  // D(x) = a.x has grad_x D = a, so d/da [1/2 |a|^2] = a.
  Tensor a = randn({5}, 3, 1.0, true);
  Tensor x = randn({5}, 4, 1.0, true);
  const Tensor gx = grad(sum(mul(a, x)), {x}, {.create_graph = true})[0];
  const GradMap gm = second_order_grad(scale(sum(square(gx)), 0.5));
  const Tensor ga = gm.get(a);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(ga.at(i), a.at(i), 1e-15);
}

TEST(Autodiff, SecondOrderConstantCriticIsZero) {
  Tensor a = randn({5}, 3, 1.0, true);
  Tensor x = randn({5}, 4, 1.0, true);
  const Tensor gx = grad(add(sum(a), scale(sum(x), 0.0)), {x}, {.create_graph = true})[0];
  const GradMap gm = second_order_grad(sum(square(gx)));
  const Tensor ga = gm.get(a);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(ga.at(i), 0.0);
}

TEST(Autodiff, SecondOrderQuadraticMatchesFiniteDifferences) {
  // D(x) = 1/2 w.x^2, grad_x D = w x, target 1/2 |w x0|^2 with derivative w x0^2.
  Tensor w = randn({6}, 5, 1.0, true);
  const Tensor x0 = randn({6}, 6);
  auto build = [&] {
    Tensor x = x0.detach().set_requires_grad(true);
    const Tensor gx = grad(scale(sum(mul(w, square(x))), 0.5), {x}, {.create_graph = true})[0];
    return scale(sum(square(gx)), 0.5);
  };
  const GradMap gm = second_order_grad(build());
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(gm.get(w).at(i), w.at(i) * x0.at(i) * x0.at(i), 1e-12);
  }
  const auto report = finite_diff_check(build, {w}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Autodiff, SecondOrderWithoutCreateGraphThrows) {
  Tensor a = randn({5}, 3, 1.0, true);
  Tensor x = randn({5}, 4, 1.0, true);
  const Tensor gx = grad(sum(mul(a, mul(x, x))), {x})[0];
  EXPECT_THROW(second_order_grad(sum(square(gx))), GradError);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  std::vector<Tensor> p{Tensor::from({2}, {1.0, -2.0}).set_requires_grad(true)};
  AdamState st = AdamState::for_params(p);
  adam_step(p, {Tensor::zeros({2})}, st);
  EXPECT_EQ(p[0].to_vector(), (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(st.step_count, 1);
}

TEST(Adam, FirstStepMatchesHandEvaluation) {
  std::vector<Tensor> p{Tensor::scalar(0.5).set_requires_grad(true)};
  AdamState st = AdamState::for_params(p, 2e-3, 0.0, 0.99, 1e-8);
  adam_step(p, {Tensor::scalar(1.0)}, st);
  // m_hat = 1, v_hat = 1.
  EXPECT_NEAR(p[0].item() - 0.5, -2e-3 * (1.0 / (1.0 + 1e-8)), 1e-15);
}

TEST(Adam, MinimisesSquare) {
  // Adam moves about lr per step, so lr 1e-2 can cover the distance in 100 steps.
  std::vector<Tensor> p{Tensor::scalar(1.0).set_requires_grad(true)};
  AdamState st = AdamState::for_params(p, 1e-2);
  std::vector<double> trace{1.0};
  for (int i = 0; i < 100; ++i) {
    const auto g = grad(square(p[0]), p);
    adam_step(p, g, st);
    trace.push_back(std::abs(p[0].item()));
  }
  for (std::size_t i = 10; i < trace.size(); i += 10) EXPECT_LT(trace[i], trace[i - 10]);
  EXPECT_LT(trace.back(), 0.5);
}

TEST(GradCheck, LinearFunctionIsExactToRoundoff) {
  Tensor w = randn({4}, 9, 1.0, true);
  const Tensor c = randn({4}, 10);
  const auto report = finite_diff_check([&] { return sum(mul(w, c)); }, {w}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_rel_error, 1e-9);
}

TEST(GradCheck, ModulatedStackPasses) {
  Tensor w1 = randn({6, 5}, 11, 0.5, true), w2 = randn({3, 6}, 12, 0.5, true);
  const Tensor x = randn({8, 5}, 13);
  auto build = [&] { return sum(square(matmul(leaky_relu(matmul(x, w1, false, true), 0.2), w2, false, true))); };
  const auto report = finite_diff_check(build, {w1, w2}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(GradCheck, KinkAtSamplePointIsDetectedOnlyWhenAllowed) {
  // leaky_relu(x) at x = 0: one-sided slopes are 0.2 and 1, the central
  // difference is 0.6 and matches neither convention.
  Tensor x = Tensor::from({1}, {0.0}).set_requires_grad(true);
  auto build = [&] { return sum(leaky_relu(x, 0.2)); };
  const auto strict = finite_diff_check(build, {x}, 1e-5, 1e-4);
  EXPECT_FALSE(strict.passed);
  const auto lenient = finite_diff_check(build, {x}, 1e-5, 1e-4, {}, 0, true);
  EXPECT_TRUE(lenient.passed);
  EXPECT_EQ(lenient.one_sided, 1u);
  // Moving the input off the kink makes the central difference valid again.
  x.mutable_data()[0] = 0.1;
  EXPECT_TRUE(finite_diff_check(build, {x}, 1e-5, 1e-4).passed);
}

TEST(GradCheck, NonDeterministicBuilderThrows) {
  Tensor w = randn({2}, 1, 1.0, true);
  double drift = 0.0;
  auto build = [&] {
    drift += 1.0;
    return add_scalar(sum(w), drift);
  };
  EXPECT_THROW(finite_diff_check(build, {w}, 1e-5, 1e-4), std::runtime_error);
}

TEST(TensorIo, RoundTripAndAlignment) {
  const Tensor t = randn({3, 5}, 14);
  std::stringstream ss;
  write_tensor(ss, t, DType::f64, "weights");
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 8), std::string("CTNSR01\0", 8));
  EXPECT_EQ(bytes.size() % 64, 0u);
  const NamedTensor back = read_tensor(ss);
  EXPECT_EQ(back.name, "weights");
  EXPECT_TRUE(test::bit_equal(back.tensor, t));
}

TEST(TensorIo, Float32StorageRoundsValues) {
  const Tensor t = Tensor::from({3}, {0.1, -2.5, 1e-3});
  std::stringstream ss;
  write_tensor(ss, t, DType::f32);
  const NamedTensor back = read_tensor(ss);
  EXPECT_EQ(back.dtype, DType::f32);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.tensor.at(i), double(float(t.at(i))));
}

TEST(TensorIo, BadMagicAndTruncationThrow) {
  std::stringstream bad("NOTATENSOR-----------------------");
  EXPECT_THROW(read_tensor(bad), TensorFormatError);
  std::stringstream ss;
  write_tensor(ss, randn({4, 4}, 15));
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 70));
  EXPECT_THROW(read_tensor(cut), TensorFormatError);
}
