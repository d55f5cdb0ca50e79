#include <cmath>
#include <cstring>

#include <gtest/gtest.h>

#include "dapair/tensor.hpp"
#include "test_util.hpp"

using namespace dapair;

TEST(Tensor, ShapeAndAccess) {
  const Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(t.item(), ContractError);
}

TEST(Tensor, MutableValuesOnlyOnLeaves) {
  Tensor a = Tensor::parameter({1, 2}, {1, 2});
  Tape tape;
  Tensor b = tape.scale(a, 2.0);
  EXPECT_NO_THROW(a.mutable_values());
  EXPECT_THROW(b.mutable_values(), ContractError);
}

TEST(Tensor, MatmulIdentityAndOnes) {
  Tape tape(GradMode::inference);
  const Tensor id = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor v = Tensor::column({5, 7});
  const Tensor r = tape.matmul(id, v);
  EXPECT_EQ(r(0, 0), 5.0);
  EXPECT_EQ(r(1, 0), 7.0);

  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  const Tensor s = tape.matmul(m, Tensor::column({1, 1}));
  EXPECT_EQ(s(0, 0), 3.0);
  EXPECT_EQ(s(1, 0), 7.0);
  EXPECT_THROW(tape.matmul(m, Tensor::column({1, 1, 1})), DimensionError);
}

TEST(Tensor, ReluSubgradientAtZero) {
  Tensor x = Tensor::parameter({1, 3}, {-1.0, 0.0, 2.0});
  Tape tape;
  tape.backward(tape.reduce_sum(tape.relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 1.0);
}

TEST(Tensor, SigmoidStable) {
  Tape tape(GradMode::inference);
  EXPECT_NEAR(tape.sigmoid(Tensor::row({std::log(3.0)})).item(), 0.75, 1e-15);
  const double tiny = tape.sigmoid(Tensor::row({-50.0})).item();
  EXPECT_GT(tiny, 0.0);
  EXPECT_LT(tiny, 1e-20);
  const double huge = tape.sigmoid(Tensor::row({800.0})).item();
  EXPECT_EQ(huge, 1.0);
  EXPECT_EQ(tape.sigmoid(Tensor::row({-800.0})).item(), 0.0);
}

TEST(Tensor, ReduceMean) {
  Tensor x = Tensor::parameter({2, 2}, {1, 2, 3, 4});
  Tape tape;
  const Tensor m = tape.reduce_mean(x);
  EXPECT_EQ(m.item(), 2.5);
  tape.backward(m);
  for (double g : x.grad()) EXPECT_EQ(g, 0.25);
  Tape other;
  EXPECT_THROW(other.reduce_mean(Tensor({0, 0}, {})), DomainError);
}

TEST(Tensor, BackwardRejectsNonScalar) {
  Tensor x = Tensor::parameter({1, 2}, {1, 2});
  Tape tape;
  EXPECT_THROW(tape.backward(tape.scale(x, 2.0)), ContractError);
}

TEST(Tensor, FanOutAccumulates) {
  Tensor x = Tensor::parameter({1, 1}, {3.0});
  Tape tape;
  tape.backward(tape.add(x, x));
  EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Tensor, TapeSweptOnce) {
  Tensor x = Tensor::parameter({1, 1}, {3.0});
  Tape tape;
  const Tensor y = tape.square(x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Tensor, InferenceRecordsNothing) {
  Tensor x = Tensor::parameter({1, 2}, {1, 2});
  Tape tape(GradMode::inference);
  const Tensor y = tape.reduce_sum(tape.square(x));
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_EQ(y.item(), 5.0);
}

TEST(Tensor, LogRejectsNonPositive) {
  Tape tape;
  EXPECT_THROW(tape.log(Tensor::row({1.0, 0.0})), DomainError);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Tape tape(GradMode::inference);
  const Tensor p = tape.softmax_rows(Tensor::from_rows({{1, 2, 3}, {1000, 1000, 1000}}));
  for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(p(r, 0) + p(r, 1) + p(r, 2), 1.0, 1e-15);
  EXPECT_NEAR(p(1, 0), 1.0 / 3.0, 1e-15);
}

TEST(Tensor, CheckGradientsOnElementwiseOps) {
  auto rng = test::Generator(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x = rng.tensor(3, 4);
    const Tensor w = rng.tensor(4, 2);
    const Tensor b = rng.tensor(1, 2);
    auto f = [&](Tape& t, const Tensor& in) {
      Tensor h = t.add_bias(t.matmul(in, w), b);
      h = t.mul(t.sigmoid(h), t.exp(t.scale(h, 0.3)));
      h = t.add_scalar(t.square(h), 1.0);
      return t.reduce_mean(t.log(t.softmax_rows(t.sub(h, t.scale(h, 0.5)))));
    };
    EXPECT_LT(check_gradients(f, x), 1e-6);
  }
}

TEST(Tensor, CheckGradientsDetectsWrongGradient) {
  // A function whose forward differs between record and inference mode cannot
  // pass: the analytic gradient comes from the recorded pass.
  auto f = [](Tape& t, const Tensor& in) {
    const double k = t.mode() == GradMode::record ? 2.0 : 3.0;
    return t.reduce_sum(t.scale(in, k));
  };
  EXPECT_GT(check_gradients(f, Tensor::row({1.0, 2.0})), 0.1);
}

TEST(Tensor, BackwardIsLinear) {
  auto rng = test::Generator(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> v = rng.values(6);
    const double a = rng.normal(), b = rng.normal();
    auto grad_of = [&](auto build) {
      Tensor x = Tensor::parameter({2, 3}, v);
      Tape tape;
      tape.backward(build(tape, x));
      return std::vector<double>(x.grad().begin(), x.grad().end());
    };
    auto f = [](Tape& t, const Tensor& x) { return t.reduce_sum(t.mul(t.sigmoid(x), x)); };
    auto g = [](Tape& t, const Tensor& x) { return t.reduce_mean(t.square(t.relu(x))); };
    const auto gf = grad_of(f), gg = grad_of(g);
    const auto gc = grad_of([&](Tape& t, const Tensor& x) { return t.add(t.scale(f(t, x), a), t.scale(g(t, x), b)); });
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-12);
  }
}

TEST(Tensor, ForwardIsBitwiseDeterministic) {
  auto rng = test::Generator(3);
  const Tensor x = rng.tensor(64, 16), w = rng.tensor(16, 8), t = rng.tensor(40, 8);
  const std::vector<double> sigmas{0.5, 1.0}, weights{1.0, 1.0};
  auto run = [&] {
    Tape tape(GradMode::inference);
    const Tensor h = tape.sigmoid(tape.matmul(x, w));
    return std::pair{std::vector<double>(h.values().begin(), h.values().end()),
                     tape.rbf_mmd(h, t, sigmas, weights).item()};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(0, std::memcmp(a.first.data(), b.first.data(), a.first.size() * sizeof(double)));
  EXPECT_EQ(0, std::memcmp(&a.second, &b.second, sizeof(double)));
}
