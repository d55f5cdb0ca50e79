#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "dapair/optim.hpp"

using namespace dapair;

namespace {

double first_step_delta(double g, double lr = 1e-3) {
  Tensor p = Tensor::parameter({1, 1}, {0.0});
  std::vector<Tensor> params{p};
  AdamState state = AdamState::for_parameters(params, AdamOptions{lr});
  p.zero_grad();
  Tape tape;
  tape.backward(tape.scale(p, g));
  adam_step(params, state);
  return p.values()[0];
}

}  // namespace

TEST(Adam, FirstStepUnitGradient) { EXPECT_NEAR(first_step_delta(1.0), -0.001, 1e-10); }

TEST(Adam, FirstStepIsScaleAware) {
  for (double g : {1e-3, 1.0, 1e3, -1e3}) {
    const double delta = first_step_delta(g);
    EXPECT_NEAR(std::abs(delta), 1e-3, 1e-5) << g;
    EXPECT_EQ(std::signbit(delta), g > 0) << g;
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Tensor p = Tensor::parameter({1, 3}, {0.5, -1.0, 2.0});
  std::vector<Tensor> params{p};
  AdamState state = AdamState::for_parameters(params, {});
  for (int i = 0; i < 5; ++i) {
    p.zero_grad();
    adam_step(params, state);
  }
  EXPECT_EQ(p.values()[0], 0.5);
  EXPECT_EQ(p.values()[1], -1.0);
  EXPECT_EQ(p.values()[2], 2.0);
  p.clear_grad();
  adam_step(params, state);
  EXPECT_EQ(p.values()[2], 2.0);
}

TEST(Adam, MatchesHandComputedTwoSteps) {
  Tensor p = Tensor::parameter({1, 1}, {1.0});
  std::vector<Tensor> params{p};
  AdamState state = AdamState::for_parameters(params, {});
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    const double g = 2.0 * x;  // d/dx x²
    p.zero_grad();
    Tape tape;
    tape.backward(tape.square(p));
    adam_step(params, state);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.values()[0], x, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientAborts) {
  Tensor p = Tensor::parameter({1, 2}, {1.0, 2.0});
  std::vector<Tensor> params{p};
  AdamState state = AdamState::for_parameters(params, {});
  p.zero_grad();
  Tape tape;
  tape.backward(tape.reduce_sum(tape.scale(p, std::numeric_limits<double>::infinity())));
  EXPECT_THROW(adam_step(params, state), TrainingDiverged);
  EXPECT_EQ(p.values()[0], 1.0);
  EXPECT_EQ(state.step, 0u);
}

class Plateau : public ::testing::Test {
 protected:
  MlpModel model = init_mlp(MlpSpec::binary_classifier({4}, 1));

  void perturb() {
    for (auto& p : model.parameters())
      for (double& v : p.mutable_values()) v += 0.125;
  }
};

TEST_F(Plateau, TenNonImprovementsHalveOnceAndRestore) {
  PlateauScheduler s;
  double lr = 1e-3;
  auto out = s.update(0.8, model, lr);
  EXPECT_TRUE(out.improved);
  const ModelSnapshot best = model.snapshot();
  int decays = 0;
  for (int i = 0; i < 10; ++i) {
    perturb();
    out = s.update(0.8 - 0.01 * i, model, lr);
    lr = out.lr;
    decays += out.decayed ? 1 : 0;
    if (i < 9) EXPECT_FALSE(out.decayed);
  }
  EXPECT_EQ(decays, 1);
  EXPECT_EQ(lr, 0.5e-3);
  EXPECT_TRUE(out.decayed);
  EXPECT_EQ(model.snapshot().weights, best.weights);
  EXPECT_EQ(model.snapshot().biases, best.biases);
  EXPECT_EQ(s.bad_epochs(), 0u);
}

TEST_F(Plateau, EqualIsNotImprovement) {
  PlateauScheduler s({0.5, 2});
  double lr = 1.0;
  s.update(0.5, model, lr);
  auto out = s.update(0.5, model, lr);
  EXPECT_FALSE(out.improved);
  out = s.update(0.5, model, lr);
  EXPECT_TRUE(out.decayed);
  EXPECT_EQ(out.lr, 0.5);
}

TEST_F(Plateau, ImprovementResetsCounter) {
  PlateauScheduler s({0.5, 3});
  s.update(0.5, model, 1.0);
  s.update(0.4, model, 1.0);
  s.update(0.4, model, 1.0);
  auto out = s.update(0.6, model, 1.0);
  EXPECT_TRUE(out.improved);
  EXPECT_EQ(s.bad_epochs(), 0u);
  EXPECT_EQ(s.best_index(), 3u);
  EXPECT_EQ(*s.best(), 0.6);
}

TEST_F(Plateau, InvalidOptions) {
  EXPECT_THROW(PlateauScheduler({1.0, 10}), DomainError);
  EXPECT_THROW(PlateauScheduler({0.5, 0}), DomainError);
  PlateauScheduler s;
  EXPECT_THROW(s.update(std::nan(""), model, 1.0), DomainError);
}
