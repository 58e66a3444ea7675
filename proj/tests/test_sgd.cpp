#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "slt/sgd.hpp"

using namespace slt;

namespace {

ParameterTensors single(double w, double b) {
  ParameterTensors p = ParameterTensors::filled({{1, 1}, false}, 0.0);
  p.weights[0](0, 0) = w;
  p.biases[0](0) = b;
  return p;
}

}  // namespace

TEST(Sgd, PlainGradientStep) {
  SgdConfig cfg{0.1, 0.0, 0.0, LrSchedule::constant, 1, 32};
  auto p = single(1.0, -2.0);
  SgdState st;
  sgd_step(p, single(0.5, 1.0), st, cfg, 0);
  EXPECT_DOUBLE_EQ(p.weights[0](0, 0), 0.95);
  EXPECT_DOUBLE_EQ(p.biases[0](0), -2.1);
}

TEST(Sgd, MomentumAndWeightDecayRecurrence) {
  SgdConfig cfg{0.1, 0.9, 0.01, LrSchedule::constant, 1, 32};
  auto p = single(1.0, 0.0);
  SgdState st;
  double theta = 1.0, v = 0.0;
  for (int s = 0; s < 5; ++s) {
    const double g = 0.3 * s - 0.2;
    sgd_step(p, single(g, 0.0), st, cfg, static_cast<std::size_t>(s));
    v = 0.9 * v + g + 0.01 * theta;
    theta -= 0.1 * v;
    EXPECT_NEAR(p.weights[0](0, 0), theta, 1e-15);
  }
}

TEST(Sgd, CosineSchedule) {
  SgdConfig cfg{0.1, 0.9, 0.0, LrSchedule::cosine, 100, 32};
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 0), 0.1);
  EXPECT_NEAR(learning_rate_at(cfg, 50), 0.05, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 100), 0.0, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 25), 0.05 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
}

TEST(Sgd, ConfigValidation) {
  EXPECT_THROW((SgdConfig{0.0, 0.9, 0.0, LrSchedule::constant, 1, 32}.validate()), ConfigError);
  EXPECT_THROW((SgdConfig{0.1, 1.0, 0.0, LrSchedule::constant, 1, 32}.validate()), ConfigError);
  EXPECT_THROW((SgdConfig{0.1, 0.5, -1.0, LrSchedule::constant, 1, 32}.validate()), ConfigError);
  EXPECT_NO_THROW((SgdConfig{0.1, 0.0, 0.0, LrSchedule::cosine, 10, 1}.validate()));
}

TEST(Sgd, ShapeMismatchThrows) {
  auto p = single(1.0, 0.0);
  SgdState st;
  SgdConfig cfg;
  EXPECT_THROW(sgd_step(p, ParameterTensors::filled({{2, 1}, false}, 0.0), st, cfg, 0), StructuralError);
}
