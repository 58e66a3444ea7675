#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "slt/init.hpp"
#include "slt/scaling.hpp"
#include "test_util.hpp"

using namespace slt;
using test::random_mask;
using test::random_matrix;
using test::random_network;

namespace {

double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST(ApplyScaling, UnitScalesAreIdentity) {
  const Network net = random_network({{3, 4, 2}, false}, 1);
  EXPECT_EQ(apply_scaling(net, {{1.0, 1.0}}), net);
}

TEST(ApplyScaling, SingleLayerDoubles) {
  const Network net = random_network({{2, 3}, true}, 2);
  const Network s = apply_scaling(net, {{2.0}});
  EXPECT_EQ(s.weights[0], Matrix(2.0 * net.weights[0]));
  EXPECT_EQ(s.biases[0], Vector(2.0 * net.biases[0]));
  const Matrix x = random_matrix(2, 5, 3);
  EXPECT_LE(rel_err(predict(s, x), 2.0 * predict(net, x)), 1e-15);
}

TEST(ApplyScaling, DepthThreeExample) {
  const Network net = random_network({{4, 8, 8, 3}, false}, 4);
  const Network s = apply_scaling(net, {{2.0, 0.5, 3.0}});
  const Matrix x = random_matrix(4, 100, 5);
  EXPECT_LE(rel_err(predict(s, x), 3.0 * predict(net, x)), 1e-9);
}

TEST(ApplyScaling, RandomDepthsWithAndWithoutMasks) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto rng = make_rng(seed, {0x5CA});
    const int depth = 1 + static_cast<int>(rng() % 8);
    Architecture a;
    a.output_linear = seed % 2;
    a.widths.push_back(1 + static_cast<Index>(rng() % 5));
    for (int l = 0; l < depth; ++l) a.widths.push_back(1 + static_cast<Index>(rng() % 10));
    const Network net = random_network(a, seed);
    ScaleVector s;
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int l = 0; l < depth; ++l) s.sigma.push_back(std::exp(u(rng)));
    const Network t = apply_scaling(net, s);
    const Matrix x = random_matrix(a.input_width(), 50, seed + 1);
    const Matrix base = predict(net, x);
    if (base.cwiseAbs().maxCoeff() > 0) EXPECT_LE(rel_err(predict(t, x), s.product() * base), 1e-9);
    const Mask m = random_mask(a, seed + 2, 0.7);
    const Matrix mb = predict(net, m, x);
    if (mb.cwiseAbs().maxCoeff() > 0) EXPECT_LE(rel_err(predict(t, m, x), s.product() * mb), 1e-9);
  }
}

TEST(ApplyScaling, Errors) {
  const Network net = random_network({{2, 3, 1}, false}, 1);
  EXPECT_THROW(apply_scaling(net, {{1.0}}), StructuralError);
  EXPECT_THROW(apply_scaling(net, {{1.0, 0.0}}), ConfigError);
  EXPECT_THROW(apply_scaling(net, {{-1.0, 1.0}}), ConfigError);
}

TEST(ApplyScaling, InverseInitScaleIsIdentityOnOutputs) {
  const Architecture a{{3, 12, 3, 12, 2}, true};
  const InitSpec spec{InitScheme::uniform, {0.3, 0.7, 1.5, 0.2}, false, 7};
  const Network net = initialize(a, spec);
  ScaleVector inv;
  double lambda = 1.0;
  for (double s : spec.sigma_w) {
    inv.sigma.push_back(1.0 / s);
    lambda /= s;
  }
  const Matrix x = random_matrix(3, 30, 8);
  EXPECT_LE(rel_err(predict(apply_scaling(net, inv), x), lambda * predict(net, x)), 1e-9);
  // unit-scale draw with the same seed is the normalized network
  const Network unit = initialize(a, {InitScheme::uniform, {1, 1, 1, 1}, false, 7});
  const Network back = apply_scaling(net, inv);
  for (std::size_t k = 0; k < unit.weights.size(); ++k) {
    EXPECT_LE((back.weights[k] - unit.weights[k]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((back.biases[k] - unit.biases[k]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DistributeLambda, ExampleSixteenOverFour) {
  const Network net = random_network({{2, 3, 3, 3, 1}, true}, 9);
  const Network d = distribute_lambda(net, 16.0);
  const double expect[] = {2, 4, 8, 16};
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_LE((d.weights[k] - 2.0 * net.weights[k]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((d.biases[k] - expect[k] * net.biases[k]).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DistributeLambda, OutputScalesAndComposes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Network net = random_network({{3, 7, 7, 7, 2}, true}, seed);
    const Matrix x = random_matrix(3, 20, seed + 5);
    const double la = 0.3 + seed * 0.2, lb = 5.0 / (1.0 + seed);
    EXPECT_LE(rel_err(predict(distribute_lambda(net, la), x), la * predict(net, x)), 1e-9);
    const Network two = distribute_lambda(distribute_lambda(net, la), lb);
    const Network one = distribute_lambda(net, la * lb);
    EXPECT_LE(rel_err(predict(two, x), predict(one, x)), 1e-9);
  }
  const Network net = random_network({{2, 2}, true}, 1);
  EXPECT_EQ(distribute_lambda(net, 1.0), net);
  EXPECT_THROW(distribute_lambda(net, 0.0), ConfigError);
  EXPECT_THROW(distribute_lambda(net, -2.0), ConfigError);
}

TEST(FitLambdaMse, ExactCases) {
  const Matrix x = random_matrix(2, 10, 1);
  EXPECT_NEAR(fit_lambda_mse(x, 3.0 * x).lambda, 3.0, 1e-14);
  Matrix p(1, 2), y(1, 2);
  p << 1, 1;
  y << 1, -1;
  EXPECT_EQ(fit_lambda_mse(p, y).lambda, 0.0);
  const auto z = fit_lambda_mse(Matrix::Zero(1, 3), Matrix::Ones(1, 3));
  EXPECT_EQ(z.lambda, 1.0);
  EXPECT_TRUE(z.warning);
  EXPECT_THROW(fit_lambda_mse(Matrix::Zero(1, 3), Matrix::Ones(2, 3)), StructuralError);
}

TEST(FitLambdaMse, MatchesGridSearch) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = random_matrix(2, 50, s, 0.0, 1.0);
    const Matrix y = (1.0 + 0.4 * s) * x + 0.3 * random_matrix(2, 50, s + 99);
    const double lam = fit_lambda_mse(x, y).lambda;
    auto loss = [&](double l) { return (y - l * x).squaredNorm(); };
    // coarse grid, then refine around the best cell
    double best = 0.0;
    for (double g = 0.0; g <= 10.0; g += 1e-3)
      if (loss(g) < loss(best)) best = g;
    double lo = best - 1e-3, hi = best + 1e-3, fine = best;
    for (int i = 0; i <= 20000; ++i) {
      const double g = lo + (hi - lo) * i / 20000.0;
      if (loss(g) < loss(fine)) fine = g;
    }
    EXPECT_NEAR(lam, fine, 1e-6);
    auto rng = make_rng(s, {0xD});
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (int k = 0; k < 20; ++k) EXPECT_LE(loss(lam), loss(lam + u(rng)));
  }
}

TEST(FitLambdaGeneric, Quadratic) {
  const auto f = fit_lambda_generic([](double l) { return (l - 2.0) * (l - 2.0); });
  EXPECT_NEAR(f.lambda, 2.0, 1e-6);
  EXPECT_FALSE(f.warning);
}

TEST(FitLambdaGeneric, AgreesWithClosedForm) {
  const Matrix x = random_matrix(1, 40, 3, 0.0, 1.0);
  const Matrix y = 7.5 * x + 0.1 * random_matrix(1, 40, 4);
  const double closed = fit_lambda_mse(x, y).lambda;
  const auto g = fit_lambda_generic([&](double l) { return (y - l * x).squaredNorm(); });
  EXPECT_NEAR(g.lambda, closed, 1e-5);
}

TEST(FitLambdaGeneric, FarMinimumNeedsBracketExpansion) {
  const auto f = fit_lambda_generic([](double l) { return (std::log(l) - std::log(5e4)) * (std::log(l) - std::log(5e4)); });
  EXPECT_NEAR(f.lambda, 5e4, 5e4 * 1e-6 + 1e-3);
}

TEST(FitLambdaGeneric, MonotoneLossHitsUpperEdgeWithWarning) {
  const auto f = fit_lambda_generic([](double l) { return -l; });
  EXPECT_TRUE(f.warning);
  EXPECT_DOUBLE_EQ(f.lambda, kLambdaMax);
}

TEST(FitLambdaGeneric, Errors) {
  EXPECT_THROW(fit_lambda_generic([](double) { return std::numeric_limits<double>::quiet_NaN(); }),
               ConfigError);
  EXPECT_THROW(fit_lambda_generic([](double l) {
                 return l == 1.0 ? 0.0 : std::numeric_limits<double>::infinity();
               }),
               NumericError);
  EXPECT_THROW(fit_lambda_generic([](double l) { return l; }, -1.0), ConfigError);
}
