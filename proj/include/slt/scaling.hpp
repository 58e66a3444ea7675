#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "slt/error.hpp"
#include "slt/network.hpp"

namespace slt {

/// Per-layer positive weight multipliers.
struct ScaleVector {
  std::vector<double> sigma;

  double product() const {
    double p = 1.0;
    for (double s : sigma) p *= s;
    return p;
  }
};

/// w(l) <- sigma_l w(l), b(l) <- (prod_{m<=l} sigma_m) b(l). The output of the
/// transformed network is (prod sigma_l) times the original output.
inline Network apply_scaling(const Network& net, const ScaleVector& s) {
  detail::require_shape(static_cast<int>(s.sigma.size()) == net.depth(),
                        "scale vector length must equal network depth");
  for (double v : s.sigma)
    detail::require_config(v > 0.0 && std::isfinite(v), "scale factors must be positive");
  Network out = net;
  double running = 1.0;
  for (std::size_t k = 0; k < s.sigma.size(); ++k) {
    running *= s.sigma[k];
    out.weights[k] *= s.sigma[k];
    out.biases[k] *= running;
  }
  return out;
}

/// Spread an output factor lambda uniformly: every layer gets lambda^(1/L).
inline Network distribute_lambda(const Network& net, double lambda) {
  detail::require_config(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
  const double per_layer = std::pow(lambda, 1.0 / static_cast<double>(net.depth()));
  return apply_scaling(net, ScaleVector{std::vector<double>(static_cast<std::size_t>(net.depth()),
                                                            per_layer)});
}

struct LambdaFit {
  double lambda = 1.0;
  bool warning = false;
  std::string note;
};

/// Closed-form minimizer of sum ||y - lambda x||^2 over real lambda.
inline LambdaFit fit_lambda_mse(const Matrix& predictions, const Matrix& targets) {
  detail::require_shape(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(),
                        "predictions and targets differ in shape");
  const double den = predictions.squaredNorm();
  if (!(den > 0.0) || !std::isfinite(den))
    return {1.0, true, "all-zero predictions: lambda undefined, no rescale"};
  return {predictions.cwiseProduct(targets).sum() / den, false, {}};
}

/// Golden-section search for the minimum of a unimodal f on [lo, hi].
template <typename F>
double golden_section_minimize(F&& f, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  // compare the interior estimate against the end points so monotone
  // objectives land exactly on the boundary
  double best = 0.5 * (a + b);
  double fbest = f(best);
  for (double x : {lo, hi}) {
    const double fx = f(x);
    if (fx < fbest) {
      best = x;
      fbest = fx;
    }
  }
  return best;
}

inline constexpr double kLambdaMin = 1e-6;
inline constexpr double kLambdaMax = 1e6;

/// One-dimensional minimization of loss(lambda) over lambda > 0.
///
/// Golden-section on [lambda0/64, 64 lambda0] to absolute tolerance 1e-6; the
/// bracket is expanded (within [1e-6, 1e6]) while the minimum sits on an edge.
template <typename Loss>
LambdaFit fit_lambda_generic(Loss&& loss, double lambda0 = 1.0, double tol = 1e-6) {
  detail::require_config(lambda0 > 0.0 && std::isfinite(lambda0), "lambda0 must be positive");
  const double l0 = loss(lambda0);
  detail::require_config(std::isfinite(l0), "loss must be finite at lambda0");

  auto safe = [&](double lam) {
    const double v = loss(lam);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  double lo = std::max(lambda0 / 64.0, kLambdaMin);
  double hi = std::min(lambda0 * 64.0, kLambdaMax);
  for (;;) {
    int finite = 0;
    for (int k = 0; k <= 8; ++k)
      if (std::isfinite(safe(lo + (hi - lo) * k / 8.0))) ++finite;
    if (finite == 0) throw NumericError("loss is non-finite across the lambda bracket");

    const double x = golden_section_minimize(safe, lo, hi, tol);
    const bool at_hi = hi - x <= tol;
    const bool at_lo = x - lo <= tol;
    if (at_hi && hi < kLambdaMax) {
      lo = std::max(lo, hi / 64.0);
      hi = std::min(hi * 64.0, kLambdaMax);
      continue;
    }
    if (at_lo && lo > kLambdaMin) {
      hi = std::min(hi, lo * 64.0);
      lo = std::max(lo / 64.0, kLambdaMin);
      continue;
    }
    if (at_hi) return {hi, true, "minimum at upper bracket edge"};
    if (at_lo) return {lo, true, "minimum at lower bracket edge"};
    return {x, false, {}};
  }
}

}  // namespace slt
