#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "slt/error.hpp"
#include "slt/init.hpp"
#include "slt/network.hpp"
#include "slt/rng.hpp"
#include "slt/scaling.hpp"

namespace slt {

// ---------------------------------------------------------------------------
// Univariate zero-bias factorization f(x) = W+ relu(x) + W- relu(-x)

struct Factorization {
  Vector w_plus;
  Vector w_minus;
  /// max |difference| between the evaluation and recursion routes
  double route_gap = 0.0;
};

namespace detail {

inline void require_univariate_zero_bias(const Network& net) {
  net.validate();
  require_shape(net.arch.input_width() == 1, "factorization needs a univariate input");
  for (const auto& b : net.biases)
    if ((b.array() != 0.0).any()) throw StructuralError("factorization needs all biases exactly 0");
}

}  // namespace detail

/// W+ = f(1), W- = f(-1).
inline Factorization factorize_by_evaluation(const Network& net) {
  detail::require_univariate_zero_bias(net);
  Matrix x(1, 2);
  x << 1.0, -1.0;
  const Matrix y = predict(net, x);
  return {y.col(0), y.col(1), 0.0};
}

/// W+(1) = relu(W(1)), W-(1) = relu(-W(1)); W+-(l+1) = relu(W(l+1) W+-(l)),
/// without the clipping at a linear output layer.
inline Factorization factorize_by_recursion(const Network& net) {
  detail::require_univariate_zero_bias(net);
  Vector p = net.weights[0].col(0);
  Vector m = -net.weights[0].col(0);
  const int L = net.depth();
  auto clip = [&](Vector& v, int l) {
    if (detail::layer_is_relu(net.arch, l)) v = v.cwiseMax(0.0);
  };
  clip(p, 1);
  clip(m, 1);
  for (int l = 2; l <= L; ++l) {
    const auto& w = net.weights[static_cast<std::size_t>(l - 1)];
    p = w * p;
    m = w * m;
    clip(p, l);
    clip(m, l);
  }
  return {p, m, 0.0};
}

/// Evaluation route, cross-checked against the recursion route.
inline Factorization factorize_univariate(const Network& net) {
  auto f = factorize_by_evaluation(net);
  const auto r = factorize_by_recursion(net);
  f.route_gap = std::max((f.w_plus - r.w_plus).cwiseAbs().maxCoeff(),
                         (f.w_minus - r.w_minus).cwiseAbs().maxCoeff());
  const double scale = 1.0 + std::max(f.w_plus.cwiseAbs().maxCoeff(), f.w_minus.cwiseAbs().maxCoeff());
  if (!(f.route_gap <= 1e-9 * scale))
    throw NumericError("factorization routes disagree by " + std::to_string(f.route_gap));
  return f;
}

inline Vector evaluate_factorization(const Factorization& f, double x) {
  return f.w_plus * std::max(x, 0.0) + f.w_minus * std::max(-x, 0.0);
}

// ---------------------------------------------------------------------------
// Quadrature

namespace detail {

template <typename F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance tol.
template <typename F>
double integrate(const F& f, double a, double b, double tol = 1e-9, int max_depth = 50) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

/// int_{-1}^{1} (g(x) - w+ relu(x) - w- relu(-x))^2 dx, split at the kink.
template <typename G>
double zero_bias_loss(const G& g, double w_plus, double w_minus, double tol = 1e-9) {
  auto neg = [&](double x) {
    const double r = g(x) - w_minus * (-x);
    return r * r;
  };
  auto pos = [&](double x) {
    const double r = g(x) - w_plus * x;
    return r * r;
  };
  return integrate(neg, -1.0, 0.0, 0.5 * tol) + integrate(pos, 0.0, 1.0, 0.5 * tol);
}

struct CounterexampleResult {
  double w_plus = 0.0;
  double w_minus = 0.0;
  /// analytic minimum loss
  double loss = 0.0;
  /// quadrature of the loss at the analytic minimizer
  double quadrature_loss = 0.0;
  /// coordinate-wise golden-section minimization of the quadrature loss
  double numeric_w_plus = 0.0;
  double numeric_w_minus = 0.0;
  double numeric_loss = 0.0;
};

namespace detail {

template <typename G>
void numeric_counterexample(const G& g, CounterexampleResult& r) {
  double wp = 0.0, wm = 0.0;
  for (int pass = 0; pass < 2; ++pass) {
    wp = golden_section_minimize([&](double w) { return zero_bias_loss(g, w, wm); }, -10.0, 10.0, 1e-9);
    wm = golden_section_minimize([&](double w) { return zero_bias_loss(g, wp, w); }, -10.0, 10.0, 1e-9);
  }
  r.numeric_w_plus = wp;
  r.numeric_w_minus = wm;
  r.numeric_loss = zero_bias_loss(g, wp, wm);
  r.quadrature_loss = zero_bias_loss(g, r.w_plus, r.w_minus);
}

}  // namespace detail

/// Best zero-bias fit of the constant 0.5 on [-1, 1].
inline CounterexampleResult counterexample_const() {
  CounterexampleResult r;
  r.w_plus = 0.75;
  r.w_minus = 0.75;
  r.loss = 0.125;
  detail::numeric_counterexample([](double) { return 0.5; }, r);
  return r;
}

struct ExpCounterexampleResult : CounterexampleResult {
  /// Reference closed form 11.5/e - 12/e^2 + e^2/2 - 6; it disagrees with the integral (see README).
  double reference_loss = 0.0;
};

/// Best zero-bias fit of e^x on [-1, 1].
inline ExpCounterexampleResult counterexample_exp() {
  const double e = std::numbers::e;
  ExpCounterexampleResult r;
  r.w_plus = 3.0;
  r.w_minus = -3.0 * (2.0 / e - 1.0);
  // int_0^1 (e^x - 3x)^2 = e^2/2 - 7/2 and int_0^1 (e^-t - w t)^2 = 1/2 - 1/(2e^2) - 3(1 - 2/e)^2
  r.loss = 12.0 / e - 12.5 / (e * e) + 0.5 * e * e - 6.0;
  r.reference_loss = 11.5 / e - 12.0 / (e * e) + 0.5 * e * e - 6.0;
  detail::numeric_counterexample([](double x) { return std::exp(x); }, r);
  return r;
}

/// int_{-1}^{1} ||g(x) - f(x)||^2 dx for a univariate network with scalar output.
template <typename G>
double interval_loss(const Network& net, const G& g, double tol = 1e-9) {
  detail::require_shape(net.arch.input_width() == 1 && net.arch.output_width() == 1,
                        "interval loss needs a scalar univariate network");
  auto sq = [&](double x) {
    Matrix in(1, 1);
    in(0, 0) = x;
    const double r = g(x) - predict(net, in)(0, 0);
    return r * r;
  };
  return integrate(sq, -1.0, 0.0, 0.5 * tol) + integrate(sq, 0.0, 1.0, 0.5 * tol);
}

// ---------------------------------------------------------------------------
// Second moment of the output at initialization

enum class MomentFormula { enorm, orthovar };

/// Closed-form E||f(x0)||^2 for standard deviations sigma_w,l and sigma_b,l.
///
/// enorm:    ||x0||^2 prod_l (n_l s_w,l^2 / 2) + sum_l (s_b,l^2 n_l / 2) prod_{k>l} (n_k s_w,k^2 / 2)
/// orthovar: ||x0||^2 + sum_l s_b,l^2 n_l / 2
///
/// A linear output layer drops the halving at layer L.
inline double predict_signal_moment(const Architecture& arch, std::span<const double> sigma_w,
                                    std::span<const double> sigma_b, double x0_sq,
                                    MomentFormula formula = MomentFormula::enorm) {
  arch.validate();
  const int L = arch.depth();
  detail::require_shape(static_cast<int>(sigma_b.size()) == L, "need one bias scale per layer");
  if (formula == MomentFormula::enorm)
    detail::require_shape(static_cast<int>(sigma_w.size()) == L, "need one weight scale per layer");
  auto half = [&](int l) { return detail::layer_is_relu(arch, l) ? 0.5 : 1.0; };
  const auto k = [](int l) { return static_cast<std::size_t>(l - 1); };

  if (formula == MomentFormula::orthovar) {
    double v = x0_sq;
    for (int l = 1; l <= L; ++l)
      v += sigma_b[k(l)] * sigma_b[k(l)] * static_cast<double>(arch.width(l)) * half(l);
    return v;
  }
  double v = x0_sq;
  for (int l = 1; l <= L; ++l) {
    const double gain =
        static_cast<double>(arch.width(l)) * sigma_w[k(l)] * sigma_w[k(l)] * half(l);
    v = v * gain + sigma_b[k(l)] * sigma_b[k(l)] * static_cast<double>(arch.width(l)) * half(l);
  }
  return v;
}

struct SignalMomentReport {
  double predicted = 0.0;
  double empirical = 0.0;
  double std_error = 0.0;
  Index trials = 0;
  double relative_deviation = 0.0;
  /// (empirical - predicted) / std_error; 0 when both are exact
  double z_score = 0.0;
  MomentFormula formula = MomentFormula::enorm;
  bool output_linear = false;
};

/// Standard deviations of weights and biases implied by an InitSpec.
inline std::pair<std::vector<double>, std::vector<double>> init_std(const Architecture& arch,
                                                                    const InitSpec& spec) {
  auto w = spec.weight_scales(arch);
  auto b = spec.bias_scales(arch);
  const double k = spec.scheme == InitScheme::uniform ? 1.0 / std::sqrt(3.0) : 1.0;
  for (auto& v : w) v *= k;
  for (auto& v : b) v = spec.zero_bias ? 0.0 : v * k;
  return {w, b};
}

inline double predict_signal_moment(const Architecture& arch, const InitSpec& spec, double x0_sq) {
  const auto [w, b] = init_std(arch, spec);
  return predict_signal_moment(
      arch, w, b, x0_sq,
      spec.scheme == InitScheme::looks_linear ? MomentFormula::orthovar : MomentFormula::enorm);
}

/// Monte-Carlo mean of ||f(x0)||^2 over `trials` independently initialized nets.
inline SignalMomentReport verify_signal_moment(const Architecture& arch, const InitSpec& spec,
                                               const Vector& x0, Index trials) {
  detail::require_config(trials >= 1000, "signal moment check needs at least 1000 trials");
  detail::require_shape(x0.size() == arch.input_width(), "x0 width differs from input width");
  SignalMomentReport rep;
  rep.trials = trials;
  rep.output_linear = arch.output_linear;
  rep.formula =
      spec.scheme == InitScheme::looks_linear ? MomentFormula::orthovar : MomentFormula::enorm;
  rep.predicted = predict_signal_moment(arch, spec, x0.squaredNorm());

  const Matrix x = x0;
  double sum = 0.0, sum_sq = 0.0;
  InitSpec s = spec;
  for (Index t = 0; t < trials; ++t) {
    s.seed = derive_seed(spec.seed, {0x51C, static_cast<std::uint64_t>(t)});
    const double v = predict(initialize(arch, s), x).squaredNorm();
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(trials);
  rep.empirical = sum / n;
  const double var = std::max(0.0, (sum_sq - n * rep.empirical * rep.empirical) / (n - 1.0));
  rep.std_error = std::sqrt(var / n);
  const double diff = rep.empirical - rep.predicted;
  rep.relative_deviation = rep.predicted != 0.0 ? std::abs(diff) / rep.predicted : std::abs(diff);
  rep.z_score = rep.std_error > 0.0 ? diff / rep.std_error : (std::abs(diff) <= 1e-12 ? 0.0 : INFINITY);
  return rep;
}

}  // namespace slt
