#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slt/slt.hpp"
#include "test_util.hpp"

using namespace slt;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Logs from the criterion-8 runs, reused by criterion 10.
std::vector<EpochLog> g_shifted_logs;

Outcome criterion1() {
  const auto c = counterexample_const();
  const double e1 = std::max({std::abs(c.numeric_w_plus - 0.75), std::abs(c.numeric_w_minus - 0.75),
                              std::abs(c.numeric_loss - 0.125), std::abs(c.quadrature_loss - 0.125)});
  const bool const_ok = c.w_plus == 0.75 && c.w_minus == 0.75 && c.loss == 0.125 && e1 <= 1e-6;
  const auto x = counterexample_exp();
  const double reference_gap = std::abs(x.reference_loss - x.quadrature_loss);
  const double corrected_gap = std::abs(x.loss - x.quadrature_loss);
  const bool exp_ok = reference_gap <= 1e-6;
  return {const_ok && exp_ok,
          fmt("const: max oracle gap %.2e; exp: reference %.6f vs quadrature %.6f (gap %.2e, tol 1e-6); "
              "corrected closed form %.6f (gap %.2e)",
              e1, x.reference_loss, x.quadrature_loss, reference_gap, x.loss, corrected_gap)};
}

Outcome criterion2() {
  auto rng = make_rng(2, {0xF2});
  std::uniform_int_distribution<int> depth(1, 6), width(1, 32);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Architecture a;
    a.widths.push_back(1);
    const int L = depth(rng);
    for (int l = 0; l < L; ++l) a.widths.push_back(width(rng));
    a.output_linear = coin(rng);
    Network net = test::random_network(a, derive_seed(2, {static_cast<std::uint64_t>(t)}));
    for (auto& b : net.biases) b.setZero();
    const auto f = factorize_univariate(net);
    Matrix x(1, 201);
    for (Index i = 0; i <= 200; ++i) x(0, i) = -1.0 + 0.01 * static_cast<double>(i);
    const Matrix y = predict(net, x);
    for (Index i = 0; i <= 200; ++i)
      worst = std::max(worst, (y.col(i) - evaluate_factorization(f, x(0, i))).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-9, fmt("1000 nets, 201-point grid, max error %.2e (tol 1e-9)", worst)};
}

Outcome criterion3() {
  auto rng = make_rng(3, {0xF3});
  std::uniform_int_distribution<int> depth(1, 6), width(1, 20);
  std::uniform_real_distribution<double> log_s(-1.5, 1.5);
  double worst_plain = 0.0, worst_masked = 0.0, worst_comp = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto seed = derive_seed(3, {static_cast<std::uint64_t>(t)});
    Architecture a;
    a.widths.push_back(width(rng));
    const int L = depth(rng);
    for (int l = 0; l < L; ++l) a.widths.push_back(width(rng));
    a.output_linear = t % 2 == 0;
    const Network net = test::random_network(a, seed);
    ScaleVector s;
    for (int l = 0; l < L; ++l) s.sigma.push_back(std::exp(log_s(rng)));
    const Matrix x = test::random_matrix(a.widths[0], 20, seed);
    const Mask m = test::random_mask(a, seed, 0.6);
    auto rel = [](const Matrix& got, const Matrix& want) {
      return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
    };
    const Network scaled = apply_scaling(net, s);
    worst_plain = std::max(worst_plain, rel(predict(scaled, x), s.product() * predict(net, x)));
    worst_masked = std::max(worst_masked, rel(predict(scaled, m, x), s.product() * predict(net, m, x)));
    const double a1 = std::exp(log_s(rng)), a2 = std::exp(log_s(rng));
    const Network twice = distribute_lambda(distribute_lambda(net, a1), a2);
    const Network once = distribute_lambda(net, a1 * a2);
    worst_comp = std::max({worst_comp, rel(predict(twice, x), predict(once, x)),
                           rel(predict(once, x), a1 * a2 * predict(net, x))});
  }
  const double worst = std::max({worst_plain, worst_masked, worst_comp});
  return {worst <= 1e-9, fmt("100 nets: unmasked %.2e, masked %.2e, composition %.2e (tol 1e-9)", worst_plain,
                             worst_masked, worst_comp)};
}

Outcome criterion4() {
  const Architecture a{{4, 50, 50, 50}, false};
  Vector x0(4);
  x0 << 1, -1, 1, -1;
  bool ok = true;
  std::string detail;
  for (auto scheme : {InitScheme::normal, InitScheme::uniform, InitScheme::looks_linear}) {
    const auto r = verify_signal_moment(a, {scheme, {}, false, 4}, x0, 100000);
    ok = ok && std::abs(r.z_score) <= 3.0;
    detail += fmt("%s: empirical %.4f predicted %.4f z %.2f; ", std::string(to_string(scheme)).c_str(),
                  r.empirical, r.predicted, r.z_score);
  }
  const double he = predict_signal_moment(a, {InitScheme::normal, {}, false, 0}, x0.squaredNorm());
  const double ref = x0.squaredNorm() + 1.0;
  const double dev = std::abs(he - ref) / ref;
  ok = ok && dev <= 0.02;
  detail += fmt("He prediction %.4f vs ||x0||^2+1 = %.1f (%.2f%%, tol 2%%)", he, ref, 100.0 * dev);
  return {ok, detail};
}

Outcome criterion5() {
  double worst_ratio = 0.0;
  int cases = 0;
  for (double eps : {0.01, 0.1}) {
    for (std::uint64_t t = 0; t < 20; ++t) {
      const Network net = random_sparse_target({{3, 10, 8, 2}, false}, 0.6, derive_seed(5, {t}));
      const auto target = make_target(net);
      const Matrix x = sample_box(3, 10000, derive_seed(5, {t, 1}));
      const auto budget = epsilon_budget(target, eps, x);
      Network p = net;
      auto rng = make_rng(5, {t, 2});
      std::bernoulli_distribution coin(0.5);
      for (std::size_t k = 0; k < p.weights.size(); ++k) {
        for (Index i = 0; i < p.weights[k].size(); ++i)
          p.weights[k].data()[i] += coin(rng) ? budget.eps[k] : -budget.eps[k];
        for (Index i = 0; i < p.biases[k].size(); ++i) p.biases[k](i) += coin(rng) ? budget.eps[k] : -budget.eps[k];
      }
      worst_ratio = std::max(worst_ratio, sampled_sup_error(net, p, Mask::ones(p.arch), 1.0, x) / eps);
      ++cases;
    }
  }
  return {worst_ratio <= 1.0, fmt("%d targets, max sup error / epsilon = %.3f (tol 1)", cases, worst_ratio)};
}

Outcome criterion6() {
  const Architecture arch{{4, 10, 5, 2}, false};
  ConstructionConfig cfg;
  cfg.epsilon = 0.05;
  cfg.delta = 0.1;
  cfg.seed = 6;
  auto calib_target = [&](int t) {
    return random_sparse_target(arch, 0.5, derive_seed(6, {0xCA1B, static_cast<std::uint64_t>(t)}));
  };
  const auto cal = calibrate_C(calib_target, cfg, 200, 10.0, 5);
  cfg.C = cal.C;
  int ok = 0, bound_violations = 0;
  double worst_err = 0.0, worst_sparsity = 0.0, sum_sparsity = 0.0;
  for (int t = 0; t < 50; ++t) {
    ConstructionConfig c = cfg;
    c.seed = derive_seed(6, {0xE7A1, static_cast<std::uint64_t>(t)});
    const auto rep = construct(random_sparse_target(arch, 0.5, derive_seed(6, {0x7A6, static_cast<std::uint64_t>(t)})), c);
    if (!rep.success) continue;
    ++ok;
    worst_err = std::max(worst_err, rep.sup_error);
    if (rep.sup_error > cfg.epsilon) ++bound_violations;
    worst_sparsity = std::max(worst_sparsity, rep.parameter_sparsity);
    sum_sparsity += rep.parameter_sparsity;
  }
  const bool pass = ok >= 45 && bound_violations == 0 && worst_sparsity < 1e-2;
  return {pass, fmt("calibrated C = %g; success %d/50 (need 45); max sup error %.4f (eps 0.05); "
                    "ticket sparsity mean %.2e max %.2e (need < 1e-2)",
                    cfg.C, ok, worst_err, ok ? sum_sparsity / ok : NAN, worst_sparsity)};
}

Outcome criterion7() {
  int feasible = 0, heuristic = 0, production = 0;
  for (std::uint64_t t = 0; t < 300; ++t) {
    auto rng = make_rng(7, {t});
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> pool(20);
    for (auto& v : pool) v = u(rng) * std::abs(u(rng));
    const double target = u(rng);
    const double tol = 1e-3;
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t m = 0; m < (1u << 20); ++m) {
      double s = 0.0;
      for (int k = 0; k < 20; ++k)
        if ((m >> k) & 1u) s += pool[static_cast<std::size_t>(k)];
      best = std::min(best, std::abs(target - s));
    }
    if (best > tol) continue;
    ++feasible;
    heuristic += solve_subset_sum(pool, target, tol, {64, 0, false, t, 0}).success;
    production += solve_subset_sum(pool, target, tol, {64, 24, true, t}).success;
  }
  const double rate = feasible ? static_cast<double>(heuristic) / feasible : 0.0;
  return {feasible > 0 && rate >= 0.95,
          fmt("%d feasible instances; greedy+restart solved %d (%.1f%%, need 95%%); full solver %d", feasible,
              heuristic, 100.0 * rate, production)};
}

struct Variant {
  std::string name;
  bool rescale;
  bool zero_bias;
};

std::vector<PruneRun> run_variant(ExperimentConfig cfg, const Variant& v, double sparsity, int seeds) {
  cfg.prune.rescale = v.rescale;
  cfg.init.zero_bias = v.zero_bias;
  std::vector<PruneRun> runs;
  for (int r = 0; r < seeds; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    runs.push_back(run_prune(cfg, sparsity, r));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("  [%s] %s rho=%g rep=%d metric=%.6g lambda_cum=%.4g (%.0f s)\n", cfg.dataset.generator.c_str(),
                v.name.c_str(), sparsity, r, runs.back().row.test_metric, runs.back().row.lambda_cumulative, secs);
    std::fflush(stdout);
  }
  return runs;
}

double median_metric(const std::vector<PruneRun>& runs) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(r.row.test_metric);
  return median(v);
}

const Variant kScaledBias{"scaled/bias", true, false};
const Variant kScaledZero{"scaled/zero-bias", true, true};
const Variant kPlainBias{"unscaled/bias", false, false};
const Variant kPlainZero{"unscaled/zero-bias", false, true};

Outcome criterion8() {
  ExperimentConfig cfg;
  cfg.seed = 8;
  auto keep_logs = [](const std::vector<PruneRun>& runs) {
    for (const auto& r : runs) g_shifted_logs.insert(g_shifted_logs.end(), r.result.log.begin(), r.result.log.end());
  };
  const auto a_bias = run_variant(cfg, kScaledBias, 0.05, 5);
  const auto a_zero = run_variant(cfg, kScaledZero, 0.05, 5);
  const auto b_scaled = run_variant(cfg, kScaledBias, 0.01, 5);
  const auto b_plain = run_variant(cfg, kPlainBias, 0.01, 5);
  keep_logs(a_bias);
  keep_logs(a_zero);
  keep_logs(b_scaled);
  const double m1 = median_metric(a_bias), m2 = median_metric(a_zero);
  const double m3 = median_metric(b_scaled), m4 = median_metric(b_plain);
  return {m1 < m2 && m3 < m4,
          fmt("(a) rho=0.05 median MSE bias %.4g vs zero-bias %.4g; (b) rho=0.01 scaled %.4g vs unscaled %.4g", m1,
              m2, m3, m4)};
}

Outcome criterion9() {
  ExperimentConfig cfg;
  cfg.seed = 9;
  cfg.dataset.generator = "onion";
  const double a1 = median_metric(run_variant(cfg, kScaledBias, 0.1, 5));
  const double a2 = median_metric(run_variant(cfg, kScaledZero, 0.1, 5));
  std::map<std::string, double> m;
  for (const auto& v : {kScaledBias, kScaledZero, kPlainBias, kPlainZero})
    m[v.name] = median_metric(run_variant(cfg, v, 0.01, 5));
  const double best_other = std::max({m[kScaledZero.name], m[kPlainBias.name], m[kPlainZero.name]});
  const double margin = 100.0 * (m[kScaledBias.name] - best_other);
  return {a1 > a2 && margin >= 0.0,
          fmt("rho=0.1 median accuracy bias %.4f vs zero-bias %.4f; rho=0.01 scaled/bias %.4f vs scaled/zero %.4f, "
              "unscaled/bias %.4f, unscaled/zero %.4f (margin %.1f points, need >= 0, expected >= 5)",
              a1, a2, m[kScaledBias.name], m[kScaledZero.name], m[kPlainBias.name], m[kPlainZero.name], margin)};
}

double grid_argmin(const std::function<double(double)>& f, double lo, double hi) {
  double best = lo;
  for (int round = 0; round < 8; ++round) {
    const double step = (hi - lo) / 1000.0;
    double fbest = INFINITY;
    for (int i = 0; i <= 1000; ++i) {
      const double x = lo + step * i;
      const double v = f(x);
      if (v < fbest) fbest = v, best = x;
    }
    lo = best - step;
    hi = best + step;
  }
  return best;
}

Outcome criterion10(bool have_logs) {
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    const Matrix x = test::random_matrix(2, 50, derive_seed(10, {t}));
    const Matrix y = std::sin(static_cast<double>(t)) * 3.0 * x + 0.3 * test::random_matrix(2, 50, derive_seed(10, {t, 1}));
    const double closed = fit_lambda_mse(x, y).lambda;
    const double grid = grid_argmin([&](double l) { return (y - l * x).squaredNorm(); }, -10.0, 10.0);
    worst = std::max(worst, std::abs(closed - grid));
  }
  std::string detail = fmt("closed form vs grid max gap %.2e (tol 1e-6)", worst);
  bool ok = worst <= 1e-6;
  if (!have_logs) return {false, detail + "; rescale log unavailable (criterion 8 not run)"};
  int counted = 0, improved = 0, clamped = 0;
  for (const auto& e : g_shifted_logs) {
    if (e.lambda_clamped) {
      ++clamped;
      continue;
    }
    ++counted;
    improved += e.loss_after_rescale <= e.loss_before_rescale * (1.0 + 1e-12);
  }
  const double rate = counted ? static_cast<double>(improved) / counted : 0.0;
  ok = ok && counted > 0 && rate >= 0.99;
  detail += fmt("; post-rescale loss <= pre-rescale in %d/%d epochs (%.2f%%, need 99%%), %d clamped exempt", improved,
                counted, 100.0 * rate, clamped);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int n) { return selected.empty() || selected.count(n) > 0; };

  const std::vector<std::function<Outcome()>> checks{
      criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7, criterion8, criterion9,
      [&] { return criterion10(wanted(8)); }};
  int failures = 0;
  for (int n = 1; n <= 10; ++n) {
    if (!wanted(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = checks[static_cast<std::size_t>(n - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s %s [%.1f s]\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
