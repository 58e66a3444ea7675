#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "slt/error.hpp"
#include "slt/init.hpp"
#include "slt/network.hpp"
#include "slt/rng.hpp"
#include "slt/scaling.hpp"
#include "slt/subset_sum.hpp"

namespace slt {

/// Target network annotated with neuron in-degrees
/// k_i(l) = ||W_i,:(l)||_0 + ||b_i(l)||_0 and their per-layer maxima.
struct TargetNetwork {
  Network net;
  std::vector<std::vector<int>> in_degree;
  std::vector<int> k_max;
  double theta_max = 0.0;

  int depth() const { return net.depth(); }
};

inline TargetNetwork make_target(Network net) {
  net.validate();
  TargetNetwork t;
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    const auto& w = net.weights[k];
    const auto& b = net.biases[k];
    std::vector<int> deg(static_cast<std::size_t>(w.rows()));
    for (Index i = 0; i < w.rows(); ++i)
      deg[static_cast<std::size_t>(i)] =
          static_cast<int>((w.row(i).array() != 0.0).count()) + (b(i) != 0.0 ? 1 : 0);
    t.k_max.push_back(*std::max_element(deg.begin(), deg.end()));
    t.in_degree.push_back(std::move(deg));
    t.theta_max = std::max({t.theta_max, w.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
  }
  t.net = std::move(net);
  return t;
}

/// Random target with exactly ceil(density * n_l * n_{l-1}) nonzero weights per
/// layer at uniformly chosen positions; weights and biases ~ U[-1, 1].
inline Network random_sparse_target(const Architecture& arch, double weight_density,
                                    std::uint64_t seed) {
  detail::require_config(weight_density > 0.0 && weight_density <= 1.0,
                         "weight density must lie in (0, 1]");
  Network net = Network::zeros(arch);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    auto rng = make_rng(seed, {0x7A26E7, k});
    auto& w = net.weights[k];
    const auto total = static_cast<std::size_t>(w.size());
    const auto keep = static_cast<std::size_t>(
        std::ceil(weight_density * static_cast<double>(total) - 1e-9));
    std::vector<std::size_t> pos(total);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::shuffle(pos.begin(), pos.end(), rng);
    for (std::size_t p = 0; p < keep; ++p) {
      const auto idx = static_cast<Index>(pos[p]);
      w(idx / w.cols(), idx % w.cols()) = u(rng);
    }
    for (Index i = 0; i < net.biases[k].size(); ++i) net.biases[k](i) = u(rng);
  }
  return net;
}

/// Uniform samples of [-1, 1]^n0 as columns, plus all 2^n0 vertices when n0 <= 10.
inline Matrix sample_box(Index n0, Index count, std::uint64_t seed, bool include_vertices = true) {
  const bool vertices = include_vertices && n0 <= 10;
  const Index nv = vertices ? (Index{1} << n0) : 0;
  Matrix x(n0, count + nv);
  auto rng = make_rng(seed, {0xB0C5});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (Index c = 0; c < count; ++c)
    for (Index r = 0; r < n0; ++r) x(r, c) = u(rng);
  for (Index v = 0; v < nv; ++v)
    for (Index r = 0; r < n0; ++r) x(r, count + v) = ((v >> r) & 1) ? 1.0 : -1.0;
  return x;
}

/// Per-layer parameter tolerances that keep the network sup-norm error <= epsilon.
struct EpsilonBudget {
  double epsilon = 0.0;
  std::vector<double> eps;     // eps_l
  std::vector<double> sup_l1;  // S_l >= sup ||x(l-1)||_1
  std::vector<double> w_inf;   // max_ij |w_ij(l)|
  std::vector<int> k_max;
};

/// eps_l = eps / ( L sqrt(n_l k_l,max) (1 + S_l) prod_{k>l} (||W(k)||_inf + eps/L) ).
inline EpsilonBudget epsilon_budget(const TargetNetwork& target, double epsilon,
                                    std::span<const double> sup_l1) {
  detail::require_config(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
  const int L = target.depth();
  detail::require_shape(static_cast<int>(sup_l1.size()) == L, "need one sup-norm bound per layer");
  EpsilonBudget b;
  b.epsilon = epsilon;
  b.sup_l1.assign(sup_l1.begin(), sup_l1.end());
  b.k_max = target.k_max;
  for (const auto& w : target.net.weights) b.w_inf.push_back(w.cwiseAbs().maxCoeff());
  const double per_layer = epsilon / static_cast<double>(L);
  for (int l = 1; l <= L; ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    const double n_l = static_cast<double>(target.net.arch.width(l));
    const double kmax = std::max(1, target.k_max[k]);
    double denom = static_cast<double>(L) * std::sqrt(n_l * kmax) * (1.0 + b.sup_l1[k]);
    for (int m = l + 1; m <= L; ++m) denom *= b.w_inf[static_cast<std::size_t>(m - 1)] + per_layer;
    const double e = epsilon / denom;
    if (!(e >= 1e-12))
      throw NumericError("eps_" + std::to_string(l) + " = " + std::to_string(e) +
                         " underflows; use a larger epsilon or a shallower target");
    b.eps.push_back(e);
  }
  return b;
}

/// S_l from sampled inputs: 1.1 * max_x ||x(l-1)||_1, optionally floored at n_{l-1}.
inline std::vector<double> estimate_sup_l1(const TargetNetwork& target, const Matrix& samples,
                                           bool analytic_floor = false) {
  const auto trace = forward(target.net, samples);
  std::vector<double> s;
  for (int l = 1; l <= target.depth(); ++l) {
    const auto& x = trace.activations[static_cast<std::size_t>(l - 1)];
    double v = 1.1 * x.cwiseAbs().colwise().sum().maxCoeff();
    if (analytic_floor) v = std::max(v, static_cast<double>(target.net.arch.width(l - 1)));
    s.push_back(v);
  }
  return s;
}

inline EpsilonBudget epsilon_budget(const TargetNetwork& target, double epsilon,
                                    const Matrix& samples, bool analytic_floor = false) {
  const auto s = estimate_sup_l1(target, samples, analytic_floor);
  return epsilon_budget(target, epsilon, std::span<const double>(s));
}

/// Depth-2L network whose odd layers host degree-one intermediary neurons.
struct MotherNetwork {
  Network net;
  InitSpec spec;
  std::vector<double> sigma_w;  // resolved weight scales, 2L entries
  /// Output scale: prod_l 1 / sigma_w,l.
  double lambda = 1.0;
  double C = 0.0;
  double delta = 0.0;
  std::vector<double> delta_l;
  /// For target layer l, group of each intermediary neuron: j < n_{l-1} reads
  /// source x_j, j == n_{l-1} carries the constant (bias) input.
  std::vector<std::vector<int>> groups;
};

inline constexpr std::size_t kDefaultMotherParamCap = 50'000'000;

/// Widths n_{2l-1} = ceil(C n_{l-1} log(1 / min(eps_l, delta_l))) and
/// n_{2l} = n_l with delta_l = delta / (L k_l,max n_l).
inline MotherNetwork build_mother(const TargetNetwork& target, const EpsilonBudget& budget,
                                  double delta, double C, InitSpec spec,
                                  std::size_t max_params = kDefaultMotherParamCap) {
  detail::require_config(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
  detail::require_config(C > 0.0, "width constant C must be positive");
  const int L = target.depth();
  detail::require_shape(static_cast<int>(budget.eps.size()) == L, "budget depth differs from target");
  const auto& tarch = target.net.arch;

  MotherNetwork m;
  m.C = C;
  m.delta = delta;
  Architecture arch;
  arch.output_linear = tarch.output_linear;
  arch.widths.push_back(tarch.input_width());
  for (int l = 1; l <= L; ++l) {
    const auto k = static_cast<std::size_t>(l - 1);
    const double n_l = static_cast<double>(tarch.width(l));
    const Index src = tarch.width(l - 1);
    const double dl = delta / (static_cast<double>(L) * std::max(1, target.k_max[k]) * n_l);
    m.delta_l.push_back(dl);
    const double lg = std::log(1.0 / std::min(budget.eps[k], dl));
    auto w = static_cast<Index>(std::ceil(C * static_cast<double>(src) * lg));
    w = std::max(w, src + 1);
    if (spec.scheme == InitScheme::looks_linear && w % 2) ++w;
    arch.widths.push_back(w);
    arch.widths.push_back(tarch.width(l));
    std::vector<int> g(static_cast<std::size_t>(w));
    for (Index i = 0; i < w; ++i) g[static_cast<std::size_t>(i)] = static_cast<int>(i % (src + 1));
    m.groups.push_back(std::move(g));
  }
  std::size_t params = 0;
  for (std::size_t i = 1; i < arch.widths.size(); ++i)
    params += static_cast<std::size_t>(arch.widths[i] * (arch.widths[i - 1] + 1));
  if (params > max_params)
    throw ConfigError("mother network needs " + std::to_string(params) +
                      " parameters, above the cap of " + std::to_string(max_params));

  m.sigma_w = spec.weight_scales(arch);
  m.spec = std::move(spec);
  m.net = initialize(arch, m.spec);
  for (double s : m.sigma_w) m.lambda /= s;
  return m;
}

enum class PlanKind { weight_pos, weight_neg, bias };

inline std::string_view to_string(PlanKind k) {
  switch (k) {
    case PlanKind::weight_pos: return "weight_pos";
    case PlanKind::weight_neg: return "weight_neg";
    case PlanKind::bias: return "bias";
  }
  return "?";
}

/// One subset-sum instance: target parameter theta approximated by the sum of
/// products (second-layer weight) x (intermediary coefficient) over `subset`.
struct PlanEntry {
  int layer = 0;  // target layer, 1-based
  PlanKind kind = PlanKind::weight_pos;
  Index row = 0;
  Index col = 0;  // source neuron for weights; -1 for biases
  double theta = 0.0;
  std::vector<Index> pool;    // intermediary neuron indices (mother layer 2l-1)
  std::vector<Index> subset;  // chosen intermediary neurons
  double achieved = 0.0;
  double residual = 0.0;
  bool ok = false;
};

struct ConstructionPlan {
  std::vector<PlanEntry> entries;
  std::vector<double> tolerance;  // per target layer
  bool success = true;
  std::vector<std::string> failures;
};

struct Ticket {
  Mask mask;
  ConstructionPlan plan;
  /// Output factor: target(x) ~ lambda * mother_masked(x).
  double lambda = 1.0;
};

/// Prune the mother network so that, layer pair by layer pair, it reproduces
/// x_i(l) = relu( sum_j w_ij relu(x_j) - sum_j w_ij relu(-x_j) + b_i relu(1) ).
///
/// Intermediary neurons keep one incoming weight (group j) or only a positive
/// bias (constant group); a neuron whose surviving weight w1 is positive serves
/// relu(x_j) with coefficient w1, a negative one serves relu(-x_j) with |w1|.
/// A parameter whose own pool has no subset within eps_l is retried on a pool
/// widened by every intermediary still unused in that layer.
inline Ticket extract_ticket(const MotherNetwork& mother, const TargetNetwork& target,
                             const EpsilonBudget& budget, std::uint64_t plan_seed) {
  const int L = target.depth();
  detail::require_shape(mother.net.depth() == 2 * L, "mother depth must be twice the target depth");
  detail::require_shape(static_cast<int>(budget.eps.size()) == L, "budget depth differs from target");

  // Undo the init scales (equivalent network with unit-scale parameters).
  ScaleVector inv;
  for (double s : mother.sigma_w) inv.sigma.push_back(1.0 / s);
  const Network unit = apply_scaling(mother.net, inv);

  Ticket t;
  t.mask = Mask::zeros(mother.net.arch);
  t.lambda = mother.lambda;
  t.plan.tolerance = budget.eps;

  for (int l = 1; l <= L; ++l) {
    const auto tk = static_cast<std::size_t>(l - 1);
    const auto a = static_cast<std::size_t>(2 * l - 2);
    const auto b = a + 1;
    const Index src = target.net.arch.width(l - 1);
    const auto& groups = mother.groups[tk];
    const Matrix& w1 = unit.weights[a];
    const Vector& b1 = unit.biases[a];
    const Matrix& w2 = unit.weights[b];
    const double tol = budget.eps[tk];

    struct Candidate {
      Index neuron;
      double coef;
    };
    std::vector<std::vector<Candidate>> pos(static_cast<std::size_t>(src)),
        neg(static_cast<std::size_t>(src));
    std::vector<Candidate> constant;
    for (Index k = 0; k < w1.rows(); ++k) {
      const int g = groups[static_cast<std::size_t>(k)];
      if (g < src) {
        const double c = w1(k, g);
        if (c > 0.0) pos[static_cast<std::size_t>(g)].push_back({k, c});
        else if (c < 0.0) neg[static_cast<std::size_t>(g)].push_back({k, -c});
      } else if (b1(k) > 0.0) {
        constant.push_back({k, b1(k)});
      }
    }

    std::vector<int> group = groups;
    std::vector<char> used(static_cast<std::size_t>(w1.rows()), 0);
    std::vector<double> products;
    auto attempt = [&](PlanEntry& e, const std::vector<Candidate>& cands) {
      products.clear();
      e.pool.clear();
      for (const auto& c : cands) {
        e.pool.push_back(c.neuron);
        products.push_back(w2(e.row, c.neuron) * c.coef);
      }
      SubsetSumOptions opt;
      opt.seed = derive_seed(plan_seed, {static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(e.kind),
                                         static_cast<std::uint64_t>(e.row), static_cast<std::uint64_t>(e.col + 1)});
      SubsetSumResult r;
      if (products.empty()) {
        r.residual = std::abs(e.theta);
        r.success = r.residual <= tol;
      } else {
        r = solve_subset_sum(products, e.theta, tol, opt);
      }
      e.subset.clear();
      for (auto k : r.subset) e.subset.push_back(cands[k].neuron);
      e.achieved = r.achieved;
      e.residual = r.residual;
      e.ok = r.success;
    };
    auto commit = [&](const PlanEntry& e) {
      for (Index n : e.subset) {
        used[static_cast<std::size_t>(n)] = 1;
        group[static_cast<std::size_t>(n)] = e.kind == PlanKind::bias ? static_cast<int>(src) : static_cast<int>(e.col);
        t.mask.weights[b](e.row, n) = 1.0;
      }
    };
    // Candidates of the entry's own group plus every still-unused neuron whose
    // coefficient for that input has the right sign.
    auto widened = [&](const PlanEntry& e) {
      std::vector<Candidate> out;
      for (Index k = 0; k < w1.rows(); ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (e.kind == PlanKind::bias) {
          if ((group[ku] == src || !used[ku]) && b1(k) > 0.0) out.push_back({k, b1(k)});
          continue;
        }
        if (group[ku] != e.col && used[ku]) continue;
        const double c = w1(k, e.col);
        if (e.kind == PlanKind::weight_pos && c > 0.0) out.push_back({k, c});
        if (e.kind == PlanKind::weight_neg && c < 0.0) out.push_back({k, -c});
      }
      return out;
    };

    std::vector<PlanEntry> pending;
    auto solve = [&](PlanKind kind, Index i, Index j, double theta, const std::vector<Candidate>& cands) {
      PlanEntry e;
      e.layer = l;
      e.kind = kind;
      e.row = i;
      e.col = j;
      e.theta = theta;
      attempt(e, cands);
      if (e.ok) {
        commit(e);
        t.plan.entries.push_back(std::move(e));
      } else {
        pending.push_back(std::move(e));
      }
    };

    const auto& tw = target.net.weights[tk];
    const auto& tb = target.net.biases[tk];
    for (Index i = 0; i < tw.rows(); ++i) {
      for (Index j = 0; j < src; ++j) {
        const double w = tw(i, j);
        if (w == 0.0) continue;
        solve(PlanKind::weight_pos, i, j, w, pos[static_cast<std::size_t>(j)]);
        solve(PlanKind::weight_neg, i, j, -w, neg[static_cast<std::size_t>(j)]);
      }
      if (tb(i) != 0.0) solve(PlanKind::bias, i, -1, tb(i), constant);
    }

    for (auto& e : pending) {
      attempt(e, widened(e));
      commit(e);
      if (!e.ok) {
        t.plan.success = false;
        t.plan.failures.push_back("layer " + std::to_string(l) + " " + std::string(to_string(e.kind)) + " (" +
                                  std::to_string(e.row) + "," + std::to_string(e.col) + "): residual " +
                                  std::to_string(e.residual) + " > " + std::to_string(tol));
      }
      t.plan.entries.push_back(std::move(e));
    }

    for (Index k = 0; k < w1.rows(); ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (!used[ku]) continue;
      if (group[ku] < src) t.mask.weights[a](k, group[ku]) = 1.0;
      else t.mask.biases[a](k) = 1.0;
    }
  }
  return t;
}

/// max over sample columns of ||f(x) - lambda * g(x)||_2.
inline double sampled_sup_error(const Network& f, const Network& g, const Mask& g_mask,
                                double lambda, const Matrix& samples) {
  const Matrix diff = predict(f, samples) - lambda * predict(g, g_mask, samples);
  return diff.colwise().norm().maxCoeff();
}

struct ConstructionConfig {
  double epsilon = 0.05;
  double delta = 0.1;
  double C = 10.0;
  InitSpec init{InitScheme::uniform, {}, false, 0};
  Index sup_samples = 10000;
  std::uint64_t seed = 0;
  std::size_t max_params = kDefaultMotherParamCap;
};

struct ConstructionReport {
  TargetNetwork target;
  /// Layerwise scales bringing every target parameter into [-1, 1].
  ScaleVector target_scale;
  EpsilonBudget budget;
  MotherNetwork mother;
  Ticket ticket;
  double sup_error = 0.0;
  double parameter_sparsity = 0.0;
  double weight_sparsity = 0.0;
  bool success = false;
};

/// Scales sigma_l <= 1 such that apply_scaling(net, sigma) has all |theta| <= 1.
inline ScaleVector unit_bound_scaling(const Network& net) {
  ScaleVector s;
  double running = 1.0;
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    double sigma = 1.0;
    const double wmax = net.weights[k].cwiseAbs().maxCoeff();
    const double bmax = net.biases[k].cwiseAbs().maxCoeff();
    if (wmax > 1.0) sigma = std::min(sigma, 1.0 / wmax);
    if (running * bmax > 1.0) sigma = std::min(sigma, 1.0 / (running * bmax));
    running *= sigma;
    s.sigma.push_back(sigma);
  }
  return s;
}

/// Budget, mother network and ticket for one target, plus the measured error.
inline ConstructionReport construct(const Network& target_net, const ConstructionConfig& cfg) {
  ConstructionReport rep;
  rep.target = make_target(target_net);
  rep.target_scale = unit_bound_scaling(target_net);
  const double shrink = rep.target_scale.product();
  const TargetNetwork scaled = make_target(apply_scaling(target_net, rep.target_scale));

  const Matrix samples = sample_box(target_net.arch.input_width(), cfg.sup_samples,
                                    derive_seed(cfg.seed, {0x5A}));
  rep.budget = epsilon_budget(scaled, cfg.epsilon * shrink, samples);
  InitSpec spec = cfg.init;
  spec.seed = derive_seed(cfg.seed, {0x307E});
  rep.mother = build_mother(scaled, rep.budget, cfg.delta, cfg.C, spec, cfg.max_params);
  rep.ticket = extract_ticket(rep.mother, scaled, rep.budget, derive_seed(cfg.seed, {0x9A7}));
  rep.ticket.lambda /= shrink;
  rep.sup_error = sampled_sup_error(target_net, rep.mother.net, rep.ticket.mask, rep.ticket.lambda,
                                    samples);
  rep.parameter_sparsity = rep.ticket.mask.parameter_sparsity();
  rep.weight_sparsity = rep.ticket.mask.weight_sparsity();
  rep.success = rep.ticket.plan.success;
  return rep;
}

struct Calibration {
  double C = 0.0;
  /// (C, failure rate) for every tried constant
  std::vector<std::pair<double, double>> history;
  bool converged = false;
};

/// Smallest C = C0 * 2^k whose construction failure rate over `trials`
/// targets from make_target_net(t) is at most delta. A trial fails when the
/// plan fails or the sampled error exceeds epsilon.
template <typename TargetFn>
Calibration calibrate_C(TargetFn&& make_target_net, ConstructionConfig cfg, int trials,
                        double C0 = 10.0, int max_doublings = 5) {
  detail::require_config(trials >= 1, "calibration needs at least one trial");
  Calibration cal;
  double C = C0;
  for (int k = 0; k <= max_doublings; ++k, C *= 2.0) {
    cfg.C = C;
    int failures = 0;
    for (int t = 0; t < trials; ++t) {
      ConstructionConfig c = cfg;
      c.seed = derive_seed(cfg.seed, {0xCA1, static_cast<std::uint64_t>(t)});
      const auto rep = construct(make_target_net(t), c);
      if (!rep.success || rep.sup_error > cfg.epsilon) ++failures;
    }
    const double rate = static_cast<double>(failures) / trials;
    cal.history.emplace_back(C, rate);
    cal.C = C;
    if (rate <= cfg.delta) {
      cal.converged = true;
      break;
    }
  }
  return cal;
}

/// Ticket invariant: every retained intermediary neuron has exactly one
/// retained incoming parameter (a weight or its bias).
inline bool intermediaries_have_degree_one(const Mask& mask) {
  for (std::size_t a = 0; a + 1 < mask.weights.size(); a += 2) {
    const auto& w = mask.weights[a];
    const auto& b = mask.biases[a];
    const auto& out = mask.weights[a + 1];
    for (Index k = 0; k < w.rows(); ++k) {
      const auto deg = (w.row(k).array() != 0.0).count() + (b(k) != 0.0 ? 1 : 0);
      const bool feeds = (out.col(k).array() != 0.0).any();
      if (feeds && deg != 1) return false;
      if (!feeds && deg != 0) return false;
    }
  }
  return true;
}

}  // namespace slt
