#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/network.hpp"
#include "slt/rng.hpp"
#include "slt/scaling.hpp"
#include "slt/sgd.hpp"

namespace slt {

/// Frozen network plus one popup score per weight and bias. The mask is
/// always derived from the scores, never stored independently.
struct ScoredNetwork {
  Network net;
  ParameterTensors scores;
  /// Whether layer l's biases compete for the layer's budget. Layers whose
  /// biases are all exactly zero (zero-bias init) keep them out of the pool.
  std::vector<bool> bias_in_pool;

  static ScoredNetwork with_constant_scores(Network net, double score) {
    ScoredNetwork s{std::move(net), {}, {}};
    s.scores = ParameterTensors::filled(s.net.arch, score);
    for (const auto& b : s.net.biases) s.bias_in_pool.push_back(!b.isZero(0.0));
    return s;
  }
};

/// Number of pool entries kept at a given sparsity: ceil(sparsity * pool),
/// at least one. The small slack absorbs products like 0.05 * 200.
inline std::size_t retained_budget(double sparsity, std::size_t pool) {
  const double raw = sparsity * static_cast<double>(pool);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, pool);
}

/// Per-layer top-k mask. Weights (row-major) come first in the pool, then
/// biases; ties are broken towards the lower index.
inline Mask get_mask(const ParameterTensors& scores, const std::vector<bool>& bias_in_pool,
                     double sparsity) {
  detail::require_config(sparsity > 0.0 && sparsity <= 1.0, "sparsity must lie in (0, 1]");
  detail::require_shape(bias_in_pool.size() == scores.weights.size(),
                        "bias pool flags must cover every layer");
  Mask mask{ParameterTensors{scores.weights, scores.biases}};
  std::vector<double> vals;
  std::vector<std::uint32_t> idx;
  for (std::size_t l = 0; l < scores.weights.size(); ++l) {
    const auto& sw = scores.weights[l];
    const auto& sb = scores.biases[l];
    const Index rows = sw.rows(), cols = sw.cols();
    const std::size_t nw = static_cast<std::size_t>(sw.size());
    const std::size_t pool = nw + (bias_in_pool[l] ? static_cast<std::size_t>(sb.size()) : 0);
    vals.resize(pool);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) vals[static_cast<std::size_t>(i * cols + j)] = sw(i, j);
    if (bias_in_pool[l])
      for (Index i = 0; i < sb.size(); ++i) vals[nw + static_cast<std::size_t>(i)] = sb(i);
    idx.resize(pool);
    std::iota(idx.begin(), idx.end(), 0u);
    const std::size_t k = retained_budget(sparsity, pool);
    auto better = [&](std::uint32_t a, std::uint32_t b) {
      return vals[a] > vals[b] || (vals[a] == vals[b] && a < b);
    };
    if (k < pool) std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    auto& mw = mask.weights[l];
    auto& mb = mask.biases[l];
    mw.setZero();
    mb.setZero();
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t p = idx[r];
      if (p < nw)
        mw(static_cast<Index>(p) / cols, static_cast<Index>(p) % cols) = 1.0;
      else
        mb(static_cast<Index>(p - nw)) = 1.0;
    }
  }
  return mask;
}

inline Mask get_mask(const ScoredNetwork& scored, double sparsity) {
  return get_mask(scored.scores, scored.bias_in_pool, sparsity);
}

/// Geometric annealing [rho^(1/e_a), rho^(2/e_a), ..., rho].
inline std::vector<double> anneal_schedule(double rho, int levels) {
  detail::require_config(rho > 0.0 && rho <= 1.0, "target sparsity must lie in (0, 1]");
  detail::require_config(levels >= 1, "annealing needs at least one level");
  std::vector<double> out;
  for (int i = 1; i < levels; ++i)
    out.push_back(std::pow(rho, static_cast<double>(i) / static_cast<double>(levels)));
  out.push_back(rho);
  return out;
}

struct PruneConfig {
  double target_sparsity = 0.05;
  int annealing_levels = 5;
  int epochs_per_level = 10;
  /// total_steps is filled in by edge_popup from the data and epoch counts.
  SgdConfig sgd{};
  bool rescale = true;
  double score_init = 0.5;
  std::uint64_t seed = 0;
  /// Samples used for the per-epoch lambda fit.
  Index rescale_subsample = 4096;

  void validate() const {
    detail::require_config(target_sparsity > 0.0 && target_sparsity <= 1.0,
                           "target sparsity must lie in (0, 1]");
    detail::require_config(annealing_levels >= 1, "annealing levels must be >= 1");
    detail::require_config(epochs_per_level >= 1, "epochs per level must be >= 1");
    detail::require_config(rescale_subsample >= 1, "rescale subsample must be >= 1");
  }
};

struct EpochLog {
  int level = 0;
  int epoch = 0;
  double sparsity = 1.0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double lambda_epoch = 1.0;
  double lambda_cumulative = 1.0;
  double loss_before_rescale = 0.0;
  double loss_after_rescale = 0.0;
  bool lambda_clamped = false;
  bool lambda_warning = false;
};

struct PruneResult {
  /// Network after all rescale events (identical to the input when rescale is off).
  Network net;
  Mask mask;
  ParameterTensors scores;
  double lambda_last = 1.0;
  double lambda_cumulative = 1.0;
  std::vector<EpochLog> log;
};

/// Loss of a prediction batch against the dataset's columns `cols`.
inline LossValue task_loss(const Dataset& ds, const Matrix& out, std::span<const int> labels,
                           const Matrix* targets) {
  if (ds.kind == TaskKind::regression) return mse_loss(out, *targets);
  return cross_entropy_loss(out, labels);
}

/// Test-style metric: MSE for regression, accuracy for classification.
inline double task_metric(const Dataset& ds, const Matrix& out) {
  if (ds.kind == TaskKind::regression) return mse(out, ds.targets);
  return accuracy(out, ds.labels);
}

inline double task_loss_value(const Dataset& ds, const Matrix& out) {
  if (ds.kind == TaskKind::regression) return mse(out, ds.targets);
  return cross_entropy(out, ds.labels);
}

/// Best output scale for the current predictions; closed form for MSE,
/// golden-section for cross-entropy.
inline LambdaFit fit_output_scale(const Dataset& ds, const Matrix& out) {
  if (ds.kind == TaskKind::regression) return fit_lambda_mse(out, ds.targets);
  return fit_lambda_generic([&](double lam) { return cross_entropy(lam * out, ds.labels); }, 1.0);
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Edge-popup with popup scores on biases, geometric sparsity annealing and
/// (optionally) a per-epoch output rescale distributed over the layers.
inline PruneResult edge_popup(const Network& f0, const Dataset& train, const PruneConfig& cfg,
                              const Dataset* eval = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  f0.validate();
  detail::require_shape(train.input_width() == f0.arch.input_width() &&
                            train.output_width() == f0.arch.output_width(),
                        "dataset does not match network input/output widths");
  const Index n = train.size();
  const Index batch = static_cast<Index>(cfg.sgd.batch_size);
  const Index batches = (n + batch - 1) / batch;
  const auto levels = anneal_schedule(cfg.target_sparsity, cfg.annealing_levels);

  SgdConfig sgd = cfg.sgd;
  sgd.total_steps = static_cast<std::size_t>(batches) * levels.size() *
                    static_cast<std::size_t>(cfg.epochs_per_level);
  sgd.validate();

  ScoredNetwork scored = ScoredNetwork::with_constant_scores(f0, cfg.score_init);
  SgdState state;

  // fixed subsample for the lambda fit
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  {
    auto rng = make_rng(cfg.seed, {0xA11CE});
    std::shuffle(order.begin(), order.end(), rng);
  }
  const Dataset fit_set = train.subset(
      std::span<const Index>(order).first(static_cast<std::size_t>(std::min(n, cfg.rescale_subsample))));

  PruneResult result;
  std::size_t step = 0;
  int epoch = 0;
  Matrix xb, yb;
  std::vector<int> lb;
  for (std::size_t level = 0; level < levels.size(); ++level) {
    const double sparsity = levels[level];
    for (int t = 0; t < cfg.epochs_per_level; ++t, ++epoch) {
      auto rng = make_rng(cfg.seed, {0xE90C, static_cast<std::uint64_t>(epoch)});
      std::shuffle(order.begin(), order.end(), rng);
      double loss_sum = 0.0;
      for (Index b0 = 0; b0 < n; b0 += batch, ++step) {
        const Index bs = std::min(batch, n - b0);
        xb.resize(train.input_width(), bs);
        if (train.kind == TaskKind::regression) yb.resize(train.targets.rows(), bs);
        lb.clear();
        for (Index c = 0; c < bs; ++c) {
          const Index src = order[static_cast<std::size_t>(b0 + c)];
          xb.col(c) = train.inputs.col(src);
          if (train.kind == TaskKind::regression) yb.col(c) = train.targets.col(src);
          else lb.push_back(train.labels[static_cast<std::size_t>(src)]);
        }
        const Mask mask = get_mask(scored, sparsity);
        const auto trace = forward(scored.net, mask, xb);
        const auto loss = task_loss(train, trace.output(), lb, &yb);
        if (!std::isfinite(loss.value)) {
          nlohmann::json dump = {{"level", level + 1},      {"epoch", epoch},
                                 {"step", step},            {"sparsity", sparsity},
                                 {"loss", loss.value},      {"lambda_cumulative", result.lambda_cumulative},
                                 {"retained", mask.retained()}};
          throw NumericError("edge-popup diverged: " + dump.dump());
        }
        loss_sum += loss.value * static_cast<double>(bs);
        auto grads = backward_scores(scored.net, mask, trace, loss.grad);
        for (std::size_t l = 0; l < grads.biases.size(); ++l)
          if (!scored.bias_in_pool[l]) grads.biases[l].setZero();
        sgd_step(scored.scores, grads, state, sgd, step);
      }

      EpochLog row;
      row.level = static_cast<int>(level) + 1;
      row.epoch = epoch;
      row.sparsity = sparsity;
      row.train_loss = loss_sum / static_cast<double>(n);
      const Mask mask = get_mask(scored, sparsity);
      if (cfg.rescale) {
        const Matrix out = predict(scored.net, mask, fit_set.inputs);
        row.loss_before_rescale = task_loss_value(fit_set, out);
        auto fit = fit_output_scale(fit_set, out);
        double lam = fit.lambda;
        row.lambda_warning = fit.warning;
        if (!std::isfinite(lam)) lam = 1.0;
        if (lam < kLambdaMin || lam > kLambdaMax) {
          lam = std::clamp(lam, kLambdaMin, kLambdaMax);
          row.lambda_clamped = true;
        }
        scored.net = distribute_lambda(scored.net, lam);
        row.lambda_epoch = lam;
        result.lambda_last = lam;
        result.lambda_cumulative *= lam;
        row.loss_after_rescale =
            task_loss_value(fit_set, predict(scored.net, mask, fit_set.inputs));
      } else {
        row.loss_before_rescale = row.loss_after_rescale =
            task_loss_value(fit_set, predict(scored.net, mask, fit_set.inputs));
      }
      row.lambda_cumulative = result.lambda_cumulative;
      const Dataset& metric_set = eval ? *eval : fit_set;
      row.eval_metric = task_metric(metric_set, predict(scored.net, mask, metric_set.inputs));
      result.log.push_back(row);
      if (on_epoch) on_epoch(row);
    }
  }
  result.mask = get_mask(scored, cfg.target_sparsity);
  result.scores = std::move(scored.scores);
  result.net = std::move(scored.net);
  return result;
}

}  // namespace slt
