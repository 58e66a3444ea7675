#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/init.hpp"
#include "slt/network.hpp"
#include "slt/pruner.hpp"
#include "slt/rng.hpp"
#include "slt/serialize.hpp"
#include "slt/sgd.hpp"

namespace slt {

enum class Mode { train, prune, construct, verify };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::train: return "train";
    case Mode::prune: return "prune";
    case Mode::construct: return "construct";
    case Mode::verify: return "verify";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "train") return Mode::train;
  if (s == "prune") return Mode::prune;
  if (s == "construct") return Mode::construct;
  if (s == "verify") return Mode::verify;
  throw ConfigError("unknown mode: " + std::string(s));
}

struct DatasetConfig {
  std::string generator = "shifted_relu";
  Index n = 10000;
  double shift = 0.5;
  double noise_sd = 0.01;
  double flip_prob = 0.01;
  double test_fraction = 0.2;
};

struct TrainConfig {
  int epochs = 50;
  SgdConfig sgd{0.05, 0.9, 0.0, LrSchedule::cosine, 1, 32};
  /// Fraction of weights kept by global magnitude pruning; 1 disables it.
  double density = 1.0;
  int finetune_epochs = 10;
};

struct TargetConfig {
  std::vector<Index> widths{4, 10, 5, 2};
  bool output_linear = false;
  double weight_density = 0.5;
};

struct ConstructSettings {
  double epsilon = 0.05;
  double delta = 0.1;
  /// <= 0 selects calibration
  double C = 10.0;
  int calibration_trials = 50;
  Index sup_samples = 10000;
  TargetConfig target;
};

/// One experiment: data, architecture, init and the settings of every mode.
struct ExperimentConfig {
  Mode mode = Mode::prune;
  DatasetConfig dataset;
  int depth = 5;  // number of layers L
  Index width = 100;
  bool output_linear = true;
  InitSpec init{InitScheme::normal, {}, false, 0};
  PruneConfig prune;
  /// 0 means: 5 for shifted ReLU, 20 for onion at sparsity <= 0.05, else 10.
  int annealing_levels = 0;
  TrainConfig train;
  ConstructSettings construct;
  std::vector<double> sweep{0.05};
  int repetitions = 5;
  std::string out = "out";
  std::uint64_t seed = 0;

  void validate() const {
    detail::require_config(repetitions >= 1, "repetitions must be >= 1");
    detail::require_config(depth >= 1 && width >= 1, "architecture needs depth, width >= 1");
    detail::require_config(!sweep.empty(), "sweep list must not be empty");
    for (double s : sweep)
      detail::require_config(s > 0.0 && s <= 1.0, "sweep values must lie in (0, 1]");
    detail::require_config(dataset.generator == "shifted_relu" || dataset.generator == "onion",
                           "unknown dataset generator: " + dataset.generator);
    detail::require_config(annealing_levels >= 0, "annealing levels must be >= 0");
  }

  bool classification() const { return dataset.generator == "onion"; }

  Architecture architecture() const {
    Architecture a;
    a.output_linear = output_linear;
    a.widths.push_back(classification() ? 2 : 1);
    for (int l = 1; l < depth; ++l) a.widths.push_back(width);
    a.widths.push_back(classification() ? kOnionClasses : 1);
    return a;
  }

  int levels_for(double sparsity) const {
    if (annealing_levels > 0) return annealing_levels;
    if (!classification()) return 5;
    return sparsity <= 0.05 + 1e-12 ? 20 : 10;
  }
};

// ---------------------------------------------------------------------------
// JSON <-> config

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& v) {
  if (j.contains(key)) v = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> keys,
                           std::string_view where) {
  for (const auto& [k, _] : j.items())
    if (std::find(keys.begin(), keys.end(), k) == keys.end())
      throw ConfigError("unknown key '" + k + "' in " + std::string(where));
}

inline nlohmann::json sgd_to_json(const SgdConfig& s) {
  return {{"learning_rate", s.learning_rate},
          {"momentum", s.momentum},
          {"weight_decay", s.weight_decay},
          {"schedule", s.schedule == LrSchedule::cosine ? "cosine" : "constant"},
          {"batch_size", s.batch_size}};
}

inline void sgd_from_json(const nlohmann::json& j, SgdConfig& s) {
  reject_unknown(j, {"learning_rate", "momentum", "weight_decay", "schedule", "batch_size"}, "sgd");
  read_opt(j, "learning_rate", s.learning_rate);
  read_opt(j, "momentum", s.momentum);
  read_opt(j, "weight_decay", s.weight_decay);
  read_opt(j, "batch_size", s.batch_size);
  if (j.contains("schedule")) {
    const auto v = j["schedule"].get<std::string>();
    if (v == "cosine") s.schedule = LrSchedule::cosine;
    else if (v == "constant") s.schedule = LrSchedule::constant;
    else throw ConfigError("unknown lr schedule: " + v);
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  return {
      {"mode", to_string(c.mode)},
      {"dataset",
       {{"generator", c.dataset.generator},
        {"n", c.dataset.n},
        {"shift", c.dataset.shift},
        {"noise_sd", c.dataset.noise_sd},
        {"flip_prob", c.dataset.flip_prob},
        {"test_fraction", c.dataset.test_fraction}}},
      {"architecture", {{"depth", c.depth}, {"width", c.width}, {"output_linear", c.output_linear}}},
      {"init",
       {{"scheme", to_string(c.init.scheme)}, {"sigma_w", c.init.sigma_w}, {"zero_bias", c.init.zero_bias}}},
      {"prune",
       {{"annealing_levels", c.annealing_levels},
        {"epochs_per_level", c.prune.epochs_per_level},
        {"rescale", c.prune.rescale},
        {"score_init", c.prune.score_init},
        {"rescale_subsample", c.prune.rescale_subsample},
        {"sgd", detail::sgd_to_json(c.prune.sgd)}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"density", c.train.density},
        {"finetune_epochs", c.train.finetune_epochs},
        {"sgd", detail::sgd_to_json(c.train.sgd)}}},
      {"construct",
       {{"epsilon", c.construct.epsilon},
        {"delta", c.construct.delta},
        {"C", c.construct.C},
        {"calibration_trials", c.construct.calibration_trials},
        {"sup_samples", c.construct.sup_samples},
        {"target",
         {{"widths", c.construct.target.widths},
          {"output_linear", c.construct.target.output_linear},
          {"weight_density", c.construct.target.weight_density}}}}},
      {"sweep", c.sweep},
      {"repetitions", c.repetitions},
      {"out", c.out},
      {"seed", c.seed}};
}

/// Fields missing from `j` keep their defaults; unknown keys are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig c = {}) {
  using detail::read_opt;
  detail::reject_unknown(j, {"mode", "dataset", "architecture", "init", "prune", "train", "construct",
                             "sweep", "repetitions", "out", "seed"},
                         "config");
  if (j.contains("mode")) c.mode = parse_mode(j["mode"].get<std::string>());
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    detail::reject_unknown(d, {"generator", "n", "shift", "noise_sd", "flip_prob", "test_fraction"},
                           "dataset");
    read_opt(d, "generator", c.dataset.generator);
    read_opt(d, "n", c.dataset.n);
    read_opt(d, "shift", c.dataset.shift);
    read_opt(d, "noise_sd", c.dataset.noise_sd);
    read_opt(d, "flip_prob", c.dataset.flip_prob);
    read_opt(d, "test_fraction", c.dataset.test_fraction);
  }
  if (j.contains("architecture")) {
    const auto& a = j["architecture"];
    detail::reject_unknown(a, {"depth", "width", "output_linear"}, "architecture");
    read_opt(a, "depth", c.depth);
    read_opt(a, "width", c.width);
    read_opt(a, "output_linear", c.output_linear);
  }
  if (j.contains("init")) {
    const auto& i = j["init"];
    detail::reject_unknown(i, {"scheme", "sigma_w", "zero_bias"}, "init");
    if (i.contains("scheme")) c.init.scheme = parse_init_scheme(i["scheme"].get<std::string>());
    read_opt(i, "sigma_w", c.init.sigma_w);
    read_opt(i, "zero_bias", c.init.zero_bias);
  }
  if (j.contains("prune")) {
    const auto& p = j["prune"];
    detail::reject_unknown(p, {"annealing_levels", "epochs_per_level", "rescale", "score_init",
                               "rescale_subsample", "sgd"},
                           "prune");
    read_opt(p, "annealing_levels", c.annealing_levels);
    read_opt(p, "epochs_per_level", c.prune.epochs_per_level);
    read_opt(p, "rescale", c.prune.rescale);
    read_opt(p, "score_init", c.prune.score_init);
    read_opt(p, "rescale_subsample", c.prune.rescale_subsample);
    if (p.contains("sgd")) detail::sgd_from_json(p["sgd"], c.prune.sgd);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(t, {"epochs", "density", "finetune_epochs", "sgd"}, "train");
    read_opt(t, "epochs", c.train.epochs);
    read_opt(t, "density", c.train.density);
    read_opt(t, "finetune_epochs", c.train.finetune_epochs);
    if (t.contains("sgd")) detail::sgd_from_json(t["sgd"], c.train.sgd);
  }
  if (j.contains("construct")) {
    const auto& k = j["construct"];
    detail::reject_unknown(k, {"epsilon", "delta", "C", "calibration_trials", "sup_samples", "target"},
                           "construct");
    read_opt(k, "epsilon", c.construct.epsilon);
    read_opt(k, "delta", c.construct.delta);
    read_opt(k, "C", c.construct.C);
    read_opt(k, "calibration_trials", c.construct.calibration_trials);
    read_opt(k, "sup_samples", c.construct.sup_samples);
    if (k.contains("target")) {
      const auto& t = k["target"];
      detail::reject_unknown(t, {"widths", "output_linear", "weight_density"}, "construct.target");
      read_opt(t, "widths", c.construct.target.widths);
      read_opt(t, "output_linear", c.construct.target.output_linear);
      read_opt(t, "weight_density", c.construct.target.weight_density);
    }
  }
  read_opt(j, "sweep", c.sweep);
  read_opt(j, "repetitions", c.repetitions);
  read_opt(j, "out", c.out);
  read_opt(j, "seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data and evaluation

inline Dataset make_dataset(const DatasetConfig& d, std::uint64_t seed) {
  if (d.generator == "shifted_relu") return gen_shifted_relu({d.n, d.shift, d.noise_sd}, seed);
  if (d.generator == "onion") return gen_onion({d.n, d.flip_prob}, seed);
  throw ConfigError("unknown dataset generator: " + d.generator);
}

/// Regression: MSE of lambda f(x). Classification: argmax accuracy of lambda f(x).
inline double evaluate(const Network& net, const Mask& mask, double lambda, const Dataset& ds) {
  detail::require_shape(ds.input_width() == net.arch.input_width() &&
                            ds.output_width() == net.arch.output_width(),
                        "dataset does not match network input/output widths");
  const Matrix out = lambda * predict(net, mask, ds.inputs);
  return task_metric(ds, out);
}

inline double evaluate(const Network& net, const Dataset& ds) {
  return evaluate(net, Mask::ones(net.arch), 1.0, ds);
}

// ---------------------------------------------------------------------------
// Baseline training

struct TrainResult {
  Network net;
  Mask mask;
  double train_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Keep the ceil(density * count) largest-|w| weights over all layers (lower
/// flat index wins ties); biases are always kept.
inline Mask magnitude_mask(const Network& net, double density) {
  detail::require_config(density > 0.0 && density <= 1.0, "density must lie in (0, 1]");
  struct Entry {
    double mag;
    std::size_t layer;
    Index idx;
  };
  std::vector<Entry> all;
  for (std::size_t k = 0; k < net.weights.size(); ++k) {
    const auto& w = net.weights[k];
    for (Index i = 0; i < w.rows(); ++i)
      for (Index j = 0; j < w.cols(); ++j) all.push_back({std::abs(w(i, j)), k, i * w.cols() + j});
  }
  const std::size_t keep = retained_budget(density, all.size());
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep - 1), all.end(),
                   [](const Entry& a, const Entry& b) {
                     if (a.mag != b.mag) return a.mag > b.mag;
                     if (a.layer != b.layer) return a.layer < b.layer;
                     return a.idx < b.idx;
                   });
  Mask m = Mask::ones(net.arch);
  for (auto& w : m.weights) w.setZero();
  for (std::size_t p = 0; p < keep; ++p) {
    auto& w = m.weights[all[p].layer];
    w(all[p].idx / w.cols(), all[p].idx % w.cols()) = 1.0;
  }
  return m;
}

namespace detail {

inline double train_epochs(Network& net, const Mask& mask, const Dataset& train, const SgdConfig& base,
                           int epochs, std::uint64_t seed, std::vector<double>& losses) {
  const Index n = train.size();
  const auto batch = static_cast<Index>(base.batch_size);
  const Index batches = (n + batch - 1) / batch;
  SgdConfig sgd = base;
  sgd.total_steps = static_cast<std::size_t>(batches * std::max(epochs, 1));
  sgd.validate();
  SgdState state;
  ParameterTensors params = net.parameters();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::size_t step = 0;
  double last = 0.0;
  Matrix xb, yb;
  std::vector<int> lb;
  for (int e = 0; e < epochs; ++e) {
    auto rng = make_rng(seed, {0x7A1, static_cast<std::uint64_t>(e)});
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
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
      const auto trace = forward(net, mask, xb);
      const auto loss = task_loss(train, trace.output(), lb, &yb);
      if (!std::isfinite(loss.value))
        throw NumericError("training diverged at epoch " + std::to_string(e) + ", step " +
                           std::to_string(step));
      sum += loss.value * static_cast<double>(bs);
      const auto g = backward_train(net, mask, trace, loss.grad);
      sgd_step(params, g, state, sgd, step);
      for (std::size_t k = 0; k < params.weights.size(); ++k) {
        params.weights[k].array() *= mask.weights[k].array();
        params.biases[k].array() *= mask.biases[k].array();
      }
      net.set_parameters(params);
    }
    last = sum / static_cast<double>(n);
    losses.push_back(last);
  }
  return last;
}

}  // namespace detail

/// SGD-train a dense net, then optionally magnitude-prune and fine-tune.
inline TrainResult train_baseline(const Architecture& arch, const InitSpec& init, const Dataset& train,
                                  const TrainConfig& cfg, std::uint64_t seed) {
  detail::require_config(cfg.epochs >= 0 && cfg.finetune_epochs >= 0, "epoch counts must be >= 0");
  TrainResult r;
  r.net = initialize(arch, init);
  r.mask = Mask::ones(arch);
  r.train_loss = detail::train_epochs(r.net, r.mask, train, cfg.sgd, cfg.epochs,
                                      derive_seed(seed, {1}), r.epoch_loss);
  if (cfg.density < 1.0) {
    r.mask = magnitude_mask(r.net, cfg.density);
    ParameterTensors p = r.net.parameters();
    for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k].array() *= r.mask.weights[k].array();
    r.net.set_parameters(p);
    if (cfg.finetune_epochs > 0)
      r.train_loss = detail::train_epochs(r.net, r.mask, train, cfg.sgd, cfg.finetune_epochs,
                                          derive_seed(seed, {2}), r.epoch_loss);
    else
      r.train_loss = task_loss_value(train, predict(r.net, train.inputs));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pruning runs and sweeps

/// Seeds of repetition `rep`; shared across sparsities and variants.
struct RunSeeds {
  std::uint64_t data, init, prune;
};

inline RunSeeds run_seeds(std::uint64_t master, int rep) {
  const auto r = static_cast<std::uint64_t>(rep);
  return {derive_seed(master, {0xDA7A, r}), derive_seed(master, {0x1417, r}),
          derive_seed(master, {0x9A0E, r})};
}

struct RunRow {
  std::string run_id;
  double sparsity = 0.0;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  double test_metric = NAN;
  double train_loss = NAN;
  double lambda_last = NAN;
  double lambda_cumulative = NAN;
  double weight_sparsity = NAN;
  double parameter_sparsity = NAN;
  std::string error;
  std::string timestamp;
};

struct AggregateRow {
  double sparsity = 0.0;
  int runs = 0;
  int failed = 0;
  double mean = NAN;
  double min = NAN;
  double max = NAN;
  double median = NAN;
};

struct SweepResult {
  std::vector<RunRow> runs;
  std::vector<AggregateRow> aggregates;
};

struct PruneRun {
  RunRow row;
  PruneResult result;
};

/// One init + edge-popup + test evaluation for a sparsity and repetition.
inline PruneRun run_prune(const ExperimentConfig& cfg, double sparsity, int rep,
                          const EpochCallback& on_epoch = {}) {
  const auto seeds = run_seeds(cfg.seed, rep);
  const Dataset data = make_dataset(cfg.dataset, seeds.data);
  const auto parts = split(data, cfg.dataset.test_fraction, seeds.data);
  InitSpec init = cfg.init;
  init.seed = seeds.init;
  const Network f0 = initialize(cfg.architecture(), init);
  PruneConfig pc = cfg.prune;
  pc.target_sparsity = sparsity;
  pc.annealing_levels = cfg.levels_for(sparsity);
  pc.seed = seeds.prune;

  PruneRun run;
  run.result = edge_popup(f0, parts.train, pc, &parts.test, on_epoch);
  auto& r = run.row;
  r.sparsity = sparsity;
  r.repetition = rep;
  r.seed = seeds.prune;
  r.test_metric = evaluate(run.result.net, run.result.mask, 1.0, parts.test);
  r.train_loss = run.result.log.empty() ? NAN : run.result.log.back().train_loss;
  r.lambda_last = run.result.lambda_last;
  r.lambda_cumulative = run.result.lambda_cumulative;
  r.weight_sparsity = run.result.mask.weight_sparsity();
  r.parameter_sparsity = run.result.mask.parameter_sparsity();
  return run;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<AggregateRow> aggregate(const std::vector<RunRow>& runs,
                                           const std::vector<double>& sparsities) {
  std::vector<AggregateRow> out;
  for (double s : sparsities) {
    AggregateRow a;
    a.sparsity = s;
    std::vector<double> v;
    for (const auto& r : runs) {
      if (r.sparsity != s) continue;
      ++a.runs;
      if (r.status != "ok") ++a.failed;
      else v.push_back(r.test_metric);
    }
    if (!v.empty()) {
      a.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      a.min = *std::min_element(v.begin(), v.end());
      a.max = *std::max_element(v.begin(), v.end());
      a.median = median(v);
    }
    out.push_back(a);
  }
  return out;
}

namespace detail {

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string provenance_line(const ExperimentConfig& cfg) {
  return "# config: " + to_json(cfg).dump() + "\n";
}

}  // namespace detail

/// results.csv: one row per run, then one aggregate row per sparsity.
inline std::string results_csv(const ExperimentConfig& cfg, const SweepResult& res) {
  using detail::fmt_double;
  std::ostringstream os;
  os << detail::provenance_line(cfg);
  os << "row_type,run_id,sparsity,repetition,seed,status,test_metric,train_loss,lambda_last,"
        "lambda_cumulative,weight_sparsity,parameter_sparsity,runs,failed,mean,min,max,median,error,"
        "timestamp\n";
  for (const auto& r : res.runs)
    os << "run," << r.run_id << ',' << fmt_double(r.sparsity) << ',' << r.repetition << ',' << r.seed
       << ',' << r.status << ',' << fmt_double(r.test_metric) << ',' << fmt_double(r.train_loss) << ','
       << fmt_double(r.lambda_last) << ',' << fmt_double(r.lambda_cumulative) << ','
       << fmt_double(r.weight_sparsity) << ',' << fmt_double(r.parameter_sparsity) << ",,,,,,,"
       << detail::csv_escape(r.error) << ',' << r.timestamp << '\n';
  for (const auto& a : res.aggregates)
    os << "aggregate,," << fmt_double(a.sparsity) << ",,,,,,,,,," << a.runs << ',' << a.failed << ','
       << fmt_double(a.mean) << ',' << fmt_double(a.min) << ',' << fmt_double(a.max) << ','
       << fmt_double(a.median) << ",,\n";
  return os.str();
}

inline std::string epochs_csv(const ExperimentConfig& cfg, const std::vector<EpochLog>& log) {
  using detail::fmt_double;
  std::ostringstream os;
  os << detail::provenance_line(cfg);
  os << "level,epoch,sparsity,train_loss,eval_metric,lambda_epoch,lambda_cumulative,"
        "loss_before_rescale,loss_after_rescale,lambda_clamped\n";
  for (const auto& e : log)
    os << e.level << ',' << e.epoch << ',' << fmt_double(e.sparsity) << ',' << fmt_double(e.train_loss)
       << ',' << fmt_double(e.eval_metric) << ',' << fmt_double(e.lambda_epoch) << ','
       << fmt_double(e.lambda_cumulative) << ',' << fmt_double(e.loss_before_rescale) << ','
       << fmt_double(e.loss_after_rescale) << ',' << (e.lambda_clamped ? 1 : 0) << '\n';
  return os.str();
}

/// Run function used by run_sweep; replaceable for testing the harness.
using RunFunction = std::function<PruneRun(const ExperimentConfig&, double, int)>;

/// Every sparsity x repetition cell, up to `jobs` at a time. Writes
/// config.resolved, results.csv, and per-run epoch logs and tickets under cfg.out.
inline SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1, RunFunction fn = {},
                             bool write_files = true) {
  cfg.validate();
  if (!fn) fn = [](const ExperimentConfig& c, double s, int r) { return run_prune(c, s, r); };
  const std::filesystem::path out = cfg.out;
  if (write_files) save_json(out / "config.resolved", to_json(cfg));

  struct Cell {
    double sparsity;
    int rep;
  };
  std::vector<Cell> cells;
  for (double s : cfg.sweep)
    for (int r = 0; r < cfg.repetitions; ++r) cells.push_back({s, r});

  SweepResult res;
  res.runs.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      const auto [s, rep] = cells[i];
      std::ostringstream id;
      id << "s" << detail::fmt_double(s) << "_r" << rep;
      RunRow row;
      try {
        auto run = fn(cfg, s, rep);
        row = run.row;
        if (write_files) {
          write_file_atomic(out / "epochs" / (id.str() + ".csv"), epochs_csv(cfg, run.result.log));
          NetworkDocument doc{run.result.net, run.result.mask, run.result.scores, 1.0,
                              {{"config", to_json(cfg)},
                               {"seed", cfg.seed},
                               {"sparsity", s},
                               {"repetition", rep},
                               {"lambda_cumulative", run.result.lambda_cumulative}}};
          save_json(out / "tickets" / (id.str() + ".json"), to_json(doc));
        }
      } catch (const std::exception& e) {
        row = RunRow{};
        row.sparsity = s;
        row.repetition = rep;
        row.seed = run_seeds(cfg.seed, rep).prune;
        row.status = "failed";
        row.error = e.what();
      }
      row.run_id = id.str();
      row.timestamp = detail::utc_timestamp();
      res.runs[i] = std::move(row);
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  res.aggregates = aggregate(res.runs, cfg.sweep);
  if (write_files) write_file_atomic(out / "results.csv", results_csv(cfg, res));
  return res;
}

}  // namespace slt
