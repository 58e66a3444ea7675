#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slt/slt.hpp"

namespace fs = std::filesystem;
using namespace slt;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<double> sparsity;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out;
  bool no_rescale = false;
  bool zero_bias = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON experiment config")->check(CLI::ExistingFile);
  app->add_option("--sparsity", f.sparsity, "comma-separated sparsity list")->delimiter(',');
  app->add_option("--seed", f.seed, "master seed");
  app->add_option("--jobs", f.jobs, "concurrent sweep cells")->check(CLI::PositiveNumber);
  app->add_option("--out", f.out, "output directory");
  app->add_flag("--no-rescale", f.no_rescale, "plain edge-popup (no lambda rescale)");
  app->add_flag("--zero-bias", f.zero_bias, "initialize all biases to zero");
}

ExperimentConfig resolve(const CommonFlags& f, Mode mode) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  if (!f.config.empty()) cfg = config_from_json(load_json(f.config), cfg);
  cfg.mode = mode;
  if (!f.sparsity.empty()) cfg.sweep = f.sparsity;
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (f.no_rescale) cfg.prune.rescale = false;
  if (f.zero_bias) cfg.init.zero_bias = true;
  cfg.validate();
  save_json(fs::path(cfg.out) / "config.resolved", to_json(cfg));
  return cfg;
}

nlohmann::json provenance(const ExperimentConfig& cfg) {
  return {{"config", to_json(cfg)}, {"seed", cfg.seed}};
}

int cmd_dataset(const ExperimentConfig& cfg) {
  const auto seeds = run_seeds(cfg.seed, 0);
  const Dataset ds = make_dataset(cfg.dataset, seeds.data);
  auto parts = split(ds, cfg.dataset.test_fraction, seeds.data);
  for (auto* d : {&parts.train, &parts.test}) d->provenance["config"] = to_json(cfg);
  const fs::path out = cfg.out;
  save_dataset(out / "train.csv", parts.train);
  save_dataset(out / "test.csv", parts.test);
  std::cout << "wrote " << parts.train.size() << " train and " << parts.test.size()
            << " test rows to " << out.string() << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
  const auto seeds = run_seeds(cfg.seed, 0);
  const auto parts = split(make_dataset(cfg.dataset, seeds.data), cfg.dataset.test_fraction, seeds.data);
  InitSpec init = cfg.init;
  init.seed = seeds.init;
  const auto r = train_baseline(cfg.architecture(), init, parts.train, cfg.train, seeds.prune);
  NetworkDocument doc{r.net, r.mask, {}, 1.0, provenance(cfg)};
  doc.provenance["train_loss"] = r.train_loss;
  doc.provenance["test_metric"] = evaluate(r.net, parts.test);
  save_json(fs::path(cfg.out) / "target.json", to_json(doc));
  std::cout << "train loss " << r.train_loss << ", test metric " << evaluate(r.net, parts.test)
            << ", kept weights " << r.mask.retained_weights() << "\n";
  return 0;
}

void print_aggregates(const SweepResult& res) {
  std::printf("%-10s %5s %6s %12s %12s %12s %12s\n", "sparsity", "runs", "failed", "mean", "min",
              "max", "median");
  for (const auto& a : res.aggregates)
    std::printf("%-10g %5d %6d %14.6g %14.6g %14.6g %14.6g\n", a.sparsity, a.runs, a.failed, a.mean,
                a.min, a.max, a.median);
}

int cmd_prune(const ExperimentConfig& cfg, int jobs) {
  const auto res = run_sweep(cfg, jobs);
  print_aggregates(res);
  int failed = 0;
  for (const auto& r : res.runs) failed += r.status != "ok";
  return failed ? 1 : 0;
}

int cmd_construct(const ExperimentConfig& cfg, const std::string& target_path) {
  const auto& cs = cfg.construct;
  ConstructionConfig cc;
  cc.epsilon = cs.epsilon;
  cc.delta = cs.delta;
  cc.C = cs.C;
  cc.init = {InitScheme::uniform, {}, false, 0};
  cc.sup_samples = cs.sup_samples;
  cc.seed = cfg.seed;

  Architecture tarch{cs.target.widths, cs.target.output_linear};
  auto random_target = [&](int t) {
    return random_sparse_target(tarch, cs.target.weight_density,
                                derive_seed(cfg.seed, {0x7A6, static_cast<std::uint64_t>(t)}));
  };
  const Network target =
      target_path.empty()
          ? random_sparse_target(tarch, cs.target.weight_density, derive_seed(cfg.seed, {0x7A61}))
          : network_document_from_json(load_json(target_path)).net;
  nlohmann::json calib;
  if (cc.C <= 0.0) {
    const auto cal = calibrate_C(random_target, cc, cs.calibration_trials);
    cc.C = cal.C;
    calib = {{"C", cal.C}, {"converged", cal.converged}, {"history", cal.history}};
    std::cout << "calibrated C = " << cal.C << (cal.converged ? "" : " (not converged)") << "\n";
  }
  const auto rep = construct(target, cc);
  const fs::path out = cfg.out;
  auto report = to_json(rep);
  report["provenance"] = provenance(cfg);
  if (!calib.is_null()) report["calibration"] = calib;
  save_json(out / "construction.json", report);
  NetworkDocument ticket{rep.mother.net, rep.ticket.mask, {}, rep.ticket.lambda, provenance(cfg)};
  save_json(out / "ticket.json", to_json(ticket));
  save_json(out / "target.json", to_json(NetworkDocument{target, {}, {}, 1.0, provenance(cfg)}));
  std::cout << (rep.success ? "success" : "FAILED") << ": sup error " << rep.sup_error << " (eps "
            << cc.epsilon << "), parameter sparsity " << rep.parameter_sparsity << ", weight sparsity "
            << rep.weight_sparsity << ", lambda " << rep.ticket.lambda << "\n";
  return rep.success && rep.sup_error <= cc.epsilon ? 0 : 1;
}

struct Check {
  std::string name;
  bool pass;
  nlohmann::json detail;
};

int cmd_verify(const ExperimentConfig& cfg) {
  std::vector<Check> checks;
  {
    const auto c = counterexample_const();
    const bool ok = std::abs(c.quadrature_loss - c.loss) <= 1e-6 &&
                    std::abs(c.numeric_loss - c.loss) <= 1e-6 &&
                    std::abs(c.numeric_w_plus - c.w_plus) <= 1e-6 &&
                    std::abs(c.numeric_w_minus - c.w_minus) <= 1e-6;
    checks.push_back({"counterexample_const", ok,
                      {{"w_plus", c.w_plus}, {"w_minus", c.w_minus}, {"loss", c.loss},
                       {"quadrature_loss", c.quadrature_loss}, {"numeric_loss", c.numeric_loss}}});
  }
  {
    const auto c = counterexample_exp();
    const bool ok = std::abs(c.quadrature_loss - c.loss) <= 1e-6 &&
                    std::abs(c.numeric_loss - c.loss) <= 1e-6;
    checks.push_back({"counterexample_exp", ok,
                      {{"w_plus", c.w_plus}, {"w_minus", c.w_minus}, {"loss", c.loss},
                       {"reference_loss", c.reference_loss}, {"quadrature_loss", c.quadrature_loss},
                       {"numeric_loss", c.numeric_loss}}});
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      auto rng = make_rng(cfg.seed, {0xFAC, static_cast<std::uint64_t>(t)});
      Architecture a{{1, 8, 8, 8, 2}, t % 2 == 0};
      InitSpec s{InitScheme::normal, {}, true, rng()};
      const Network net = initialize(a, s);
      const auto f = factorize_univariate(net);
      Matrix grid(1, 1001);
      for (Index i = 0; i < 1001; ++i) grid(0, i) = -1.0 + 2.0 * static_cast<double>(i) / 1000.0;
      const Matrix y = predict(net, grid);
      for (Index i = 0; i < 1001; ++i)
        worst = std::max(worst, (y.col(i) - evaluate_factorization(f, grid(0, i))).cwiseAbs().maxCoeff());
    }
    checks.push_back({"factorization", worst <= 1e-9, {{"sup_error", worst}, {"nets", 100}}});
  }
  for (auto scheme : {InitScheme::uniform, InitScheme::normal, InitScheme::looks_linear}) {
    Architecture a{{4, 50, 50, 50}, false};
    Vector x0(4);
    x0 << 1, -1, 1, -1;
    const auto r = verify_signal_moment(a, {scheme, {}, false, cfg.seed}, x0, 10000);
    checks.push_back({"signal_moment_" + std::string(to_string(scheme)), std::abs(r.z_score) <= 3.0,
                      {{"predicted", r.predicted}, {"empirical", r.empirical},
                       {"std_error", r.std_error}, {"trials", r.trials}, {"z", r.z_score},
                       {"formula", r.formula == MomentFormula::enorm ? "enorm" : "orthovar"}}});
  }

  const fs::path out = fs::path(cfg.out) / "verify";
  int failed = 0;
  std::printf("%-30s %s\n", "check", "result");
  for (const auto& c : checks) {
    std::printf("%-30s %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL");
    failed += !c.pass;
    nlohmann::json j = c.detail;
    j["pass"] = c.pass;
    j["provenance"] = provenance(cfg);
    save_json(out / (c.name + ".json"), j);
  }
  return failed ? 1 : 0;
}

int cmd_report(const ExperimentConfig& cfg) {
  const fs::path path = fs::path(cfg.out) / "results.csv";
  std::istringstream is(read_file(path));
  std::string line;
  std::printf("%-10s %5s %6s %12s %12s %12s %12s\n", "sparsity", "runs", "failed", "mean", "min",
              "max", "median");
  while (std::getline(is, line)) {
    if (line.rfind("aggregate,", 0) != 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    cells.resize(20);
    auto num = [&](std::size_t i) { return std::strtod(cells[i].c_str(), nullptr); };
    std::printf("%-10g %5s %6s %12.6g %12.6g %12.6g %12.6g\n", num(2), cells[12].c_str(), cells[13].c_str(),
                num(14), num(15), num(16), num(17));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Strong lottery tickets with nonzero biases"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string target_path;

  auto* dataset = app.add_subcommand("dataset", "generate and split a synthetic dataset");
  auto* train = app.add_subcommand("train", "SGD-train a baseline target network");
  auto* prune = app.add_subcommand("prune", "edge-popup sparsity sweep");
  auto* construct_cmd = app.add_subcommand("construct", "build a ticket by subset-sum construction");
  auto* verify = app.add_subcommand("verify", "analytic and Monte-Carlo checks");
  auto* report = app.add_subcommand("report", "print aggregates of a finished sweep");
  for (auto* s : {dataset, train, prune, construct_cmd, verify, report}) add_common(s, flags);
  construct_cmd->add_option("--target", target_path, "target network JSON")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (dataset->parsed()) return cmd_dataset(resolve(flags, Mode::train));
    if (train->parsed()) return cmd_train(resolve(flags, Mode::train));
    if (prune->parsed()) return cmd_prune(resolve(flags, Mode::prune), flags.jobs);
    if (construct_cmd->parsed()) return cmd_construct(resolve(flags, Mode::construct), target_path);
    if (verify->parsed()) return cmd_verify(resolve(flags, Mode::verify));
    if (report->parsed()) {
      ExperimentConfig cfg;
      if (!flags.out.empty()) cfg.out = flags.out;
      return cmd_report(cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
