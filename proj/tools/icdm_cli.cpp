// icdm: command-line front end for the experiment harness.
//
//   icdm trial       --config exp.cfg --guidance dps --trials 200
//   icdm sweep       --sinr_grid=-4:7:1 --output sweep.csv
//   icdm order-check --orders 1,2 --step-counts 10,20,40,80
//   icdm train-score --iters 50000 --output affine.txt
//   icdm bound-check --trials 100 --draws 1000
//
// Every config key is also a flag (`--key value`); `--set key=value` may be
// repeated. Precedence: defaults < --config file < --key flags < --set.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icdm/harness/config.hpp"
#include "icdm/harness/csv.hpp"
#include "icdm/harness/experiment.hpp"
#include "icdm/harness/score_io.hpp"
#include "icdm/oracle.hpp"

using namespace icdm;
using namespace icdm::harness;

namespace {

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> keys;
};

void add_common(CLI::App* app, CommonArgs& args) {
  app->add_option("--config", args.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app->add_option("--set", args.sets, "override, key=value (repeatable)");
  for (auto key : config_keys()) {
    const std::string k(key);
    app->add_option("--" + k, args.keys[k], "config key '" + k + "'");
  }
}

ExperimentConfig build_config(const CommonArgs& args) {
  ExperimentConfig cfg;
  if (!args.config_file.empty()) load_config_file(cfg, args.config_file);
  for (const auto& [k, v] : args.keys) {
    if (!v.empty()) apply_setting(cfg, k, v);
  }
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_grid(s)) out.push_back(static_cast<int>(std::lround(v)));
  return out;
}

std::string sibling(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix + p.extension().string())).string();
}

int cmd_trial(const ExperimentConfig& cfg) {
  const auto trials = Experiment(cfg).run_trials(cfg.trials);
  const std::string out = resolve_output_path(cfg.output, "trials.csv");
  write_csv(trials_table(cfg, {cfg.sinr_db}, {trials}), out);
  const auto row = aggregate(cfg.sinr_db, trials);
  std::printf("guidance=%s sinr=%g dB trials=%d diverged=%d mse_x=%.3f dB (sd %.3f)", std::string(to_string(cfg.guidance)).c_str(),
              cfg.sinr_db, row.trials, row.diverged, row.mse_x_db.mean, row.mse_x_db.stddev);
  if (row.map_mse_x_db) std::printf(" map_mse_x=%.3f dB", row.map_mse_x_db->mean);
  std::printf("\nwrote %s\n", out.c_str());
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const auto grid = parse_grid(cfg.sinr_grid);
  const auto res = run_sweep(cfg, grid);
  const std::string out = resolve_output_path(cfg.output, "sweep.csv");
  write_csv(sweep_table(cfg, res.rows), out);
  write_csv(trials_table(cfg, grid, res.trials), sibling(out, "_trials"));
  for (const auto& r : res.rows) {
    std::printf("sinr=%6.2f dB  mse_x=%8.3f dB  diverged=%d\n", r.sinr_db, r.mse_x_db.mean, r.diverged);
  }
  std::printf("wrote %s and %s\n", out.c_str(), sibling(out, "_trials").c_str());
  return 0;
}

int cmd_order(const ExperimentConfig& cfg, const std::string& orders, const std::string& steps) {
  const auto rows = order_accuracy_experiment(parse_ints(orders), parse_ints(steps), cfg);
  const std::string out = resolve_output_path(cfg.output, "order.csv");
  write_csv(order_table(rows), out);
  for (const auto& r : rows) std::printf("p=%d T=%3d error=%.6e slope=%.3f\n", r.order, r.steps, r.error, r.slope);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

struct TrainArgs {
  int iters = 50000;
  double lr = 3e-2;
  int batch = 512;
  double data_mean = 0;
  double data_var = 1;
  double average_tail = 0.5;
  bool plain = false;
};

int cmd_train(const ExperimentConfig& cfg, const TrainArgs& a) {
  const auto sched = make_schedule<double>(cfg.steps, cfg.rho_min, cfg.rho_max);
  const auto data = GaussianPrior<double>::isotropic(2 * cfg.k, a.data_var, a.data_mean);
  DsmOptions<double> opt;
  opt.iters = a.iters;
  opt.lr = a.lr;
  opt.batch = a.batch;
  opt.antithetic = !a.plain;
  opt.average_tail = a.plain ? 0.0 : a.average_tail;
  Rng rng(cfg.seed);
  const auto res = dsm_train(AffineScoreModel<double>(cfg.steps, 2 * cfg.k),
                             [&data](Rng& g) { return data.sample(g); }, sched, opt, rng);
  const std::string out = resolve_output_path(cfg.output, "affine.txt");
  save_affine(res.model, out);

  double worst = 0;
  for (int t = 0; t <= cfg.steps; ++t) {
    const double a_t = sched.alpha(t);
    const double target = std::sqrt(1 - a_t) / (a_t * a.data_var + 1 - a_t);
    worst = std::max(worst, ((res.model.gain().row(t).array() - target).abs() / target).maxCoeff());
  }
  std::printf("final loss %.6f, max relative gain error vs analytic optimum %.4f\nwrote %s\n", res.loss.back(), worst,
              out.c_str());
  return 0;
}

int cmd_bound(ExperimentConfig cfg, int draws) {
  cfg.bound_check = true;
  cfg.prior_x = PriorKind::Gaussian;
  const auto trials = Experiment(cfg).run_trials(cfg.trials, false);
  int holds = 0;
  for (const auto& t : trials) holds += t.bound && t.bound->holds;

  Rng rng(derive_seed(cfg.seed, 0xB0B0));
  const auto params = channel_params(cfg);
  int nonneg = 0;
  double lowest = 0;
  for (int d = 0; d < draws; ++d) {
    const auto ch = sample_channel<double>(ChannelKind::Rayleigh, cfg.k, rng);
    EqualizedObservation<double> obs;
    obs.params = params;
    obs.mats = build_effective_matrices<double>(ch.h_x, params.sigma2, ChannelKind::Rayleigh);
    obs.y = VectorXd::Zero(2 * cfg.k);
    const double lm = lambda_min(obs);
    lowest = std::min(lowest, lm);
    nonneg += lm >= -1e-10;
  }
  const std::string out = resolve_output_path(cfg.output, "bound.csv");
  write_csv(trials_table(cfg, {cfg.sinr_db}, {trials}), out);
  std::printf("bound holds in %d/%d trials; lambda_min >= -1e-10 in %d/%d draws (lowest %.3e)\nwrote %s\n", holds,
              cfg.trials, nonneg, draws, lowest, out.c_str());
  return holds == cfg.trials && nonneg == draws ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ICDM interference-cancellation testbed"};
  app.require_subcommand(1);

  CommonArgs trial_args, sweep_args, order_args, train_args, bound_args;
  auto* trial = app.add_subcommand("trial", "run seeded trials at one SINR point");
  add_common(trial, trial_args);
  auto* sweep = app.add_subcommand("sweep", "run trials over an SINR grid");
  add_common(sweep, sweep_args);

  auto* order = app.add_subcommand("order-check", "convergence order of the unguided sampler");
  add_common(order, order_args);
  std::string orders = "1,2", step_counts = "10,20,40,80";
  order->add_option("--orders", orders, "comma-separated orders");
  order->add_option("--step-counts", step_counts, "comma-separated step counts");

  auto* train = app.add_subcommand("train-score", "denoising score matching of the affine model");
  add_common(train, train_args);
  TrainArgs ta;
  train->add_option("--iters", ta.iters);
  train->add_option("--lr", ta.lr);
  train->add_option("--batch", ta.batch);
  train->add_option("--data-mean", ta.data_mean);
  train->add_option("--data-var", ta.data_var);
  train->add_option("--average-tail", ta.average_tail, "fraction of iterates averaged");
  train->add_flag("--plain", ta.plain, "plain SGD: no antithetic pairs, no averaging");

  auto* bound = app.add_subcommand("bound-check", "MAP error bound and lambda_min over random channels");
  add_common(bound, bound_args);
  int draws = 1000;
  bound->add_option("--draws", draws, "random Rayleigh draws for lambda_min");

  CLI11_PARSE(app, argc, argv);
  try {
    if (trial->parsed()) return cmd_trial(build_config(trial_args));
    if (sweep->parsed()) return cmd_sweep(build_config(sweep_args));
    if (order->parsed()) return cmd_order(build_config(order_args), orders, step_counts);
    if (train->parsed()) return cmd_train(build_config(train_args), ta);
    if (bound->parsed()) return cmd_bound(build_config(bound_args), draws);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
