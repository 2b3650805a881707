#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "icdm/harness/config.hpp"
#include "icdm/oracle.hpp"
#include "icdm/score_models.hpp"

namespace icdm::harness {

inline constexpr double kMseFloorDb = -300.0;

/// 10 log10(mean((a - b)^2)), floored at -300 dB.
double mse_db(const VectorXd& a, const VectorXd& b);

struct TrialResult {
  std::uint64_t seed = 0;
  double mse_x_db = 0;
  double mse_z_db = 0;
  std::optional<double> map_mse_x_db;  // Gaussian x prior only
  std::optional<double> map_mse_z_db;
  std::optional<BoundReport<double>> bound;
  double wall_time = 0;
  bool diverged = false;
  int divergence_step = -1;
};

/// Everything a trial needs that does not depend on the seed: schedule,
/// priors and score models. Safe to share across threads.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const NoiseSchedule<double>& schedule() const { return sched_; }
  const GaussianPrior<double>& prior_z() const { return prior_z_; }

  /// Draw x ~ prior_x, z_c ~ prior_z, channel and noise, run the configured
  /// sampler and score it. Deterministic in `seed`. Without the sampler only
  /// the MAP oracle and bound are filled in.
  TrialResult run_trial(std::uint64_t seed, bool with_sampler = true) const;

  /// Trials 0..n-1 with seeds derive_seed(cfg.seed, i), spread over the pool.
  std::vector<TrialResult> run_trials(int n, bool with_sampler = true) const;

 private:
  ExperimentConfig cfg_;
  NoiseSchedule<double> sched_;
  std::optional<GaussianPrior<double>> prior_x_gauss_;
  std::optional<GaussianMixturePrior<double>> prior_x_gmm_;
  GaussianPrior<double> prior_z_;
  std::unique_ptr<ScoreModel<double>> model_x_;
  std::unique_ptr<ScoreModel<double>> model_z_;
};

TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t seed);

std::uint64_t trial_seed(std::uint64_t master, int trial);

struct Summary {
  double mean = 0;
  double stddev = 0;  // sample standard deviation; 0 when fewer than two values
};

Summary summarize(const std::vector<double>& values);

struct SweepRow {
  double sinr_db = 0;
  int trials = 0;
  int diverged = 0;
  Summary mse_x_db;
  Summary mse_z_db;
  std::optional<Summary> map_mse_x_db;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::vector<TrialResult>> trials;  // per grid point
};

/// Diverged trials are excluded from the aggregates and counted.
SweepRow aggregate(double sinr_db, const std::vector<TrialResult>& trials);

SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<double>& sinr_grid);

struct OrderRow {
  int order = 0;
  int steps = 0;
  double error = 0;
  double slope = 0;  // fitted over all step counts of this order
};

/// Unguided ConJPC on the Gaussian prior N(prior_x_mean, prior_x_var) whose
/// probability-flow map is known in closed form; least-squares slope of
/// log error against log T per order.
std::vector<OrderRow> order_accuracy_experiment(const std::vector<int>& orders, const std::vector<int>& step_counts,
                                                const ExperimentConfig& cfg);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace icdm::harness
