#include "icdm/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "icdm/harness/score_io.hpp"
#include "icdm/rng.hpp"
#include "icdm/sampler.hpp"

namespace icdm::harness {

double mse_db(const VectorXd& a, const VectorXd& b) {
  detail::require_size(b.size(), a.size(), "mse_db");
  if (a.size() == 0) throw DimensionError("mse_db: empty input");
  const double mse = (a - b).squaredNorm() / static_cast<double>(a.size());
  if (!(mse > 0)) return kMseFloorDb;
  return std::max(10.0 * std::log10(mse), kMseFloorDb);
}

std::uint64_t trial_seed(std::uint64_t master, int trial) {
  return derive_seed(master, static_cast<std::uint64_t>(trial));
}

Experiment::Experiment(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), sched_(cfg_.steps, cfg_.rho_min, cfg_.rho_max) {
  cfg_.validate();
  const Index n = 2 * cfg_.k;
  prior_z_ = GaussianPrior<double>::isotropic(n, cfg_.prior_z_var, cfg_.prior_z_mean);

  if (cfg_.prior_x == PriorKind::Gaussian) {
    prior_x_gauss_ = GaussianPrior<double>::isotropic(n, cfg_.prior_x_var, cfg_.prior_x_mean);
  } else {
    GaussianMixturePrior<double> gmm;
    gmm.weights = VectorXd::Constant(2, 0.5);
    gmm.components = {GaussianPrior<double>::isotropic(n, cfg_.gmm_var, -cfg_.gmm_offset),
                      GaussianPrior<double>::isotropic(n, cfg_.gmm_var, cfg_.gmm_offset)};
    gmm.validate();
    prior_x_gmm_ = std::move(gmm);
  }

  if (cfg_.score == ScoreSource::Affine) {
    auto mx = load_affine(cfg_.score_table_x);
    auto mz = load_affine(cfg_.score_table_z);
    for (const auto* m : {&mx, &mz}) {
      if (m->t_max() != cfg_.steps || m->dim() != n) {
        throw std::invalid_argument("affine score table does not match steps/k of the configuration");
      }
    }
    model_x_ = std::make_unique<AffineScoreModel<double>>(std::move(mx));
    model_z_ = std::make_unique<AffineScoreModel<double>>(std::move(mz));
  } else {
    if (prior_x_gauss_) {
      model_x_ = std::make_unique<GaussianScoreModel<double>>(*prior_x_gauss_, sched_);
    } else {
      model_x_ = std::make_unique<GmmScoreModel<double>>(*prior_x_gmm_, sched_);
    }
    model_z_ = std::make_unique<GaussianScoreModel<double>>(prior_z_, sched_);
  }
}

TrialResult Experiment::run_trial(std::uint64_t seed, bool with_sampler) const {
  Rng rng(seed);
  TrialResult res;
  res.seed = seed;

  const VectorXd x = prior_x_gauss_ ? prior_x_gauss_->sample(rng) : prior_x_gmm_->sample(rng);
  const ComplexVectorXd z_c = real_to_complex<double>(prior_z_.sample(rng));
  const auto channel = sample_channel<double>(cfg_.channel, cfg_.k, rng);
  const auto obs = transmit_and_equalize<double>(real_to_complex<double>(x), z_c, channel, channel_params(cfg_), rng);
  const VectorXd z = effective_interference<double>(channel.h_z, z_c);

  if (prior_x_gauss_) {
    const auto map = gaussian_map_solve(obs, *prior_x_gauss_, prior_z_);
    res.map_mse_x_db = mse_db(map.x_hat, x);
    res.map_mse_z_db = mse_db(map.z_hat, z);
    if (cfg_.bound_check) {
      res.bound = theorem_bound_check(map.x_hat, map.z_hat, x, z, obs.eq_noise, obs,
                                      gaussian_xi(*prior_x_gauss_, prior_z_));
    }
  }

  if (!with_sampler) return res;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto est = icdm_sample(obs, sched_, *model_x_, *model_z_, cfg_.sampler(), rng);
    res.mse_x_db = mse_db(est.x, x);
    res.mse_z_db = mse_db(est.z, z);
  } catch (const DivergenceError& e) {
    res.diverged = true;
    res.divergence_step = e.step;
    res.mse_x_db = res.mse_z_db = std::numeric_limits<double>::quiet_NaN();
  }
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

std::vector<TrialResult> Experiment::run_trials(int n, bool with_sampler) const {
  std::vector<TrialResult> out(static_cast<std::size_t>(n));
  int workers = cfg_.threads > 0 ? cfg_.threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, std::max(n, 1));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        out[static_cast<std::size_t>(i)] = run_trial(trial_seed(cfg_.seed, i), with_sampler);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

TrialResult run_trial(const ExperimentConfig& cfg, std::uint64_t seed) {
  return Experiment(cfg).run_trial(seed);
}

Summary summarize(const std::vector<double>& values) {
  Summary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / (n - 1));
  }
  return s;
}

SweepRow aggregate(double sinr_db, const std::vector<TrialResult>& trials) {
  SweepRow row;
  row.sinr_db = sinr_db;
  row.trials = static_cast<int>(trials.size());
  std::vector<double> mx, mz, mm;
  for (const auto& t : trials) {
    if (t.map_mse_x_db) mm.push_back(*t.map_mse_x_db);
    if (t.diverged) {
      ++row.diverged;
      continue;
    }
    mx.push_back(t.mse_x_db);
    mz.push_back(t.mse_z_db);
  }
  row.mse_x_db = summarize(mx);
  row.mse_z_db = summarize(mz);
  if (!mm.empty()) row.map_mse_x_db = summarize(mm);
  return row;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::vector<double>& sinr_grid) {
  if (sinr_grid.empty()) throw std::invalid_argument("run_sweep: empty SINR grid");
  SweepResult out;
  for (double sinr : sinr_grid) {
    ExperimentConfig point = cfg;
    point.sinr_db = sinr;
    auto trials = Experiment(point).run_trials(cfg.trials);
    out.rows.push_back(aggregate(sinr, trials));
    out.trials.push_back(std::move(trials));
  }
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<OrderRow> order_accuracy_experiment(const std::vector<int>& orders, const std::vector<int>& step_counts,
                                                const ExperimentConfig& cfg) {
  if (orders.empty() || step_counts.size() < 2) {
    throw std::invalid_argument("order_accuracy_experiment: need orders and at least two step counts");
  }
  const Index n = 2 * cfg.k;
  const double mu = cfg.prior_x_mean;
  const double c = cfg.prior_x_var;
  const auto prior = GaussianPrior<double>::isotropic(n, c, mu);
  Rng init_rng(cfg.seed);
  const VectorXd x0 = standard_normal<double>(init_rng, n);
  const VectorXd z0 = standard_normal<double>(init_rng, n);

  std::vector<OrderRow> rows;
  for (int p : orders) {
    std::vector<double> ts, errs;
    for (int steps : step_counts) {
      const auto sched = make_schedule<double>(steps, cfg.rho_min, cfg.rho_max);
      const GaussianScoreModel<double> model(prior, sched);
      SamplerConfig<double> sc;
      sc.order = p;
      sc.t_max = steps;
      sc.method = GuidanceMethod::None;
      Rng rng(cfg.seed);
      const auto est = conjpc_sample<double>(x0, z0, nullptr, sched, model, model, sc, rng);

      const double a0 = sched.alpha(0), a1 = sched.alpha(steps);
      const double gain = std::sqrt((a1 * c + 1 - a1) / (a0 * c + 1 - a0));
      auto flow = [&](const VectorXd& v) -> VectorXd {
        return (std::sqrt(a1) * mu + gain * (v.array() - std::sqrt(a0) * mu)).matrix();
      };
      const double err = std::sqrt((est.x - flow(x0)).squaredNorm() + (est.z - flow(z0)).squaredNorm());
      ts.push_back(steps);
      errs.push_back(err);
      rows.push_back({p, steps, err, 0});
    }
    const double slope = loglog_slope(ts, errs);
    for (auto& r : rows) {
      if (r.order == p) r.slope = slope;
    }
  }
  return rows;
}

}  // namespace icdm::harness
