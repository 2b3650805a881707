#pragma once

// p-order joint predictor-corrector (ConJPC) for the two coupled
// probability-flow ODEs of x and z, plus a Langevin baseline.
//
// One step t-1 -> t, with sigma_t = sqrt(1 - alpha_t), eta = eta_t and
// r(s) the joint conditional gradient at step s:
//
//   base   = sqrt(alpha_t / alpha_{t-1}) v_{t-1} - sigma_t (e^eta - 1) r(t-1)
//   v      = base - sigma_t eta sum_m (eta o_m) D_m,   D_m = (r(t-m-1) - r(t-1)) / w_m
//
// The predictor uses the history nodes w_1..w_{p-1}; the corrector appends
// the node w_p = 1 with D_p = s(v_bar_t, t) - r(t-1) from the predicted point.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "icdm/channel.hpp"
#include "icdm/core.hpp"
#include "icdm/guidance.hpp"
#include "icdm/rng.hpp"
#include "icdm/schedule.hpp"
#include "icdm/score_models.hpp"

namespace icdm {

inline constexpr int kMaxOrder = 4;

template <typename Scalar>
struct SamplerConfig {
  int order = 2;
  int t_max = kDefaultSteps;
  Scalar beta = 1;
  Scalar gamma = 1;
  Scalar sigma_hat2 = 1;
  GuidanceMethod method = GuidanceMethod::Icdm;
  // Use the guided gradient for the corrector's new node instead of the
  // unconditional score.
  bool conditional_corrector = false;

  void validate() const {
    if (order < 1 || order > kMaxOrder) throw std::invalid_argument("SamplerConfig: order must be in [1, 4]");
    if (t_max < order) throw std::invalid_argument("SamplerConfig: t_max must be at least the order");
    if (!std::isfinite(beta) || !std::isfinite(gamma)) throw std::invalid_argument("SamplerConfig: non-finite weight");
    if (!(sigma_hat2 > 0)) throw std::invalid_argument("SamplerConfig: sigma_hat2 must be positive");
  }
};

template <typename Scalar>
struct JointGradients {
  Vector<Scalar> r_theta;
  Vector<Scalar> r_phi;
  int t = 0;
};

template <typename Scalar>
struct HistoryEntry {
  Vector<Scalar> x;
  Vector<Scalar> z;
  JointGradients<Scalar> grads;
};

/// Ring buffer of the last `capacity` entries, oldest first.
template <typename Scalar>
class SamplerHistory {
 public:
  explicit SamplerHistory(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("SamplerHistory: capacity must be at least 1");
  }

  void push(HistoryEntry<Scalar> e) {
    if (!entries_.empty() && e.grads.t <= entries_.back().grads.t) {
      throw std::invalid_argument("SamplerHistory: steps must be strictly increasing");
    }
    entries_.push_back(std::move(e));
    if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
  }

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }

  /// m-th most recent entry; back(0) is the newest.
  const HistoryEntry<Scalar>& back(int m = 0) const {
    if (m < 0 || m >= size()) throw std::out_of_range("SamplerHistory: index out of range");
    return entries_[entries_.size() - 1 - static_cast<std::size_t>(m)];
  }

 private:
  int capacity_;
  std::deque<HistoryEntry<Scalar>> entries_;
};

template <typename Scalar>
struct CoeffSystem {
  int order = 0;
  Vector<Scalar> w;
  Matrix<Scalar> gamma;
  Vector<Scalar> b;
  Vector<Scalar> o;
};

namespace detail {

/// Gamma_{ij} = w_j^i, b_i = g_i i! / eta with g_1 = (e^eta - 1)/eta - 1,
/// g_{i+1} = g_i / eta - 1/(i+1)!; o = Gamma^{-1} b / eta.
template <typename Scalar>
CoeffSystem<Scalar> solve_coeffs(const Vector<Scalar>& nodes, Scalar eta) {
  const Index n = nodes.size();
  CoeffSystem<Scalar> cs;
  cs.order = static_cast<int>(n);
  cs.w = nodes;
  cs.gamma.resize(n, n);
  cs.b.resize(n);
  for (Index j = 0; j < n; ++j) {
    Scalar p = 1;
    for (Index i = 0; i < n; ++i, p *= nodes[j]) cs.gamma(i, j) = p;
  }
  Scalar g = std::expm1(eta) / eta - Scalar(1);
  Scalar fact = 1;
  for (Index i = 1; i <= n; ++i) {
    cs.b[i - 1] = g * fact / eta;
    fact *= Scalar(i + 1);
    g = g / eta - Scalar(1) / fact;
  }
  if (n == 0) {
    cs.o.resize(0);
    return cs;
  }
  Eigen::FullPivLU<Matrix<Scalar>> lu(cs.gamma);
  if (!lu.isInvertible()) throw NumericalError("unipc_coeffs: coincident nodes make Gamma singular");
  cs.o = lu.solve(cs.b) / eta;
  return cs;
}

template <typename Scalar>
Vector<Scalar> history_nodes(int t, int count, const NoiseSchedule<Scalar>& sched) {
  if (t - count < 1) {
    throw std::invalid_argument("unipc_coeffs: step " + std::to_string(t) + " lacks history for order " +
                                std::to_string(count + 1));
  }
  const Scalar eta = sched.eta(t);
  Vector<Scalar> w(count);
  for (int m = 1; m <= count; ++m) w[m - 1] = (sched.rho(t - m - 1) - sched.rho(t - 1)) / eta;
  return w;
}

}  // namespace detail

/// Corrector system of the given order: nodes w_1..w_{order-1} from the
/// history plus w_order = 1.
template <typename Scalar>
CoeffSystem<Scalar> unipc_coeffs(int t, int order, const NoiseSchedule<Scalar>& sched) {
  if (order < 1) throw std::invalid_argument("unipc_coeffs: order must be at least 1");
  Vector<Scalar> nodes(order);
  nodes.head(order - 1) = detail::history_nodes(t, order - 1, sched);
  nodes[order - 1] = Scalar(1);
  return detail::solve_coeffs(nodes, sched.eta(t));
}

/// Predictor system for an order-`order` step: the history nodes only
/// (leading block of the corrector system), order-1 coefficients.
template <typename Scalar>
CoeffSystem<Scalar> predictor_coeffs(int t, int order, const NoiseSchedule<Scalar>& sched) {
  if (order < 1) throw std::invalid_argument("predictor_coeffs: order must be at least 1");
  return detail::solve_coeffs(detail::history_nodes(t, order - 1, sched), sched.eta(t));
}

/// r_theta = s_theta(x, t) - beta rbar_x, r_phi = s_phi(z, t) - gamma rbar_z.
/// The exact-Gaussian guidance is a true likelihood score and is moved to the
/// eps scale by sqrt(1 - alpha_t); the other estimators enter unscaled.
template <typename Scalar>
JointGradients<Scalar> jcg(const Vector<Scalar>& x, const Vector<Scalar>& z, const GuidanceContext<Scalar>& ctx,
                           const ScoreModel<Scalar>& model_x, const ScoreModel<Scalar>& model_z, int t,
                           GuidanceMethod method, Rng& rng) {
  JointGradients<Scalar> g{model_x.predict_epsilon(x, t), model_z.predict_epsilon(z, t), t};
  if (method == GuidanceMethod::None) return g;
  auto rbar = guidance_gradients(method, x, z, ctx, model_x, model_z, t, rng);
  const Scalar scale = method == GuidanceMethod::IcdmExact ? ctx.sched->sigma(t) : Scalar(1);
  g.r_theta -= (ctx.beta * scale) * rbar.x;
  g.r_phi -= (ctx.gamma * scale) * rbar.z;
  return g;
}

namespace detail {

template <typename Scalar>
Vector<Scalar> base_step(const Vector<Scalar>& prev, const Vector<Scalar>& r_prev, int t,
                         const NoiseSchedule<Scalar>& sched) {
  return std::sqrt(sched.alpha(t) / sched.alpha(t - 1)) * prev -
         sched.sigma(t) * std::expm1(sched.eta(t)) * r_prev;
}

/// sum over history nodes of (eta o_m) D_m for one chain.
template <typename Scalar, typename Pick>
Vector<Scalar> history_sum(const SamplerHistory<Scalar>& hist, const CoeffSystem<Scalar>& cs, int count,
                           Scalar eta, Pick pick) {
  const Vector<Scalar>& r_prev = pick(hist.back(0).grads);
  Vector<Scalar> acc = Vector<Scalar>::Zero(r_prev.size());
  for (int m = 1; m <= count; ++m) {
    acc += (eta * cs.o[m - 1] / cs.w[m - 1]) * (pick(hist.back(m).grads) - r_prev);
  }
  return acc;
}

template <typename Scalar>
void require_history(const SamplerHistory<Scalar>& hist, int t, int needed) {
  if (hist.size() < needed) throw std::invalid_argument("ConJPC: insufficient history");
  if (hist.back(0).grads.t != t - 1) throw std::invalid_argument("ConJPC: history does not end at step t-1");
}

inline const auto pick_theta = [](const auto& g) -> const auto& { return g.r_theta; };
inline const auto pick_phi = [](const auto& g) -> const auto& { return g.r_phi; };

}  // namespace detail

/// Predictor for step t. `coeffs` is the predictor system (history nodes
/// only); its size sets how many history differences enter.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> pc_predict(const SamplerHistory<Scalar>& hist, int t,
                                                     const NoiseSchedule<Scalar>& sched,
                                                     const CoeffSystem<Scalar>& coeffs) {
  const int count = coeffs.order;
  detail::require_history(hist, t, count + 1);
  const auto& last = hist.back(0);
  const Scalar eta = sched.eta(t);
  const Scalar scale = sched.sigma(t) * eta;
  Vector<Scalar> x = detail::base_step(last.x, last.grads.r_theta, t, sched);
  Vector<Scalar> z = detail::base_step(last.z, last.grads.r_phi, t, sched);
  if (count > 0) {
    x -= scale * detail::history_sum(hist, coeffs, count, eta, detail::pick_theta);
    z -= scale * detail::history_sum(hist, coeffs, count, eta, detail::pick_phi);
  }
  return {std::move(x), std::move(z)};
}

/// Corrector for step t given the predicted point. `coeffs` is the full
/// system whose last node is 1.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> pc_correct(const SamplerHistory<Scalar>& hist, const Vector<Scalar>& x_pred,
                                                     const Vector<Scalar>& z_pred, int t,
                                                     const NoiseSchedule<Scalar>& sched,
                                                     const GuidanceContext<Scalar>& ctx,
                                                     const ScoreModel<Scalar>& model_x,
                                                     const ScoreModel<Scalar>& model_z,
                                                     const CoeffSystem<Scalar>& coeffs,
                                                     const SamplerConfig<Scalar>& cfg, Rng& rng) {
  const int count = coeffs.order - 1;
  detail::require_history(hist, t, count + 1);
  const auto& last = hist.back(0);
  const Scalar eta = sched.eta(t);
  const Scalar scale = sched.sigma(t) * eta;
  const Scalar o_new = eta * coeffs.o[count];

  const JointGradients<Scalar> fresh =
      cfg.conditional_corrector
          ? jcg(x_pred, z_pred, ctx, model_x, model_z, t, cfg.method, rng)
          : JointGradients<Scalar>{model_x.predict_epsilon(x_pred, t), model_z.predict_epsilon(z_pred, t), t};

  Vector<Scalar> x = detail::base_step(last.x, last.grads.r_theta, t, sched);
  Vector<Scalar> z = detail::base_step(last.z, last.grads.r_phi, t, sched);
  Vector<Scalar> sx = o_new * (fresh.r_theta - last.grads.r_theta);
  Vector<Scalar> sz = o_new * (fresh.r_phi - last.grads.r_phi);
  if (count > 0) {
    sx += detail::history_sum(hist, coeffs, count, eta, detail::pick_theta);
    sz += detail::history_sum(hist, coeffs, count, eta, detail::pick_phi);
  }
  x -= scale * sx;
  z -= scale * sz;
  return {std::move(x), std::move(z)};
}

template <typename Scalar>
struct SampleResult {
  Vector<Scalar> x;
  Vector<Scalar> z;
};

/// Optional per-step observer, called with (t, x_t, z_t) after each corrector.
template <typename Scalar>
using StepObserver = std::function<void(int, const Vector<Scalar>&, const Vector<Scalar>&)>;

/// Integrate from the given t = 0 state to t = T. Steps t <= p run at order t.
/// `obs` may be null when the method is None.
template <typename Scalar>
SampleResult<Scalar> conjpc_sample(Vector<Scalar> x, Vector<Scalar> z, const EqualizedObservation<Scalar>* obs,
                                   const NoiseSchedule<Scalar>& sched, const ScoreModel<Scalar>& model_x,
                                   const ScoreModel<Scalar>& model_z, const SamplerConfig<Scalar>& cfg, Rng& rng,
                                   const StepObserver<Scalar>& observer = {}) {
  cfg.validate();
  if (cfg.t_max != sched.t_max()) throw std::invalid_argument("conjpc_sample: config and schedule step counts differ");
  detail::require_size(z.size(), x.size(), "conjpc_sample: z");
  const GuidanceContext<Scalar> ctx{obs, &sched, cfg.beta, cfg.gamma, cfg.sigma_hat2};
  ctx.validate();
  if (cfg.method != GuidanceMethod::None) detail::require_size(x.size(), ctx.observation().y.size(), "conjpc_sample: x");

  SamplerHistory<Scalar> hist(cfg.order);
  for (int t = 1; t <= cfg.t_max; ++t) {
    JointGradients<Scalar> g = jcg(x, z, ctx, model_x, model_z, t - 1, cfg.method, rng);
    if (!g.r_theta.allFinite() || !g.r_phi.allFinite()) throw DivergenceError("conjpc_sample: non-finite gradient", t - 1);
    hist.push({std::move(x), std::move(z), std::move(g)});

    const int order = std::min(t, cfg.order);
    auto [x_pred, z_pred] = pc_predict(hist, t, sched, predictor_coeffs(t, order, sched));
    std::tie(x, z) = pc_correct(hist, x_pred, z_pred, t, sched, ctx, model_x, model_z, unipc_coeffs(t, order, sched),
                                cfg, rng);
    if (!x.allFinite() || !z.allFinite()) throw DivergenceError("conjpc_sample: non-finite state", t);
    if (observer) observer(t, x, z);
  }
  return {std::move(x), std::move(z)};
}

/// Draws x_0 then z_0 from N(0, I) and runs ConJPC to t = T.
template <typename Scalar>
SampleResult<Scalar> icdm_sample(const EqualizedObservation<Scalar>& obs, const NoiseSchedule<Scalar>& sched,
                                 const ScoreModel<Scalar>& model_x, const ScoreModel<Scalar>& model_z,
                                 const SamplerConfig<Scalar>& cfg, Rng& rng) {
  const Index n = obs.y.size();
  Vector<Scalar> x0 = standard_normal<Scalar>(rng, n);
  Vector<Scalar> z0 = standard_normal<Scalar>(rng, n);
  return conjpc_sample(std::move(x0), std::move(z0), &obs, sched, model_x, model_z, cfg, rng);
}

/// grad_v log p(v | y) for the joint state v = [x; z] (length 4k).
template <typename Scalar>
using PosteriorScore = std::function<Vector<Scalar>(const Vector<Scalar>&)>;

/// Exact posterior score for Gaussian priors:
///   -P^{-1}(v - mu) + W^T ((sigma^2/2) W_n^2)^{-1} (y - W v).
template <typename Scalar>
PosteriorScore<Scalar> gaussian_posterior_score(const EqualizedObservation<Scalar>& obs,
                                                const GaussianPrior<Scalar>& prior_x,
                                                const GaussianPrior<Scalar>& prior_z) {
  const Index n = obs.y.size();
  detail::require_size(prior_x.dim(), n, "gaussian_posterior_score: prior_x");
  detail::require_size(prior_z.dim(), n, "gaussian_posterior_score: prior_z");
  Vector<Scalar> mean(2 * n), inv_var(2 * n);
  mean << prior_x.mean, prior_z.mean;
  inv_var << prior_x.var.cwiseInverse(), prior_z.var.cwiseInverse();
  const Vector<Scalar> inv_lambda = (Scalar(2) / obs.params.sigma2) * obs.mats.w_n.cwiseAbs2().cwiseInverse();
  return [&obs, n, mean, inv_var, inv_lambda](const Vector<Scalar>& v) {
    const Vector<Scalar> u = inv_lambda.cwiseProduct(obs.y - forward_operator(obs, v.head(n), v.tail(n)));
    const auto adj = detail::adjoint(obs, u);
    Vector<Scalar> g(2 * n);
    g << adj.x, adj.z;
    return Vector<Scalar>(g - inv_var.cwiseProduct(v - mean));
  };
}

/// Model-based posterior score: prior scores from the models at t = T (the
/// least-noised grid point) plus the exact likelihood score.
template <typename Scalar>
PosteriorScore<Scalar> model_posterior_score(const EqualizedObservation<Scalar>& obs,
                                             const ScoreModel<Scalar>& model_x, const ScoreModel<Scalar>& model_z,
                                             const NoiseSchedule<Scalar>& sched) {
  const Index n = obs.y.size();
  const Vector<Scalar> inv_lambda = (Scalar(2) / obs.params.sigma2) * obs.mats.w_n.cwiseAbs2().cwiseInverse();
  return [&obs, &model_x, &model_z, &sched, n, inv_lambda](const Vector<Scalar>& v) {
    const int t = sched.t_max();
    const Vector<Scalar> u = inv_lambda.cwiseProduct(obs.y - forward_operator(obs, v.head(n), v.tail(n)));
    const auto adj = detail::adjoint(obs, u);
    Vector<Scalar> g(2 * n);
    g << adj.x + epsilon_to_score(model_x.predict_epsilon(v.head(n), t), t, sched),
        adj.z + epsilon_to_score(model_z.predict_epsilon(v.tail(n), t), t, sched);
    return g;
  };
}

template <typename Scalar>
struct LangevinResult {
  Vector<Scalar> x;       // final iterate
  Vector<Scalar> z;
  Vector<Scalar> x_mean;  // mean over the trailing window
  Vector<Scalar> z_mean;
};

/// v <- v + (step/2) grad log p(v | y) + sqrt(step) eps, from v ~ N(0, I).
/// `window` trailing iterates are averaged.
template <typename Scalar>
LangevinResult<Scalar> langevin_solve(Index dim, const PosteriorScore<Scalar>& score, long steps, Scalar step,
                                      long window, Rng& rng) {
  if (!(step > 0)) throw std::invalid_argument("langevin_solve: step size must be positive");
  if (steps < 1) throw std::invalid_argument("langevin_solve: steps must be at least 1");
  window = std::clamp(window, 1L, steps);
  Vector<Scalar> v = standard_normal<Scalar>(rng, 2 * dim);
  Vector<Scalar> acc = Vector<Scalar>::Zero(2 * dim);
  const Scalar noise = std::sqrt(step);
  for (long s = 0; s < steps; ++s) {
    v += (step / Scalar(2)) * score(v) + noise * standard_normal<Scalar>(rng, 2 * dim);
    if (!v.allFinite()) throw DivergenceError("langevin_solve: non-finite iterate", static_cast<int>(s));
    if (s >= steps - window) acc += v;
  }
  acc /= Scalar(window);
  return {v.head(dim), v.tail(dim), acc.head(dim), acc.tail(dim)};
}

}  // namespace icdm
