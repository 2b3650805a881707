#pragma once

// Channel-likelihood guidance: estimates of grad_v log p(y | v_t) for the
// joint state v_t = [x_t; z_t]. Every method returns the ascent direction of
// its log-likelihood surrogate, split into the x and z blocks.
//
// The `t` argument is always the grid step at which the input samples live.

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>

#include "icdm/channel.hpp"
#include "icdm/core.hpp"
#include "icdm/rng.hpp"
#include "icdm/schedule.hpp"
#include "icdm/score_models.hpp"

namespace icdm {

enum class GuidanceMethod { Icdm, IcdmExact, Dps, Gdm, Projection, None };

inline std::string_view to_string(GuidanceMethod m) {
  switch (m) {
    case GuidanceMethod::Icdm: return "icdm";
    case GuidanceMethod::IcdmExact: return "icdm_exact";
    case GuidanceMethod::Dps: return "dps";
    case GuidanceMethod::Gdm: return "gdm";
    case GuidanceMethod::Projection: return "projection";
    case GuidanceMethod::None: return "none";
  }
  return "?";
}

inline GuidanceMethod parse_guidance_method(std::string_view s) {
  for (auto m : {GuidanceMethod::Icdm, GuidanceMethod::IcdmExact, GuidanceMethod::Dps, GuidanceMethod::Gdm,
                 GuidanceMethod::Projection, GuidanceMethod::None}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown guidance method '" + std::string(s) + "'");
}

template <typename Scalar>
struct GuidanceContext {
  const EqualizedObservation<Scalar>* obs = nullptr;
  const NoiseSchedule<Scalar>* sched = nullptr;
  Scalar beta = 1;
  Scalar gamma = 1;
  Scalar sigma_hat2 = 1;

  void validate() const {
    if (sched == nullptr) throw std::invalid_argument("GuidanceContext: missing schedule");
    if (!std::isfinite(beta) || !std::isfinite(gamma)) throw std::invalid_argument("GuidanceContext: non-finite weight");
    if (!(sigma_hat2 > 0)) throw std::invalid_argument("GuidanceContext: sigma_hat2 must be positive");
  }

  const EqualizedObservation<Scalar>& observation() const {
    if (obs == nullptr) throw std::invalid_argument("GuidanceContext: guidance requires an observation");
    return *obs;
  }
};

template <typename Scalar>
struct GuidanceGradients {
  Vector<Scalar> x;
  Vector<Scalar> z;
};

template <typename Scalar>
Scalar zeta(int t, const NoiseSchedule<Scalar>& sched, Scalar sigma_hat2) {
  return sigma_hat2 / ((Scalar(1) - sched.alpha(t)) + sigma_hat2);
}

namespace detail {

template <typename Scalar>
void check_pair(const EqualizedObservation<Scalar>& obs, const Vector<Scalar>& x, const Vector<Scalar>& z,
                const char* what) {
  detail::require_size(x.size(), obs.y.size(), what);
  detail::require_size(z.size(), obs.y.size(), what);
}

/// (sqrt(P_x) W_s^T u, sqrt(P_z) W_z^T u): the adjoint of the forward operator.
template <typename Scalar>
GuidanceGradients<Scalar> adjoint(const EqualizedObservation<Scalar>& obs, const Vector<Scalar>& u) {
  return {std::sqrt(obs.params.p_x) * apply_w(obs.mats, Operator::S, u),
          std::sqrt(obs.params.p_z) * apply_w(obs.mats, Operator::ZT, u)};
}

/// Dense W = [sqrt(P_x) W_s, sqrt(P_z) W_z], 2k x 4k.
template <typename Scalar>
Matrix<Scalar> dense_forward(const EqualizedObservation<Scalar>& obs) {
  const Index n = obs.y.size();
  Matrix<Scalar> w(n, 2 * n);
  w.leftCols(n) = std::sqrt(obs.params.p_x) * obs.mats.dense(Operator::S);
  w.rightCols(n) = std::sqrt(obs.params.p_z) * obs.mats.dense(Operator::Z);
  return w;
}

}  // namespace detail

/// The ICDM estimator with Theta_t approximated by W_n^2 and the 2/sigma^2
/// constant dropped:
///   r = y / zeta - sqrt(P_x) W_s x - sqrt(P_z) W_z z,
///   rbar = zeta^2 [sqrt(P_x) W_s^T; sqrt(P_z) W_z^T] W_n^{-2} r.
template <typename Scalar>
GuidanceGradients<Scalar> icdm_guidance(const Vector<Scalar>& x, const Vector<Scalar>& z,
                                        const GuidanceContext<Scalar>& ctx, int t) {
  const auto& obs = ctx.observation();
  detail::check_pair(obs, x, z, "icdm_guidance");
  if ((obs.mats.w_n.array() == Scalar(0)).any()) throw NumericalError("icdm_guidance: W_n is singular");
  const Scalar zt = zeta(t, *ctx.sched, ctx.sigma_hat2);
  const Vector<Scalar> r = obs.y / zt - forward_operator(obs, x, z);
  const Vector<Scalar> u = (zt * zt) * r.cwiseQuotient(obs.mats.w_n.cwiseAbs2());
  return detail::adjoint(obs, u);
}

/// Gradient of log N(y; zeta W v, Theta_t) with the full
///   Theta_t = (sigma^2/2) W_n^2 + ((1-a) s / ((1-a) + s)) W W^T,  s = sigma_hat2,
/// via a dense Cholesky solve. Verification path; O(k^3).
/// `include_prior_term = false` drops the W W^T term.
template <typename Scalar>
GuidanceGradients<Scalar> exact_gaussian_guidance(const Vector<Scalar>& x, const Vector<Scalar>& z,
                                                  const GuidanceContext<Scalar>& ctx, int t,
                                                  bool include_prior_term = true) {
  const auto& obs = ctx.observation();
  detail::check_pair(obs, x, z, "exact_gaussian_guidance");
  const Index n = obs.y.size();
  const Scalar a = ctx.sched->alpha(t);
  const Scalar zt = zeta(t, *ctx.sched, ctx.sigma_hat2);
  const Matrix<Scalar> w = detail::dense_forward(obs);

  Matrix<Scalar> theta = Matrix<Scalar>::Zero(n, n);
  theta.diagonal() = (obs.params.sigma2 / Scalar(2)) * obs.mats.w_n.cwiseAbs2();
  if (include_prior_term) {
    const Scalar c = (Scalar(1) - a) * ctx.sigma_hat2 / ((Scalar(1) - a) + ctx.sigma_hat2);
    theta.noalias() += c * w * w.transpose();
  }
  Eigen::LLT<Matrix<Scalar>> llt(theta);
  if (llt.info() != Eigen::Success) throw NumericalError("exact_gaussian_guidance: Theta_t is not positive definite");

  Vector<Scalar> v(2 * n);
  v << x, z;
  const Vector<Scalar> residual = obs.y / zt - w * v;
  const Vector<Scalar> g = (zt * zt) * (w.transpose() * llt.solve(residual));
  return {g.head(n), g.tail(n)};
}

/// Tweedie estimate of the clean sample: (sample - sqrt(1-a) eps_hat) / sqrt(a).
template <typename Scalar>
Vector<Scalar> predict_clean(const Vector<Scalar>& sample, int t, const ScoreModel<Scalar>& model,
                             const NoiseSchedule<Scalar>& sched) {
  const Scalar a = sched.alpha(t);
  if (!(a > 0)) throw RangeError("predict_clean: alpha_t = 0 at step " + std::to_string(t));
  return (sample - std::sqrt(Scalar(1) - a) * model.predict_epsilon(sample, t)) / std::sqrt(a);
}

namespace detail {

template <typename Scalar>
Vector<Scalar> clean_residual(const Vector<Scalar>& x, const Vector<Scalar>& z, const GuidanceContext<Scalar>& ctx,
                              const ScoreModel<Scalar>& model_x, const ScoreModel<Scalar>& model_z, int t) {
  const auto& obs = ctx.observation();
  const Vector<Scalar> x0 = predict_clean(x, t, model_x, *ctx.sched);
  const Vector<Scalar> z0 = predict_clean(z, t, model_z, *ctx.sched);
  return obs.y - forward_operator(obs, x0, z0);
}

}  // namespace detail

inline constexpr double kDpsKappaCap = 1e8;

/// DPS: -kappa * grad ||y - W v_hat||^2 with kappa = 1 / (2 ||r||), taken with
/// respect to the Tweedie estimates v_hat (no Jacobian through the model).
template <typename Scalar>
GuidanceGradients<Scalar> dps_guidance(const Vector<Scalar>& x, const Vector<Scalar>& z,
                                       const GuidanceContext<Scalar>& ctx, const ScoreModel<Scalar>& model_x,
                                       const ScoreModel<Scalar>& model_z, int t) {
  const auto& obs = ctx.observation();
  detail::check_pair(obs, x, z, "dps_guidance");
  const Vector<Scalar> r = detail::clean_residual(x, z, ctx, model_x, model_z, t);
  const Scalar norm = r.norm();
  const Scalar kappa = norm > 0 ? std::min(Scalar(1) / (Scalar(2) * norm), Scalar(kDpsKappaCap)) : Scalar(0);
  return detail::adjoint(obs, Vector<Scalar>((Scalar(2) * kappa) * r));
}

/// GDM: sqrt(P) W^T M^{-1} r with
///   M = W_s W_s^T + W_z W_z^T + ((2 - a) ||y||^2 / (1 - a)) I,
/// which is diagonal for the effective matrices here.
template <typename Scalar>
GuidanceGradients<Scalar> gdm_guidance(const Vector<Scalar>& x, const Vector<Scalar>& z,
                                       const GuidanceContext<Scalar>& ctx, const ScoreModel<Scalar>& model_x,
                                       const ScoreModel<Scalar>& model_z, int t) {
  const auto& obs = ctx.observation();
  detail::check_pair(obs, x, z, "gdm_guidance");
  const Scalar a = ctx.sched->alpha(t);
  if (!(a < Scalar(1))) throw RangeError("gdm_guidance: alpha_t = 1 at step " + std::to_string(t));
  const Vector<Scalar> r = detail::clean_residual(x, z, ctx, model_x, model_z, t);
  const Vector<Scalar> m = ((obs.mats.w_s.cwiseAbs2() + obs.mats.wz_gram_diagonal()).array() +
                            (Scalar(2) - a) * obs.y.squaredNorm() / (Scalar(1) - a))
                               .matrix();
  return detail::adjoint(obs, Vector<Scalar>(r.cwiseQuotient(m)));
}

/// Projection: noise the observation to level t, then take the gradient of
/// -||y_t - W v_t||^2 at the current samples.
template <typename Scalar>
GuidanceGradients<Scalar> projection_guidance(const Vector<Scalar>& x, const Vector<Scalar>& z,
                                              const GuidanceContext<Scalar>& ctx, int t, Rng& rng) {
  const auto& obs = ctx.observation();
  detail::check_pair(obs, x, z, "projection_guidance");
  const Scalar a = ctx.sched->alpha(t);
  const Vector<Scalar> y_t =
      std::sqrt(a) * obs.y + std::sqrt(Scalar(1) - a) * standard_normal<Scalar>(rng, obs.y.size());
  const Vector<Scalar> r = y_t - forward_operator(obs, x, z);
  return detail::adjoint(obs, Vector<Scalar>(Scalar(2) * r));
}

/// Dispatch on the method. `None` returns zeros. `rng` is only consumed by
/// Projection.
template <typename Scalar>
GuidanceGradients<Scalar> guidance_gradients(GuidanceMethod method, const Vector<Scalar>& x, const Vector<Scalar>& z,
                                             const GuidanceContext<Scalar>& ctx, const ScoreModel<Scalar>& model_x,
                                             const ScoreModel<Scalar>& model_z, int t, Rng& rng) {
  switch (method) {
    case GuidanceMethod::Icdm: return icdm_guidance(x, z, ctx, t);
    case GuidanceMethod::IcdmExact: return exact_gaussian_guidance(x, z, ctx, t);
    case GuidanceMethod::Dps: return dps_guidance(x, z, ctx, model_x, model_z, t);
    case GuidanceMethod::Gdm: return gdm_guidance(x, z, ctx, model_x, model_z, t);
    case GuidanceMethod::Projection: return projection_guidance(x, z, ctx, t, rng);
    case GuidanceMethod::None: break;
  }
  return {Vector<Scalar>::Zero(x.size()), Vector<Scalar>::Zero(z.size())};
}

}  // namespace icdm
