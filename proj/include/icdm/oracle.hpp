#pragma once

// Closed-form references for the Gaussian testbed: the joint MAP estimate,
// the spectrum of Omega W = W^T Lambda^{-1} W with Lambda = (sigma^2/2) W_n^2,
// the estimation-error bound, and central finite differences.
//
// Symbol i couples the four unknowns (x_i, x_{i+k}, z_i, z_{i+k}) through the
// two observations (y_i, y_{i+k}), so every 4k x 4k system is a direct sum of
// k independent 4x4 blocks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "icdm/channel.hpp"
#include "icdm/core.hpp"
#include "icdm/guidance.hpp"
#include "icdm/score_models.hpp"

namespace icdm {

template <typename Scalar>
struct MapSolution {
  Vector<Scalar> x_hat;
  Vector<Scalar> z_hat;
  Scalar kkt_residual = 0;
};

template <typename Scalar>
struct BoundReport {
  Scalar lhs = 0;
  Scalar rhs = 0;
  Scalar xi = 0;
  Scalar lambda_min = 0;
  bool holds = false;
};

namespace detail {

/// Rows (i, i+k) of W restricted to columns (x_i, x_{i+k}, z_i, z_{i+k}).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 4> symbol_block(const EqualizedObservation<Scalar>& obs, Index i) {
  const auto& m = obs.mats;
  const Index k = m.k();
  const Scalar sx = std::sqrt(obs.params.p_x);
  const Scalar sz = std::sqrt(obs.params.p_z);
  Eigen::Matrix<Scalar, 2, 4> b;
  b << sx * m.w_s[i], 0, sz * m.z_tl[i], sz * m.z_tr[i],
       0, sx * m.w_s[i + k], sz * m.z_bl[i], sz * m.z_br[i];
  return b;
}

template <typename Scalar>
Vector<Scalar> noise_precision(const EqualizedObservation<Scalar>& obs) {
  if ((obs.mats.w_n.array() == Scalar(0)).any()) throw NumericalError("oracle: W_n is singular");
  return (Scalar(2) / obs.params.sigma2) * obs.mats.w_n.cwiseAbs2().cwiseInverse();
}

template <typename Scalar>
void check_priors(const EqualizedObservation<Scalar>& obs, const GaussianPrior<Scalar>& px,
                  const GaussianPrior<Scalar>& pz) {
  px.validate();
  pz.validate();
  detail::require_size(px.dim(), obs.y.size(), "gaussian_map_solve: prior_x");
  detail::require_size(pz.dim(), obs.y.size(), "gaussian_map_solve: prior_z");
}

}  // namespace detail

/// Stationarity residual ||grad_v log p(v | y)|| for Gaussian priors.
template <typename Scalar>
Scalar kkt_residual(const EqualizedObservation<Scalar>& obs, const GaussianPrior<Scalar>& prior_x,
                    const GaussianPrior<Scalar>& prior_z, const Vector<Scalar>& x, const Vector<Scalar>& z) {
  const Vector<Scalar> u = detail::noise_precision(obs).cwiseProduct(obs.y - forward_operator(obs, x, z));
  const auto adj = detail::adjoint(obs, u);
  const Scalar gx = (adj.x - (x - prior_x.mean).cwiseQuotient(prior_x.var)).squaredNorm();
  const Scalar gz = (adj.z - (z - prior_z.mean).cwiseQuotient(prior_z.var)).squaredNorm();
  return std::sqrt(gx + gz);
}

/// Solves (P^{-1} + W^T Lambda^{-1} W) v = W^T Lambda^{-1} y + P^{-1} mu one
/// 4x4 symbol block at a time.
template <typename Scalar>
MapSolution<Scalar> gaussian_map_solve(const EqualizedObservation<Scalar>& obs, const GaussianPrior<Scalar>& prior_x,
                                       const GaussianPrior<Scalar>& prior_z) {
  detail::check_priors(obs, prior_x, prior_z);
  const Index k = obs.mats.k();
  const Vector<Scalar> prec = detail::noise_precision(obs);
  MapSolution<Scalar> sol{Vector<Scalar>(2 * k), Vector<Scalar>(2 * k), 0};

  for (Index i = 0; i < k; ++i) {
    const Index idx[4] = {i, i + k, i, i + k};
    const auto b = detail::symbol_block(obs, i);
    const Eigen::Matrix<Scalar, 2, 1> lam(prec[i], prec[i + k]);
    const Eigen::Matrix<Scalar, 2, 1> yb(obs.y[i], obs.y[i + k]);

    Eigen::Matrix<Scalar, 4, 1> pinv, mu;
    for (int j = 0; j < 4; ++j) {
      const auto& prior = j < 2 ? prior_x : prior_z;
      pinv[j] = Scalar(1) / prior.var[idx[j]];
      mu[j] = prior.mean[idx[j]];
    }
    Eigen::Matrix<Scalar, 4, 4> a = b.transpose() * lam.asDiagonal() * b;
    a.diagonal() += pinv;
    const Eigen::Matrix<Scalar, 4, 1> rhs = b.transpose() * lam.cwiseProduct(yb) + pinv.cwiseProduct(mu);
    Eigen::LLT<Eigen::Matrix<Scalar, 4, 4>> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("gaussian_map_solve: singular block " + std::to_string(i));
    const Eigen::Matrix<Scalar, 4, 1> v = llt.solve(rhs);
    sol.x_hat[i] = v[0];
    sol.x_hat[i + k] = v[1];
    sol.z_hat[i] = v[2];
    sol.z_hat[i + k] = v[3];
  }
  sol.kkt_residual = kkt_residual(obs, prior_x, prior_z, sol.x_hat, sol.z_hat);
  return sol;
}

/// Dense 4k x 4k reference solve.
template <typename Scalar>
MapSolution<Scalar> gaussian_map_solve_dense(const EqualizedObservation<Scalar>& obs,
                                             const GaussianPrior<Scalar>& prior_x,
                                             const GaussianPrior<Scalar>& prior_z) {
  detail::check_priors(obs, prior_x, prior_z);
  const Index n = obs.y.size();
  const Matrix<Scalar> w = detail::dense_forward(obs);
  const Vector<Scalar> prec = detail::noise_precision(obs);
  Vector<Scalar> pinv(2 * n), mu(2 * n);
  pinv << prior_x.var.cwiseInverse(), prior_z.var.cwiseInverse();
  mu << prior_x.mean, prior_z.mean;

  Matrix<Scalar> a = w.transpose() * prec.asDiagonal() * w;
  a.diagonal() += pinv;
  const Vector<Scalar> rhs = w.transpose() * prec.cwiseProduct(obs.y) + pinv.cwiseProduct(mu);
  Eigen::LLT<Matrix<Scalar>> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("gaussian_map_solve_dense: system is not positive definite");
  const Vector<Scalar> v = llt.solve(rhs);
  MapSolution<Scalar> sol{v.head(n), v.tail(n), 0};
  sol.kkt_residual = kkt_residual(obs, prior_x, prior_z, sol.x_hat, sol.z_hat);
  return sol;
}

/// Smallest eigenvalue of Omega W. Each 4x4 block is B^T L B with B of size
/// 2x4, so it has rank at most 2 and two exact zero eigenvalues; the nonzero
/// pair comes from the 2x2 matrix L^{1/2} B B^T L^{1/2}.
template <typename Scalar>
Scalar lambda_min(const EqualizedObservation<Scalar>& obs) {
  const Index k = obs.mats.k();
  const Vector<Scalar> prec = detail::noise_precision(obs);
  Scalar lo = 0;
  for (Index i = 0; i < k; ++i) {
    const auto b = detail::symbol_block(obs, i);
    const Eigen::Matrix<Scalar, 2, 1> s(std::sqrt(prec[i]), std::sqrt(prec[i + k]));
    const Eigen::Matrix<Scalar, 2, 2> g = s.asDiagonal() * (b * b.transpose()) * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, 2, 2>> es(g, Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues()[0]);
  }
  return lo;
}

template <typename Scalar>
Scalar lambda_min_dense(const EqualizedObservation<Scalar>& obs) {
  const Matrix<Scalar> w = detail::dense_forward(obs);
  const Matrix<Scalar> a = w.transpose() * detail::noise_precision(obs).asDiagonal() * w;
  Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

/// (xi + lambda_min) ||v_hat - v*|| <= ||Sigma n|| with
/// Sigma = (2/sigma^2) W^T W_n^{-1} and n = W_n^{-1} eq_noise, i.e.
/// Sigma n = W^T Lambda^{-1} eq_noise.
template <typename Scalar>
BoundReport<Scalar> theorem_bound_check(const Vector<Scalar>& x_hat, const Vector<Scalar>& z_hat,
                                        const Vector<Scalar>& x_star, const Vector<Scalar>& z_star,
                                        const Vector<Scalar>& eq_noise, const EqualizedObservation<Scalar>& obs,
                                        Scalar xi) {
  const Index n = obs.y.size();
  for (const auto* v : {&x_hat, &z_hat, &x_star, &z_star, &eq_noise}) {
    detail::require_size(v->size(), n, "theorem_bound_check");
  }
  if (!(xi > 0)) throw std::invalid_argument("theorem_bound_check: xi must be positive");
  BoundReport<Scalar> rep;
  rep.xi = xi;
  rep.lambda_min = lambda_min(obs);
  const auto sn = detail::adjoint(obs, Vector<Scalar>(detail::noise_precision(obs).cwiseProduct(eq_noise)));
  rep.rhs = std::sqrt(sn.x.squaredNorm() + sn.z.squaredNorm());
  rep.lhs = (xi + rep.lambda_min) * std::sqrt((x_hat - x_star).squaredNorm() + (z_hat - z_star).squaredNorm());
  rep.holds = rep.lhs <= rep.rhs + Scalar(1e-9);
  return rep;
}

/// Strong-convexity parameter of a Gaussian log-density: the smallest inverse
/// variance.
template <typename Scalar>
Scalar gaussian_xi(const GaussianPrior<Scalar>& prior_x, const GaussianPrior<Scalar>& prior_z) {
  return std::min(prior_x.var.cwiseInverse().minCoeff(), prior_z.var.cwiseInverse().minCoeff());
}

template <typename Scalar>
Vector<Scalar> finite_diff_gradient(const std::function<Scalar(const Vector<Scalar>&)>& f, const Vector<Scalar>& v,
                                    Scalar h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  Vector<Scalar> g(v.size());
  Vector<Scalar> p = v;
  for (Index i = 0; i < v.size(); ++i) {
    p[i] = v[i] + h;
    const Scalar fp = f(p);
    p[i] = v[i] - h;
    const Scalar fm = f(p);
    p[i] = v[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_gradient: non-finite value at coordinate " + std::to_string(i));
    }
    g[i] = (fp - fm) / (Scalar(2) * h);
  }
  return g;
}

}  // namespace icdm
