#pragma once

// Discrete diffusion time axis. Index 0 is pure noise and index T is clean
// data: alpha increases with t. The grid is uniform in the log-SNR
// rho_t = 0.5 * log(alpha_t / (1 - alpha_t)), so every step has the same
// increment eta_t = rho_t - rho_{t-1}.

#include <cmath>
#include <string>

#include "icdm/core.hpp"

namespace icdm {

template <typename Scalar>
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  NoiseSchedule(int t_max, Scalar rho_min, Scalar rho_max) {
    if (t_max < 1) throw std::invalid_argument("make_schedule: t_max must be at least 1");
    if (!(rho_min < rho_max)) throw std::invalid_argument("make_schedule: rho_min must be below rho_max");
    t_max_ = t_max;
    rho_ = Vector<Scalar>::LinSpaced(t_max + 1, rho_min, rho_max);
    // LinSpaced can round the last point; pin both ends exactly.
    rho_[0] = rho_min;
    rho_[t_max] = rho_max;
    alpha_.resize(t_max + 1);
    for (int t = 0; t <= t_max; ++t) alpha_[t] = Scalar(1) / (Scalar(1) + std::exp(Scalar(-2) * rho_[t]));
    eta_.resize(t_max);
    for (int t = 1; t <= t_max; ++t) eta_[t - 1] = rho_[t] - rho_[t - 1];
  }

  int t_max() const { return t_max_; }
  Index size() const { return t_max_ + 1; }

  Scalar alpha(int t) const { return alpha_[check(t)]; }
  Scalar rho(int t) const { return rho_[check(t)]; }
  /// sqrt(1 - alpha_t), the noise standard deviation at step t.
  Scalar sigma(int t) const { return std::sqrt(Scalar(1) - alpha(t)); }

  /// Increment rho_t - rho_{t-1}, defined for t in [1, T].
  Scalar eta(int t) const {
    if (t < 1 || t > t_max_) throw RangeError("eta: step " + std::to_string(t) + " outside [1, T]");
    return eta_[t - 1];
  }

  const Vector<Scalar>& alphas() const { return alpha_; }
  const Vector<Scalar>& rhos() const { return rho_; }
  const Vector<Scalar>& etas() const { return eta_; }

  int check(int t) const {
    if (t < 0 || t > t_max_) {
      throw RangeError("schedule: step " + std::to_string(t) + " outside [0, " + std::to_string(t_max_) + "]");
    }
    return t;
  }

 private:
  int t_max_ = 0;
  Vector<Scalar> alpha_;
  Vector<Scalar> rho_;
  Vector<Scalar> eta_;
};

inline constexpr double kDefaultRhoMin = -6.0;
inline constexpr double kDefaultRhoMax = 6.0;
inline constexpr int kDefaultSteps = 40;

template <typename Scalar = double>
NoiseSchedule<Scalar> make_schedule(int t_max = kDefaultSteps, Scalar rho_min = Scalar(kDefaultRhoMin),
                                    Scalar rho_max = Scalar(kDefaultRhoMax)) {
  return NoiseSchedule<Scalar>(t_max, rho_min, rho_max);
}

/// sqrt(alpha_t) * clean + sqrt(1 - alpha_t) * eps.
template <typename Scalar, typename DC, typename DE>
Vector<Scalar> forward_diffuse(const Eigen::MatrixBase<DC>& clean, int t, const Eigen::MatrixBase<DE>& eps,
                               const NoiseSchedule<Scalar>& sched) {
  detail::require_size(eps.size(), clean.size(), "forward_diffuse");
  const Scalar a = sched.alpha(t);
  return std::sqrt(a) * clean + std::sqrt(Scalar(1) - a) * eps;
}

template <typename Scalar, typename Derived>
Vector<Scalar> epsilon_to_score(const Eigen::MatrixBase<Derived>& eps_hat, int t,
                                const NoiseSchedule<Scalar>& sched) {
  const Scalar a = sched.alpha(t);
  if (!(a < Scalar(1))) throw RangeError("epsilon_to_score: alpha_t = 1 at step " + std::to_string(t));
  return -eps_hat / std::sqrt(Scalar(1) - a);
}

template <typename Scalar, typename Derived>
Vector<Scalar> score_to_epsilon(const Eigen::MatrixBase<Derived>& score, int t,
                                const NoiseSchedule<Scalar>& sched) {
  return -std::sqrt(Scalar(1) - sched.alpha(t)) * score;
}

}  // namespace icdm
