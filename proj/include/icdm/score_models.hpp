#pragma once

// Score models map (noisy sample, step) to a predicted noise eps_hat, the
// parametrization the sampler consumes. eps_hat = -sqrt(1 - alpha_t) * score.
//
// Two analytic oracles (Gaussian and Gaussian-mixture priors, whose time-t
// marginals are known in closed form) and one trainable per-step diagonal
// affine model are provided, plus the denoising-score-matching trainer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "icdm/core.hpp"
#include "icdm/rng.hpp"
#include "icdm/schedule.hpp"

namespace icdm {

template <typename Scalar>
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual Vector<Scalar> predict_epsilon(const Vector<Scalar>& sample, int t) const = 0;
};

template <typename Scalar>
struct GaussianPrior {
  Vector<Scalar> mean;
  Vector<Scalar> var;

  static GaussianPrior isotropic(Index dim, Scalar variance = 1, Scalar mean_value = 0) {
    return {Vector<Scalar>::Constant(dim, mean_value), Vector<Scalar>::Constant(dim, variance)};
  }

  Index dim() const { return mean.size(); }

  void validate() const {
    detail::require_size(var.size(), mean.size(), "GaussianPrior: variance");
    if (!(var.array() > 0).all()) throw std::invalid_argument("GaussianPrior: variances must be positive");
  }

  Vector<Scalar> sample(Rng& rng) const {
    return mean + var.cwiseSqrt().cwiseProduct(standard_normal<Scalar>(rng, dim()));
  }
};

template <typename Scalar>
struct GaussianMixturePrior {
  Vector<Scalar> weights;
  std::vector<GaussianPrior<Scalar>> components;

  Index dim() const { return components.empty() ? 0 : components.front().dim(); }

  void validate() const {
    if (components.empty()) throw std::invalid_argument("GaussianMixturePrior: no components");
    detail::require_size(weights.size(), static_cast<Index>(components.size()), "GaussianMixturePrior: weights");
    if ((weights.array() < 0).any() || std::abs(weights.sum() - Scalar(1)) > Scalar(1e-12)) {
      throw std::invalid_argument("GaussianMixturePrior: weights must lie on the simplex");
    }
    for (const auto& c : components) {
      c.validate();
      detail::require_size(c.dim(), dim(), "GaussianMixturePrior: component");
    }
  }

  Vector<Scalar> sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> pick(weights.data(), weights.data() + weights.size());
    return components[pick(rng)].sample(rng);
  }
};

/// Exact eps_hat for a diagonal Gaussian prior: the time-t marginal is
/// N(sqrt(a) mu, a c + (1 - a)) per component.
template <typename Scalar>
Vector<Scalar> gaussian_epsilon(const Vector<Scalar>& sample, int t, const GaussianPrior<Scalar>& prior,
                                const NoiseSchedule<Scalar>& sched) {
  detail::require_size(sample.size(), prior.dim(), "gaussian_epsilon");
  const Scalar a = sched.alpha(t);
  const auto marginal_var = (a * prior.var.array() + (Scalar(1) - a));
  const Vector<Scalar> score = (-(sample.array() - std::sqrt(a) * prior.mean.array()) / marginal_var).matrix();
  return -std::sqrt(Scalar(1) - a) * score;
}

/// Exact eps_hat for a Gaussian mixture: responsibility-weighted component
/// scores, responsibilities via log-sum-exp.
template <typename Scalar>
Vector<Scalar> gmm_epsilon(const Vector<Scalar>& sample, int t, const GaussianMixturePrior<Scalar>& prior,
                           const NoiseSchedule<Scalar>& sched) {
  detail::require_size(sample.size(), prior.dim(), "gmm_epsilon");
  const Scalar a = sched.alpha(t);
  const Scalar sa = std::sqrt(a);
  const std::size_t n = prior.components.size();

  std::vector<Scalar> log_w(n);
  std::vector<Vector<Scalar>> scores(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = prior.components[j];
    const Vector<Scalar> var = (a * c.var.array() + (Scalar(1) - a)).matrix();
    const Vector<Scalar> diff = sample - sa * c.mean;
    log_w[j] = std::log(prior.weights[static_cast<Index>(j)]) -
               Scalar(0.5) * ((Scalar(2) * std::numbers::pi_v<Scalar> * var.array()).log().sum() +
                              (diff.array().square() / var.array()).sum());
    scores[j] = (-diff.array() / var.array()).matrix();
  }
  const Scalar max_log = *std::max_element(log_w.begin(), log_w.end());
  Scalar norm = 0;
  for (auto& lw : log_w) norm += (lw = std::exp(lw - max_log));

  Vector<Scalar> score = Vector<Scalar>::Zero(sample.size());
  for (std::size_t j = 0; j < n; ++j) score += (log_w[j] / norm) * scores[j];
  return -std::sqrt(Scalar(1) - a) * score;
}

template <typename Scalar>
class GaussianScoreModel final : public ScoreModel<Scalar> {
 public:
  GaussianScoreModel(GaussianPrior<Scalar> prior, NoiseSchedule<Scalar> sched)
      : prior_(std::move(prior)), sched_(std::move(sched)) {
    prior_.validate();
  }

  Vector<Scalar> predict_epsilon(const Vector<Scalar>& sample, int t) const override {
    return gaussian_epsilon(sample, t, prior_, sched_);
  }

  const GaussianPrior<Scalar>& prior() const { return prior_; }

 private:
  GaussianPrior<Scalar> prior_;
  NoiseSchedule<Scalar> sched_;
};

template <typename Scalar>
class GmmScoreModel final : public ScoreModel<Scalar> {
 public:
  GmmScoreModel(GaussianMixturePrior<Scalar> prior, NoiseSchedule<Scalar> sched)
      : prior_(std::move(prior)), sched_(std::move(sched)) {
    prior_.validate();
  }

  Vector<Scalar> predict_epsilon(const Vector<Scalar>& sample, int t) const override {
    return gmm_epsilon(sample, t, prior_, sched_);
  }

 private:
  GaussianMixturePrior<Scalar> prior_;
  NoiseSchedule<Scalar> sched_;
};

/// Per-step diagonal affine predictor eps_hat = D_t ∘ x + c_t. Row t of
/// `gain` / `bias` holds D_t / c_t.
template <typename Scalar>
class AffineScoreModel final : public ScoreModel<Scalar> {
 public:
  AffineScoreModel() = default;
  AffineScoreModel(int t_max, Index dim)
      : gain_(Matrix<Scalar>::Zero(t_max + 1, dim)), bias_(Matrix<Scalar>::Zero(t_max + 1, dim)) {}
  AffineScoreModel(Matrix<Scalar> gain, Matrix<Scalar> bias) : gain_(std::move(gain)), bias_(std::move(bias)) {
    if (gain_.rows() != bias_.rows() || gain_.cols() != bias_.cols()) {
      throw DimensionError("AffineScoreModel: gain and bias tables differ in shape");
    }
    if (!gain_.allFinite() || !bias_.allFinite()) {
      throw std::invalid_argument("AffineScoreModel: non-finite entries");
    }
  }

  int t_max() const { return static_cast<int>(gain_.rows()) - 1; }
  Index dim() const { return gain_.cols(); }

  Vector<Scalar> predict_epsilon(const Vector<Scalar>& sample, int t) const override {
    check(t);
    detail::require_size(sample.size(), dim(), "affine_predict");
    return gain_.row(t).transpose().cwiseProduct(sample) + bias_.row(t).transpose();
  }

  Matrix<Scalar>& gain() { return gain_; }
  Matrix<Scalar>& bias() { return bias_; }
  const Matrix<Scalar>& gain() const { return gain_; }
  const Matrix<Scalar>& bias() const { return bias_; }

 private:
  void check(int t) const {
    if (t < 0 || t > t_max()) throw RangeError("affine_predict: step " + std::to_string(t) + " out of range");
  }

  Matrix<Scalar> gain_;
  Matrix<Scalar> bias_;
};

template <typename Scalar>
Vector<Scalar> affine_predict(const Vector<Scalar>& sample, int t, const AffineScoreModel<Scalar>& model) {
  return model.predict_epsilon(sample, t);
}

template <typename Scalar>
struct DsmOptions {
  int iters = 1000;
  Scalar lr = Scalar(1e-2);
  int batch = 64;
  // Pair every (clean, eps, t) draw with (clean, -eps, t). Cancels the
  // eps-odd part of the gradient noise, which otherwise swamps D_t near t = T
  // where the target sqrt(1 - alpha_t) is ~1e-3.
  bool antithetic = true;
  // Fraction of final iterations whose parameter iterates are averaged into
  // the returned model. 0 returns the last iterate.
  Scalar average_tail = Scalar(0.5);
  Scalar divergence_limit = Scalar(1e6);
};

template <typename Scalar>
struct DsmResult {
  AffineScoreModel<Scalar> model;
  std::vector<Scalar> loss;  // mean batch loss before each update
};

/// Denoising score matching on the affine family: draw clean samples, noise
/// eps ~ N(0, I) and a grid step t uniformly on {0..T}, then take an SGD step
/// on the mean of ||D_t ∘ x_t + c_t - eps||^2 with closed-form gradients.
template <typename Scalar, typename CleanSource>
DsmResult<Scalar> dsm_train(AffineScoreModel<Scalar> model, CleanSource&& draw_clean,
                            const NoiseSchedule<Scalar>& sched, const DsmOptions<Scalar>& opt, Rng& rng) {
  if (opt.iters < 1) throw std::invalid_argument("dsm_train: iters must be at least 1");
  if (!(opt.lr >= 0)) throw std::invalid_argument("dsm_train: learning rate must be non-negative");
  if (opt.batch < 1) throw std::invalid_argument("dsm_train: batch must be at least 1");
  if (model.t_max() != sched.t_max()) throw DimensionError("dsm_train: model and schedule grids differ");

  const Index dim = model.dim();
  const int t_max = sched.t_max();
  std::uniform_int_distribution<int> pick_t(0, t_max);

  const int avg_start = opt.iters - static_cast<int>(std::floor(opt.average_tail * Scalar(opt.iters)));
  Matrix<Scalar> gain_sum = Matrix<Scalar>::Zero(t_max + 1, dim);
  Matrix<Scalar> bias_sum = Matrix<Scalar>::Zero(t_max + 1, dim);
  int averaged = 0;

  Matrix<Scalar> grad_gain(t_max + 1, dim);
  Matrix<Scalar> grad_bias(t_max + 1, dim);
  DsmResult<Scalar> result;
  result.loss.reserve(static_cast<std::size_t>(opt.iters));

  const Scalar inv_batch = Scalar(1) / Scalar(opt.batch);
  for (int it = 0; it < opt.iters; ++it) {
    grad_gain.setZero();
    grad_bias.setZero();
    Scalar loss = 0;

    Vector<Scalar> clean, eps;
    int t = 0;
    for (int b = 0; b < opt.batch; ++b) {
      const bool mirror = opt.antithetic && (b % 2 == 1);
      if (mirror) {
        eps = -eps;
      } else {
        clean = draw_clean(rng);
        detail::require_size(clean.size(), dim, "dsm_train: clean sample");
        eps = standard_normal<Scalar>(rng, dim);
        t = pick_t(rng);
      }
      const Vector<Scalar> noisy = forward_diffuse(clean, t, eps, sched);
      const Vector<Scalar> residual =
          model.gain().row(t).transpose().cwiseProduct(noisy) + model.bias().row(t).transpose() - eps;
      loss += residual.squaredNorm();
      grad_gain.row(t) += (Scalar(2) * inv_batch) * residual.cwiseProduct(noisy).transpose();
      grad_bias.row(t) += (Scalar(2) * inv_batch) * residual.transpose();
    }
    loss *= inv_batch;
    if (!std::isfinite(loss) || loss > opt.divergence_limit) {
      throw NumericalError("dsm_train: loss diverged at iteration " + std::to_string(it));
    }
    result.loss.push_back(loss);

    model.gain() -= opt.lr * grad_gain;
    model.bias() -= opt.lr * grad_bias;
    if (it >= avg_start) {
      gain_sum += model.gain();
      bias_sum += model.bias();
      ++averaged;
    }
  }

  if (averaged > 0) {
    model.gain() = gain_sum / Scalar(averaged);
    model.bias() = bias_sum / Scalar(averaged);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace icdm
