#include <doctest.h>

#include <cmath>
#include <limits>

#include "icdm/oracle.hpp"
#include "icdm/sampler.hpp"

using namespace icdm;

namespace {

struct ConstantModel final : ScoreModel<double> {
  VectorXd eps;
  explicit ConstantModel(VectorXd e) : eps(std::move(e)) {}
  VectorXd predict_epsilon(const VectorXd&, int) const override { return eps; }
};

struct NanModel final : ScoreModel<double> {
  VectorXd predict_epsilon(const VectorXd& x, int) const override {
    return VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
  }
};

EqualizedObservation<double> make_obs(ChannelKind kind, Index k, double p_z, double sigma2, std::uint64_t seed) {
  Rng rng(seed);
  const auto ch = sample_channel(kind, k, rng);
  return transmit_and_equalize<double>(complex_normal(rng, k), complex_normal(rng, k), ch, {1.0, p_z, sigma2, k}, rng);
}

HistoryEntry<double> entry(const VectorXd& x, const VectorXd& z, const VectorXd& rt, const VectorXd& rp, int t) {
  return {x, z, {rt, rp, t}};
}

// Global error of the unguided sampler against the exact Gaussian flow map.
double flow_error(int order, int steps, double c) {
  const auto sched = make_schedule<double>(steps);
  const GaussianScoreModel<double> model(GaussianPrior<double>::isotropic(4, c), sched);
  Rng init(99);
  const VectorXd x0 = standard_normal(init, 4), z0 = standard_normal(init, 4);
  SamplerConfig<double> cfg;
  cfg.order = order;
  cfg.t_max = steps;
  cfg.method = GuidanceMethod::None;
  Rng rng(1);
  const auto out = conjpc_sample<double>(x0, z0, nullptr, sched, model, model, cfg, rng);
  const double a0 = sched.alpha(0), a1 = sched.alpha(steps);
  const double gain = std::sqrt((a1 * c + 1 - a1) / (a0 * c + 1 - a0));
  return std::sqrt((out.x - gain * x0).squaredNorm() + (out.z - gain * z0).squaredNorm());
}

}  // namespace

TEST_CASE("coefficient systems") {
  const auto s = make_schedule<double>();
  const double eta = s.eta(10);
  CHECK(eta == doctest::Approx(0.3).epsilon(1e-12));

  SUBCASE("order one has the closed form") {
    const auto cs = unipc_coeffs(10, 1, s);
    REQUIRE(cs.order == 1);
    CHECK(cs.w[0] == 1.0);
    const double expect = (std::expm1(eta) / eta - 1) / (eta * eta);
    CHECK(cs.o[0] == doctest::Approx(expect).epsilon(1e-14));
    // second-order Taylor check: (e^h - 1 - h) / h^2 -> 1/2 + h/6
    CHECK(eta * cs.o[0] == doctest::Approx(0.5 + eta / 6 + eta * eta / 24).epsilon(1e-3));
  }
  SUBCASE("history nodes on a uniform log-SNR grid are -m") {
    const auto cs = unipc_coeffs(20, 4, s);
    for (int m = 1; m <= 3; ++m) CHECK(cs.w[m - 1] == doctest::Approx(-m).epsilon(1e-12));
    CHECK(cs.w[3] == 1.0);
  }
  SUBCASE("the solution satisfies Gamma (eta o) = b") {
    for (int p = 1; p <= kMaxOrder; ++p) {
      const auto cs = unipc_coeffs(30, p, s);
      CHECK((cs.gamma * (eta * cs.o) - cs.b).norm() <= 1e-12 * std::max(1.0, cs.b.norm()));
    }
  }
  SUBCASE("the predictor is the leading block of the corrector") {
    const auto pc = predictor_coeffs(30, 3, s);
    const auto cc = unipc_coeffs(30, 3, s);
    REQUIRE(pc.order == 2);
    CHECK(pc.w == cc.w.head(2));
    CHECK(pc.gamma == cc.gamma.topLeftCorner(2, 2));
    CHECK(pc.b == cc.b.head(2));
    CHECK(predictor_coeffs(30, 1, s).order == 0);
  }
  SUBCASE("uniform grid gives step-independent coefficients") {
    const auto a = unipc_coeffs(5, 3, s), b = unipc_coeffs(33, 3, s);
    CHECK((a.o - b.o).norm() <= 1e-10);
  }
  SUBCASE("coincident nodes are rejected") {
    CHECK_THROWS_AS(detail::solve_coeffs(VectorXd(VectorXd::Ones(2)), 0.3), NumericalError);
  }
  SUBCASE("insufficient history") {
    CHECK_NOTHROW(unipc_coeffs(1, 1, s));
    CHECK_THROWS_AS(unipc_coeffs(1, 2, s), std::invalid_argument);
    CHECK_THROWS_AS(unipc_coeffs(2, 3, s), std::invalid_argument);
    CHECK_NOTHROW(unipc_coeffs(3, 3, s));
    CHECK_THROWS_AS(unipc_coeffs(5, 0, s), std::invalid_argument);
  }
}

TEST_CASE("jcg") {
  const auto s = make_schedule<double>();
  const auto obs = make_obs(ChannelKind::Rayleigh, 4, 0.8, 0.1, 1);
  const GaussianScoreModel<double> model(GaussianPrior<double>::isotropic(8), s);
  Rng rng(2);
  const VectorXd x = standard_normal(rng, 8), z = standard_normal(rng, 8);
  const int t = 15;

  GuidanceContext<double> ctx{&obs, &s, 1.0, 1.0, 1.0};
  Rng r0(0);
  const auto none = jcg(x, z, ctx, model, model, t, GuidanceMethod::None, r0);
  CHECK(none.r_theta == model.predict_epsilon(x, t));
  CHECK(none.r_phi == model.predict_epsilon(z, t));
  CHECK(none.t == t);

  ctx.beta = 0;
  ctx.gamma = 0;
  const auto off = jcg(x, z, ctx, model, model, t, GuidanceMethod::Icdm, r0);
  CHECK(off.r_theta == none.r_theta);
  CHECK(off.r_phi == none.r_phi);

  ctx.beta = 1;
  ctx.gamma = 1;
  const auto one = jcg(x, z, ctx, model, model, t, GuidanceMethod::Icdm, r0);
  ctx.beta = 2.5;
  ctx.gamma = -0.5;
  const auto scaled = jcg(x, z, ctx, model, model, t, GuidanceMethod::Icdm, r0);
  CHECK((scaled.r_theta - none.r_theta).isApprox(2.5 * (one.r_theta - none.r_theta), 1e-12));
  CHECK((scaled.r_phi - none.r_phi).isApprox(-0.5 * (one.r_phi - none.r_phi), 1e-12));

  ctx.beta = ctx.gamma = 1;
  const auto g = icdm_guidance(x, z, ctx, t);
  CHECK(one.r_theta.isApprox(none.r_theta - g.x, 1e-14));

  const auto ge = exact_gaussian_guidance(x, z, ctx, t);
  const auto exact = jcg(x, z, ctx, model, model, t, GuidanceMethod::IcdmExact, r0);
  CHECK(exact.r_theta.isApprox(none.r_theta - s.sigma(t) * ge.x, 1e-12));

  auto zr = obs;
  zr.y = zeta(t, s, 1.0) * forward_operator(obs, x, z);
  const GuidanceContext<double> zctx{&zr, &s, 1.0, 1.0, 1.0};
  const auto at_rest = jcg(x, z, zctx, model, model, t, GuidanceMethod::Icdm, r0);
  CHECK((at_rest.r_theta - none.r_theta).norm() <= 1e-12);
}

TEST_CASE("pc_predict and pc_correct") {
  const auto s = make_schedule<double>();
  Rng rng(3);
  const VectorXd x = standard_normal(rng, 4), z = standard_normal(rng, 4);
  const VectorXd rt = standard_normal(rng, 4), rp = standard_normal(rng, 4);
  const int t = 12;

  SUBCASE("first-order predictor is the exponential-integrator step") {
    SamplerHistory<double> h(1);
    h.push(entry(x, z, rt, rp, t - 1));
    const auto [xp, zp] = pc_predict(h, t, s, predictor_coeffs(t, 1, s));
    const double k = std::sqrt(s.alpha(t) / s.alpha(t - 1)), c = s.sigma(t) * std::expm1(s.eta(t));
    CHECK(xp.isApprox(k * x - c * rt, 1e-14));
    CHECK(zp.isApprox(k * z - c * rp, 1e-14));
  }
  SUBCASE("equal gradients collapse higher orders to the first-order step") {
    SamplerHistory<double> h1(1), h3(3);
    h3.push(entry(VectorXd::Zero(4), VectorXd::Zero(4), rt, rp, t - 3));
    h3.push(entry(VectorXd::Zero(4), VectorXd::Zero(4), rt, rp, t - 2));
    h3.push(entry(x, z, rt, rp, t - 1));
    h1.push(entry(x, z, rt, rp, t - 1));
    const auto p1 = pc_predict(h1, t, s, predictor_coeffs(t, 1, s));
    const auto p3 = pc_predict(h3, t, s, predictor_coeffs(t, 3, s));
    CHECK(p3.first.isApprox(p1.first, 1e-14));
    CHECK(p3.second.isApprox(p1.second, 1e-14));

    // a model that keeps returning the history gradient adds nothing in the corrector
    const ConstantModel mx(rt), mz(rp);
    const GuidanceContext<double> ctx{nullptr, &s, 1.0, 1.0, 1.0};
    SamplerConfig<double> cfg;
    cfg.order = 3;
    cfg.method = GuidanceMethod::None;
    const auto c3 = pc_correct(h3, p3.first, p3.second, t, s, ctx, mx, mz, unipc_coeffs(t, 3, s), cfg, rng);
    CHECK(c3.first.isApprox(p1.first, 1e-14));
    CHECK(c3.second.isApprox(p1.second, 1e-14));
  }
  SUBCASE("history must end at t-1") {
    SamplerHistory<double> h(2);
    h.push(entry(x, z, rt, rp, t - 3));
    h.push(entry(x, z, rt, rp, t - 2));
    CHECK_THROWS_AS(pc_predict(h, t, s, predictor_coeffs(t, 1, s)), std::invalid_argument);
    SamplerHistory<double> short_h(2);
    short_h.push(entry(x, z, rt, rp, t - 1));
    CHECK_THROWS_AS(pc_predict(short_h, t, s, predictor_coeffs(t, 2, s)), std::invalid_argument);
  }
}

TEST_CASE("SamplerHistory") {
  SamplerHistory<double> h(2);
  CHECK(h.empty());
  const VectorXd v = VectorXd::Zero(2);
  for (int t = 0; t < 5; ++t) h.push(entry(v, v, v, v, t));
  CHECK(h.size() == 2);
  CHECK(h.back(0).grads.t == 4);
  CHECK(h.back(1).grads.t == 3);
  CHECK_THROWS_AS(h.back(2), std::out_of_range);
  CHECK_THROWS_AS(h.push(entry(v, v, v, v, 4)), std::invalid_argument);
  CHECK_THROWS_AS(SamplerHistory<double>(0), std::invalid_argument);
}

TEST_CASE("global error falls by 2^(p+1) per doubling of T") {
  for (int p : {1, 2}) {
    const double e20 = flow_error(p, 20, 2.0), e40 = flow_error(p, 40, 2.0), e80 = flow_error(p, 80, 2.0);
    const double expect = std::pow(2.0, p + 1);
    INFO("p=" << p << " e20=" << e20 << " e40=" << e40 << " e80=" << e80);
    CHECK(e20 / e40 > 0.7 * expect);
    CHECK(e20 / e40 < 1.4 * expect);
    CHECK(e40 / e80 > 0.75 * expect);
    CHECK(e40 / e80 < 1.3 * expect);
  }
  CHECK(flow_error(2, 40, 2.0) < flow_error(1, 40, 2.0));
}

TEST_CASE("conjpc_sample") {
  const auto s = make_schedule<double>();
  const GaussianScoreModel<double> model(GaussianPrior<double>::isotropic(8), s);

  SUBCASE("seeded runs are reproducible") {
    const auto obs = make_obs(ChannelKind::Rayleigh, 4, 0.8, 0.1, 4);
    for (auto m : {GuidanceMethod::Icdm, GuidanceMethod::Projection, GuidanceMethod::Dps}) {
      SamplerConfig<double> cfg;
      cfg.method = m;
      Rng a(7), b(7);
      const auto ra = icdm_sample(obs, s, model, model, cfg, a);
      const auto rb = icdm_sample(obs, s, model, model, cfg, b);
      CHECK(ra.x == rb.x);
      CHECK(ra.z == rb.z);
    }
  }
  SUBCASE("without interference power the x chain ignores z") {
    const auto obs = make_obs(ChannelKind::Rayleigh, 4, 0.0, 0.1, 5);
    Rng init(6);
    const VectorXd x0 = standard_normal(init, 8);
    const VectorXd za = standard_normal(init, 8), zb = standard_normal(init, 8);
    SamplerConfig<double> cfg;
    Rng a(1), b(1);
    const auto ra = conjpc_sample<double>(x0, za, &obs, s, model, model, cfg, a);
    const auto rb = conjpc_sample<double>(x0, zb, &obs, s, model, model, cfg, b);
    CHECK(ra.x == rb.x);
    CHECK(ra.z != rb.z);
  }
  SUBCASE("the observer sees every step") {
    SamplerConfig<double> cfg;
    cfg.method = GuidanceMethod::None;
    Rng rng(2);
    std::vector<int> seen;
    conjpc_sample<double>(VectorXd::Zero(8), VectorXd::Zero(8), nullptr, s, model, model, cfg, rng,
                          [&seen](int t, const VectorXd&, const VectorXd&) { seen.push_back(t); });
    REQUIRE(seen.size() == 40);
    CHECK(seen.front() == 1);
    CHECK(seen.back() == 40);
  }
  SUBCASE("unguided samples follow the prior") {
    const int n = 2000;
    const auto prior = GaussianPrior<double>::isotropic(4, 2.0, 0.5);
    const GaussianScoreModel<double> pm(prior, s);
    SamplerConfig<double> cfg;
    cfg.method = GuidanceMethod::None;
    Rng rng(11);
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const auto out = conjpc_sample<double>(standard_normal(rng, 4), standard_normal(rng, 4), nullptr, s, pm, pm, cfg, rng);
      sum += out.x.sum();
      sq += (out.x.array() - 0.5).square().sum();
    }
    const double mean = sum / (4 * n), var = sq / (4 * n);
    CHECK(std::abs(mean - 0.5) < 0.06);
    CHECK(std::abs(var - 2.0) < 0.2);
  }
  SUBCASE("a non-finite model raises DivergenceError") {
    const NanModel bad;
    SamplerConfig<double> cfg;
    cfg.method = GuidanceMethod::None;
    Rng rng(3);
    try {
      conjpc_sample<double>(VectorXd::Zero(8), VectorXd::Zero(8), nullptr, s, bad, bad, cfg, rng);
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.step == 0);
    }
  }
  SUBCASE("configuration checks") {
    SamplerConfig<double> cfg;
    cfg.order = 5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.order = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.order = 2;
    cfg.sigma_hat2 = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.sigma_hat2 = 1;
    cfg.t_max = 20;
    Rng rng(1);
    CHECK_THROWS_AS(conjpc_sample<double>(VectorXd::Zero(8), VectorXd::Zero(8), nullptr, s, model, model, cfg, rng),
                    std::invalid_argument);
    cfg.t_max = 40;
    CHECK_THROWS(conjpc_sample<double>(VectorXd::Zero(8), VectorXd::Zero(8), nullptr, s, model, model, cfg, rng));
  }
}

TEST_CASE("single-precision sampling") {
  const auto s = make_schedule<float>();
  const GaussianScoreModel<float> model(GaussianPrior<float>::isotropic(4), s);
  SamplerConfig<float> cfg;
  cfg.method = GuidanceMethod::None;
  Rng rng(4);
  const auto out = conjpc_sample<float>(standard_normal<float>(rng, 4), standard_normal<float>(rng, 4), nullptr, s,
                                        model, model, cfg, rng);
  CHECK(out.x.allFinite());
}

TEST_CASE("langevin_solve") {
  const auto obs = make_obs(ChannelKind::Awgn, 1, 0.5, 0.5, 8);
  const auto px = GaussianPrior<double>::isotropic(2), pz = GaussianPrior<double>::isotropic(2);
  const auto map = gaussian_map_solve(obs, px, pz);
  const auto score = gaussian_posterior_score(obs, px, pz);

  VectorXd v(4);
  v << map.x_hat, map.z_hat;
  CHECK(score(v).norm() <= 1e-10);

  Rng rng(9);
  const auto res = langevin_solve<double>(2, score, 40000, 1e-2, 30000, rng);
  CHECK((res.x_mean - map.x_hat).norm() < 0.1);
  CHECK((res.z_mean - map.z_hat).norm() < 0.1);

  CHECK_THROWS_AS(langevin_solve<double>(2, score, 10, 0.0, 5, rng), std::invalid_argument);
  CHECK_THROWS_AS(langevin_solve<double>(2, score, 0, 1e-2, 5, rng), std::invalid_argument);
  const PosteriorScore<double> blowup = [](const VectorXd& u) { return VectorXd(1e300 * u.array().sign().matrix()); };
  CHECK_THROWS_AS(langevin_solve<double>(2, blowup, 100, 1e10, 1, rng), DivergenceError);
}
