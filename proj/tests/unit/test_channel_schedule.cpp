#include <doctest.h>

#include <cmath>

#include "icdm/channel.hpp"
#include "icdm/schedule.hpp"

using namespace icdm;

namespace {

EqualizedObservation<double> simulate(ChannelKind kind, Index k, double p_x, double p_z, double sigma2, Rng& rng,
                                      VectorXd* x_out = nullptr, VectorXd* z_out = nullptr) {
  const VectorXd x = standard_normal(rng, 2 * k);
  const ComplexVectorXd zc = complex_normal(rng, k);
  const auto ch = sample_channel(kind, k, rng);
  auto obs = transmit_and_equalize<double>(real_to_complex(x), zc, ch, {p_x, p_z, sigma2, k}, rng);
  if (x_out) *x_out = x;
  if (z_out) *z_out = effective_interference<double>(ch.h_z, zc);
  return obs;
}

}  // namespace

TEST_CASE("real/complex packing") {
  VectorXd v(4);
  v << 1, 2, 3, 4;
  const auto c = real_to_complex(v);
  REQUIRE(c.size() == 2);
  CHECK(c[0] == std::complex<double>(1, 3));
  CHECK(c[1] == std::complex<double>(2, 4));

  Rng rng(3);
  const VectorXd r = standard_normal(rng, 10);
  CHECK(complex_to_real(real_to_complex(r)) == r);
  CHECK(real_to_complex<double>(VectorXd::Zero(6)).isZero(0));
  CHECK_THROWS_AS(real_to_complex<double>(VectorXd::Zero(3)), DimensionError);
}

TEST_CASE("sample_channel") {
  Rng rng(11);
  const auto awgn = sample_channel(ChannelKind::Awgn, 3, rng);
  CHECK(awgn.h_x == ComplexVectorXd::Ones(3));
  CHECK(awgn.h_z == ComplexVectorXd::Ones(3));

  const auto ray = sample_channel(ChannelKind::Rayleigh, 100000, rng);
  CHECK(ray.h_x.cwiseAbs2().mean() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(ray.h_z.cwiseAbs2().mean() == doctest::Approx(1.0).epsilon(0.02));

  Rng a(5), b(5);
  const auto ra = sample_channel(ChannelKind::Rayleigh, 16, a);
  const auto rb = sample_channel(ChannelKind::Rayleigh, 16, b);
  CHECK(ra.h_x == rb.h_x);
  CHECK(ra.h_z == rb.h_z);
  CHECK_THROWS_AS(sample_channel(ChannelKind::Awgn, 0, rng), DimensionError);
}

TEST_CASE("effective matrices") {
  SUBCASE("awgn is identity") {
    const auto m = build_effective_matrices<double>(ComplexVectorXd::Ones(4), 0.3, ChannelKind::Awgn);
    const MatrixXd eye = MatrixXd::Identity(8, 8);
    CHECK(m.dense(Operator::S) == eye);
    CHECK(m.dense(Operator::Z) == eye);
    CHECK(m.dense(Operator::N) == eye);
  }
  SUBCASE("unit gain, unit noise") {
    ComplexVectorXd h(1);
    h << 1.0;
    const auto m = build_effective_matrices<double>(h, 1.0, ChannelKind::Rayleigh);
    CHECK(m.w_s.isApprox(VectorXd::Constant(2, 0.5)));
    CHECK(m.w_n.isApprox(VectorXd::Constant(2, 0.5)));
    CHECK(m.z_tl[0] == doctest::Approx(0.5));
    CHECK(m.z_br[0] == doctest::Approx(0.5));
    CHECK(m.z_tr[0] == 0.0);
    CHECK(m.z_bl[0] == 0.0);
  }
  SUBCASE("vanishing noise") {
    Rng rng(2);
    const auto ch = sample_channel(ChannelKind::Rayleigh, 5, rng);
    const auto m = build_effective_matrices<double>(ch.h_x, 1e-14, ChannelKind::Rayleigh);
    CHECK(m.w_s.isApprox(VectorXd::Ones(10), 1e-10));
    const VectorXd inv_mag = ch.h_x.cwiseAbs().cwiseInverse();
    CHECK(m.w_n.head(5).isApprox(inv_mag, 1e-10));
  }
  SUBCASE("positive diagonals, signal gain in (0, 1]") {
    Rng rng(9);
    for (int rep = 0; rep < 50; ++rep) {
      const auto ch = sample_channel(ChannelKind::Rayleigh, 8, rng);
      const auto m = build_effective_matrices<double>(ch.h_x, 0.05, ChannelKind::Rayleigh);
      CHECK((m.w_s.array() > 0).all());
      CHECK((m.w_s.array() <= 1).all());
      CHECK((m.w_n.array() > 0).all());
      const VectorXd mag2 = ch.h_x.cwiseAbs2();
      CHECK(m.w_s.head(8).isApprox((mag2.array() / (mag2.array() + 0.05)).matrix()));
    }
  }
  CHECK_THROWS(build_effective_matrices<double>(ComplexVectorXd::Ones(2), 0.0, ChannelKind::Rayleigh));
}

TEST_CASE("apply_w against dense assembly") {
  Rng rng(21);
  const auto ch = sample_channel(ChannelKind::Rayleigh, 3, rng);
  const auto m = build_effective_matrices<double>(ch.h_x, 0.2, ChannelKind::Rayleigh);
  for (int rep = 0; rep < 20; ++rep) {
    const VectorXd v = standard_normal(rng, 6);
    for (auto op : {Operator::S, Operator::Z, Operator::N, Operator::ZT}) {
      CHECK((apply_w(m, op, v) - m.dense(op) * v).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
    const VectorXd composed = apply_w(m, Operator::Z, apply_w(m, Operator::ZT, v));
    CHECK((composed - m.dense(Operator::Z) * m.dense(Operator::ZT) * v).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  CHECK(m.wz_gram_diagonal().isApprox((m.dense(Operator::Z) * m.dense(Operator::ZT)).diagonal()));
  const MatrixXd gram = m.dense(Operator::Z) * m.dense(Operator::ZT);
  CHECK((gram - MatrixXd(gram.diagonal().asDiagonal())).norm() <= 1e-14);

  const auto awgn = build_effective_matrices<double>(ComplexVectorXd::Ones(3), 0.2, ChannelKind::Awgn);
  const VectorXd v = standard_normal(rng, 6);
  CHECK(apply_w(awgn, Operator::S, v) == v);
  CHECK(apply_w(m, Operator::N, VectorXd::Zero(6)).isZero(0));
  CHECK_THROWS_AS(apply_w(m, Operator::S, VectorXd::Zero(5)), DimensionError);
}

TEST_CASE("transmit_and_equalize") {
  Rng rng(31);
  SUBCASE("reconstruction identity") {
    for (int rep = 0; rep < 20; ++rep) {
      VectorXd x, z;
      const auto obs = simulate(ChannelKind::Rayleigh, 64, 1.0, 0.99, 0.01, rng, &x, &z);
      const VectorXd resid = obs.y - forward_operator(obs, x, z) - obs.eq_noise;
      CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
  SUBCASE("noiseless interference-free awgn") {
    VectorXd x;
    const auto obs = simulate(ChannelKind::Awgn, 8, 2.0, 0.0, 1e-20, rng, &x);
    CHECK((obs.y - std::sqrt(2.0) * x).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
  SUBCASE("unit gain, unit noise: halved deterministic part") {
    ChannelRealization<double> ch{ComplexVectorXd::Ones(1), ComplexVectorXd::Ones(1), ChannelKind::Rayleigh};
    ComplexVectorXd xc(1), zc(1);
    xc << std::complex<double>(0.7, -0.2);
    zc << std::complex<double>(-1.1, 0.4);
    const auto obs = transmit_and_equalize<double>(xc, zc, ch, {4.0, 9.0, 1.0, 1}, rng);
    const VectorXd det = obs.y - obs.eq_noise;
    const VectorXd expect = (2.0 / 2) * complex_to_real(xc) + (3.0 / 2) * complex_to_real(zc);
    CHECK((det - expect).lpNorm<Eigen::Infinity>() <= 1e-14);
  }
  SUBCASE("equalized noise statistics") {
    const Index k = 4;
    const auto ch = sample_channel(ChannelKind::Rayleigh, k, rng);
    const ChannelParams<double> p{1.0, 0.5, 0.1, k};
    VectorXd sum_sq = VectorXd::Zero(2 * k);
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const auto obs = transmit_and_equalize<double>(ComplexVectorXd::Zero(k), ComplexVectorXd::Zero(k), ch, p, rng);
      sum_sq += obs.eq_noise.cwiseAbs2();
    }
    const auto m = build_effective_matrices<double>(ch.h_x, p.sigma2, ChannelKind::Rayleigh);
    const VectorXd expect = (p.sigma2 / 2) * m.w_n.cwiseAbs2();
    const VectorXd got = sum_sq / n;
    for (Index i = 0; i < 2 * k; ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(0.05));
  }
  SUBCASE("errors") {
    const auto ch = sample_channel(ChannelKind::Awgn, 2, rng);
    CHECK_THROWS_AS(transmit_and_equalize<double>(ComplexVectorXd::Zero(3), ComplexVectorXd::Zero(2), ch,
                                                  {1.0, 0.0, 0.1, 2}, rng),
                    DimensionError);
    CHECK_THROWS(transmit_and_equalize<double>(ComplexVectorXd::Zero(2), ComplexVectorXd::Zero(2), ch,
                                               {1.0, 0.0, 0.0, 2}, rng));
  }
}

TEST_CASE("single-precision channel") {
  Rng rng(4);
  const auto ch = sample_channel<float>(ChannelKind::Rayleigh, 16, rng);
  const Vector<float> x = standard_normal<float>(rng, 32);
  const ComplexVector<float> zc = complex_normal<float>(rng, 16);
  const auto obs = transmit_and_equalize<float>(real_to_complex(x), zc, ch, {1.0f, 0.5f, 0.01f, 16}, rng);
  const Vector<float> resid =
      obs.y - forward_operator(obs, x, effective_interference<float>(ch.h_z, zc)) - obs.eq_noise;
  CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-5f);
}

TEST_CASE("noise schedule") {
  const auto s = make_schedule<double>();
  CHECK(s.size() == 41);
  CHECK(s.alphas().size() == 41);
  CHECK(s.alpha(0) <= 1e-3);
  CHECK(s.alpha(40) >= 1 - 1e-3);
  for (int t = 1; t <= 40; ++t) {
    CHECK(s.alpha(t) > s.alpha(t - 1));
    CHECK(s.eta(t) == doctest::Approx(12.0 / 40).epsilon(1e-12));
  }
  for (int t = 0; t <= 40; ++t) {
    CHECK(std::abs(s.alpha(t) - 1 / (1 + std::exp(-2 * s.rho(t)))) <= 1e-12);
    CHECK(std::abs(s.rho(t) - 0.5 * std::log(s.alpha(t) / (1 - s.alpha(t)))) <= 1e-9);
  }
  CHECK(s.rho(20) == doctest::Approx(0.0));
  CHECK(s.alpha(20) == doctest::Approx(0.5));
  CHECK_THROWS_AS(s.alpha(41), RangeError);
  CHECK_THROWS_AS(s.eta(0), RangeError);
  CHECK_THROWS(make_schedule<double>(0));
  CHECK_THROWS(make_schedule<double>(10, 1.0, 1.0));
}

TEST_CASE("forward_diffuse") {
  Rng rng(8);
  const auto wide = make_schedule<double>(10, -20.0, 20.0);
  const VectorXd clean = standard_normal(rng, 6);
  const VectorXd eps = standard_normal(rng, 6);
  CHECK(forward_diffuse(clean, 10, eps, wide).isApprox(clean, 1e-12));
  CHECK(forward_diffuse(clean, 0, eps, wide).isApprox(eps, 1e-8));
  CHECK_THROWS_AS(forward_diffuse(clean, 11, eps, wide), RangeError);

  const auto s = make_schedule<double>();
  const double c = 3.0;
  for (int t : {5, 20, 33}) {
    const int n = 100000;
    const VectorXd x0 = std::sqrt(c) * standard_normal(rng, n);
    const VectorXd out = forward_diffuse(x0, t, standard_normal(rng, n), s);
    const double var = out.squaredNorm() / n - std::pow(out.mean(), 2);
    CHECK(var == doctest::Approx(s.alpha(t) * c + 1 - s.alpha(t)).epsilon(0.03));
  }
}

TEST_CASE("epsilon/score conversion") {
  Rng rng(12);
  const auto s = make_schedule<double>();
  CHECK(epsilon_to_score(VectorXd::Zero(4), 7, s).isZero(0));
  const VectorXd x = standard_normal(rng, 4);
  for (int t = 0; t < 40; ++t) {
    const VectorXd eps_opt = std::sqrt(1 - s.alpha(t)) * x;
    CHECK(epsilon_to_score(eps_opt, t, s).isApprox(-x, 1e-12));
    const VectorXd u = standard_normal(rng, 4), v = standard_normal(rng, 4);
    CHECK(epsilon_to_score(VectorXd(2 * u - 3 * v), t, s)
              .isApprox(2 * epsilon_to_score(u, t, s) - 3 * epsilon_to_score(v, t, s), 1e-12));
    CHECK(epsilon_to_score(score_to_epsilon(u, t, s), t, s).isApprox(u, 1e-12));
  }
  const auto saturated = make_schedule<double>(4, -6.0, 20.0);
  REQUIRE(saturated.alpha(4) == 1.0);
  CHECK_THROWS_AS(epsilon_to_score(VectorXd::Ones(2), 4, saturated), RangeError);
}
