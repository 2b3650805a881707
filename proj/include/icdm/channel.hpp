#pragma once

// Complex baseband channel with additive interference, per-symbol MMSE
// equalization, and the real-valued effective model
//
//   y = sqrt(P_x) W_s x + sqrt(P_z) W_z z + eq_noise,
//
// where x, z, y are real 2k-vectors packing [real parts; imaginary parts] and
// the effective interference z absorbs the unknown interferer gains h_z.
// All matrices are diagonal (W_s, W_n) or 2x2 block-of-diagonals (W_z) and are
// stored as diagonals; `dense()` assembles them for oracle tests only.

#include <cmath>
#include <string>
#include <string_view>

#include "icdm/core.hpp"
#include "icdm/rng.hpp"

namespace icdm {

enum class ChannelKind { Awgn, Rayleigh };

inline std::string_view to_string(ChannelKind kind) {
  return kind == ChannelKind::Awgn ? "awgn" : "rayleigh";
}

inline ChannelKind parse_channel_kind(std::string_view s) {
  if (s == "awgn") return ChannelKind::Awgn;
  if (s == "rayleigh") return ChannelKind::Rayleigh;
  throw std::invalid_argument("unknown channel kind '" + std::string(s) + "'");
}

template <typename Scalar>
struct ChannelParams {
  Scalar p_x = 1;
  Scalar p_z = 0;
  Scalar sigma2 = Scalar(0.01);
  Index k = 1;

  void validate() const {
    if (!(p_x > 0)) throw std::invalid_argument("channel: p_x must be positive");
    if (!(p_z >= 0)) throw std::invalid_argument("channel: p_z must be non-negative");
    if (!(sigma2 > 0)) throw std::invalid_argument("channel: sigma2 must be positive");
    if (k < 1) throw DimensionError("channel: k must be at least 1");
  }
};

template <typename Scalar>
struct ChannelRealization {
  ComplexVector<Scalar> h_x;
  ComplexVector<Scalar> h_z;
  ChannelKind kind = ChannelKind::Awgn;

  Index k() const { return h_x.size(); }
};

/// Selects one of the effective matrices in `apply_w`.
enum class Operator { S, Z, N, ZT };

template <typename Scalar>
struct EffectiveMatrices {
  Vector<Scalar> w_s;  // 2k diagonal
  Vector<Scalar> w_n;  // 2k diagonal
  // W_z = [[z_tl, z_tr], [z_bl, z_br]], each block diagonal of length k.
  Vector<Scalar> z_tl, z_tr, z_bl, z_br;
  ChannelKind kind = ChannelKind::Awgn;

  Index k() const { return z_tl.size(); }
  Index dim() const { return w_s.size(); }

  /// Diagonal of W_z W_z^T (the blocks are orthogonal-times-scalar per symbol).
  Vector<Scalar> wz_gram_diagonal() const {
    Vector<Scalar> g(dim());
    const Index n = k();
    g.head(n) = z_tl.array().square() + z_tr.array().square();
    g.tail(n) = z_bl.array().square() + z_br.array().square();
    return g;
  }

  Matrix<Scalar> dense(Operator which) const {
    const Index n = k();
    Matrix<Scalar> m = Matrix<Scalar>::Zero(2 * n, 2 * n);
    switch (which) {
      case Operator::S:
        m.diagonal() = w_s;
        break;
      case Operator::N:
        m.diagonal() = w_n;
        break;
      case Operator::Z:
      case Operator::ZT:
        m.topLeftCorner(n, n).diagonal() = z_tl;
        m.topRightCorner(n, n).diagonal() = z_tr;
        m.bottomLeftCorner(n, n).diagonal() = z_bl;
        m.bottomRightCorner(n, n).diagonal() = z_br;
        if (which == Operator::ZT) m.transposeInPlace();
        break;
    }
    return m;
  }
};

template <typename Scalar>
struct EqualizedObservation {
  Vector<Scalar> y;
  EffectiveMatrices<Scalar> mats;
  ChannelParams<Scalar> params;
  Vector<Scalar> eq_noise;

  Index k() const { return params.k; }
};

/// Element i of the output is x[i] + j x[i+k].
template <typename Scalar>
ComplexVector<Scalar> real_to_complex(const Vector<Scalar>& x) {
  if (x.size() % 2 != 0) {
    throw DimensionError("real_to_complex: length " + std::to_string(x.size()) + " is odd");
  }
  const Index k = x.size() / 2;
  ComplexVector<Scalar> out(k);
  for (Index i = 0; i < k; ++i) out[i] = {x[i], x[i + k]};
  return out;
}

template <typename Scalar>
Vector<Scalar> complex_to_real(const ComplexVector<Scalar>& c) {
  const Index k = c.size();
  Vector<Scalar> out(2 * k);
  out.head(k) = c.real();
  out.tail(k) = c.imag();
  return out;
}

template <typename Scalar = double>
ChannelRealization<Scalar> sample_channel(ChannelKind kind, Index k, Rng& rng) {
  if (k < 1) throw DimensionError("sample_channel: k must be at least 1");
  ChannelRealization<Scalar> r;
  r.kind = kind;
  if (kind == ChannelKind::Awgn) {
    r.h_x = ComplexVector<Scalar>::Ones(k);
    r.h_z = ComplexVector<Scalar>::Ones(k);
  } else {
    r.h_x = complex_normal<Scalar>(rng, k);
    r.h_z = complex_normal<Scalar>(rng, k);
  }
  return r;
}

template <typename Scalar>
EffectiveMatrices<Scalar> build_effective_matrices(const ComplexVector<Scalar>& h_x, Scalar sigma2,
                                                   ChannelKind kind) {
  if (!(sigma2 > 0)) throw std::invalid_argument("build_effective_matrices: sigma2 must be positive");
  const Index k = h_x.size();
  if (k < 1) throw DimensionError("build_effective_matrices: empty gain vector");

  EffectiveMatrices<Scalar> m;
  m.kind = kind;
  if (kind == ChannelKind::Awgn) {
    m.w_s = Vector<Scalar>::Ones(2 * k);
    m.w_n = Vector<Scalar>::Ones(2 * k);
    m.z_tl = m.z_br = Vector<Scalar>::Ones(k);
    m.z_tr = m.z_bl = Vector<Scalar>::Zero(k);
    return m;
  }

  const Vector<Scalar> mag2 = h_x.cwiseAbs2();
  const Vector<Scalar> denom = (mag2.array() + sigma2).matrix();
  const Vector<Scalar> ws = mag2.cwiseQuotient(denom);
  const Vector<Scalar> wn = mag2.cwiseSqrt().cwiseQuotient(denom);

  m.w_s.resize(2 * k);
  m.w_s << ws, ws;
  m.w_n.resize(2 * k);
  m.w_n << wn, wn;
  m.z_tl = h_x.real().cwiseQuotient(denom);
  m.z_tr = h_x.imag().cwiseQuotient(denom);
  m.z_bl = -m.z_tr;
  m.z_br = m.z_tl;
  return m;
}

/// Structured product with W_s, W_z, W_n or W_z^T in O(k).
template <typename Scalar, typename Derived>
Vector<Scalar> apply_w(const EffectiveMatrices<Scalar>& m, Operator which,
                       const Eigen::MatrixBase<Derived>& v) {
  detail::require_size(v.size(), m.dim(), "apply_w");
  const Index k = m.k();
  Vector<Scalar> out(2 * k);
  switch (which) {
    case Operator::S:
      out = m.w_s.cwiseProduct(v);
      break;
    case Operator::N:
      out = m.w_n.cwiseProduct(v);
      break;
    case Operator::Z:
      out.head(k) = m.z_tl.cwiseProduct(v.head(k)) + m.z_tr.cwiseProduct(v.tail(k));
      out.tail(k) = m.z_bl.cwiseProduct(v.head(k)) + m.z_br.cwiseProduct(v.tail(k));
      break;
    case Operator::ZT:
      out.head(k) = m.z_tl.cwiseProduct(v.head(k)) + m.z_bl.cwiseProduct(v.tail(k));
      out.tail(k) = m.z_tr.cwiseProduct(v.head(k)) + m.z_br.cwiseProduct(v.tail(k));
      break;
  }
  return out;
}

/// Real-packed h_z ∘ z_c: the interference as it enters the effective model.
template <typename Scalar>
Vector<Scalar> effective_interference(const ComplexVector<Scalar>& h_z,
                                      const ComplexVector<Scalar>& z_c) {
  detail::require_size(z_c.size(), h_z.size(), "effective_interference");
  return complex_to_real<Scalar>(h_z.cwiseProduct(z_c));
}

/// sqrt(P_x) W_s x + sqrt(P_z) W_z z.
template <typename Scalar, typename DX, typename DZ>
Vector<Scalar> forward_operator(const EqualizedObservation<Scalar>& obs,
                                const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DZ>& z) {
  using std::sqrt;
  return sqrt(obs.params.p_x) * apply_w(obs.mats, Operator::S, x) +
         sqrt(obs.params.p_z) * apply_w(obs.mats, Operator::Z, z);
}

template <typename Scalar>
ComplexVector<Scalar> mmse_weights(const ChannelRealization<Scalar>& real, Scalar sigma2) {
  if (real.kind == ChannelKind::Awgn) return ComplexVector<Scalar>::Ones(real.k());
  const Vector<Scalar> denom = (real.h_x.cwiseAbs2().array() + sigma2).matrix();
  return real.h_x.conjugate().cwiseQuotient(denom.template cast<std::complex<Scalar>>());
}

template <typename Scalar>
EqualizedObservation<Scalar> transmit_and_equalize(const ComplexVector<Scalar>& x_c,
                                                   const ComplexVector<Scalar>& z_c,
                                                   const ChannelRealization<Scalar>& real,
                                                   const ChannelParams<Scalar>& params, Rng& rng) {
  params.validate();
  const Index k = params.k;
  detail::require_size(x_c.size(), k, "transmit_and_equalize: x_c");
  detail::require_size(z_c.size(), k, "transmit_and_equalize: z_c");
  detail::require_size(real.h_x.size(), k, "transmit_and_equalize: h_x");
  detail::require_size(real.h_z.size(), k, "transmit_and_equalize: h_z");

  using std::sqrt;
  const ComplexVector<Scalar> noise = complex_normal<Scalar>(rng, k, params.sigma2);
  const ComplexVector<Scalar> received = sqrt(params.p_x) * real.h_x.cwiseProduct(x_c) +
                                         sqrt(params.p_z) * real.h_z.cwiseProduct(z_c) + noise;
  const ComplexVector<Scalar> eq = mmse_weights(real, params.sigma2);

  EqualizedObservation<Scalar> obs;
  obs.params = params;
  obs.mats = build_effective_matrices<Scalar>(real.h_x, params.sigma2, real.kind);
  obs.y = complex_to_real<Scalar>(eq.cwiseProduct(received));
  obs.eq_noise = complex_to_real<Scalar>(eq.cwiseProduct(noise));
  return obs;
}

}  // namespace icdm
