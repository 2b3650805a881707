#pragma once

#include <cstdint>
#include <random>

#include "icdm/core.hpp"

namespace icdm {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Used to derive independent per-trial seeds from a
/// master seed: seed_i = splitmix64(master + (i + 1) * 0x9E3779B97F4A7C15).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

template <typename Scalar = double>
Vector<Scalar> standard_normal(Rng& rng, Index n) {
  std::normal_distribution<Scalar> dist;
  Vector<Scalar> out(n);
  for (Index i = 0; i < n; ++i) out[i] = dist(rng);
  return out;
}

/// Circularly-symmetric CN(0, variance): two independent N(0, variance/2) draws
/// per entry, real part first.
template <typename Scalar = double>
ComplexVector<Scalar> complex_normal(Rng& rng, Index n, Scalar variance = Scalar(1)) {
  std::normal_distribution<Scalar> dist(Scalar(0), std::sqrt(variance / Scalar(2)));
  ComplexVector<Scalar> out(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar re = dist(rng);
    const Scalar im = dist(rng);
    out[i] = {re, im};
  }
  return out;
}

}  // namespace icdm
