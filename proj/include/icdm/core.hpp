#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace icdm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ComplexVector = Vector<std::complex<Scalar>>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;
using ComplexVectorXd = ComplexVector<double>;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite state detected while integrating; `step` is the grid index.
struct DivergenceError : NumericalError {
  DivergenceError(const std::string& what, int step)
      : NumericalError(what + " (step " + std::to_string(step) + ")"), step(step) {}
  int step;
};

namespace detail {

inline void require_size(Index actual, Index expected, const char* what) {
  if (actual != expected) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
  }
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& v) {
  return v.allFinite();
}

}  // namespace detail
}  // namespace icdm
