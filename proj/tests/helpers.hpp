#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>

#include "rsmc/models.hpp"
#include "rsmc/random.hpp"

namespace testing {

using rsmc::Matrix;
using rsmc::Vector;

inline double sq(double x) { return x * x; }

inline Matrix random_spd(Eigen::Index d, std::uint64_t seed, double ridge = 0.5) {
  rsmc::CounterRng rng(seed);
  Matrix B(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) B(i, j) = rng.normal();
  return B * B.transpose() / static_cast<double>(d) + ridge * Matrix::Identity(d, d);
}

/// A stable random matrix with spectral radius below `radius`.
inline Matrix random_stable(Eigen::Index d, std::uint64_t seed, double radius = 0.9) {
  rsmc::CounterRng rng(seed);
  Matrix A(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = rng.normal();
  const double rho = A.eigenvalues().cwiseAbs().maxCoeff();
  return A * (radius / rho);
}

inline rsmc::ObservationMap identity_map(Eigen::Index d) {
  return rsmc::ObservationMap::linear(Matrix::Identity(d, d));
}

}  // namespace testing
