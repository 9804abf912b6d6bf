#pragma once

// Exact filtering and RTS smoothing for time-invariant linear-Gaussian models.

#include <cstddef>
#include <vector>

#include "rsmc/models.hpp"

namespace rsmc {

struct GaussianBelief {
  Vector mean;
  Matrix cov;
};

struct KalmanOutput {
  std::vector<GaussianBelief> filtered;   // p(x_t | y_{1:t}), t = 1..T
  std::vector<GaussianBelief> predicted;  // p(x_t | y_{1:t-1})
  std::vector<double> log_likelihoods;    // log p(y_t | y_{1:t-1}); 0 for missing rows

  std::size_t steps() const { return filtered.size(); }
};

/// Observation rows containing NaN are skipped (prediction only).
/// Throws NumericalError(step) when the innovation covariance is not PD.
KalmanOutput kalman_filter(const Matrix& A, const Matrix& Q, const Matrix& H, const Matrix& R,
                           const GaussianBelief& prior, const Matrix& ys);

/// Backward RTS pass over kalman_filter output.
std::vector<GaussianBelief> rts_smoother(const std::vector<GaussianBelief>& filtered,
                                         const std::vector<GaussianBelief>& predicted,
                                         const Matrix& A);

/// Stacks the means (T x d) and per-coordinate variances of a belief sequence.
Matrix belief_means(const std::vector<GaussianBelief>& beliefs);
Matrix belief_variances(const std::vector<GaussianBelief>& beliefs);

}  // namespace rsmc
