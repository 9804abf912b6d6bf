#include "rsmc/kalman.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

#include "rsmc/errors.hpp"

namespace rsmc {

KalmanOutput kalman_filter(const Matrix& A, const Matrix& Q, const Matrix& H, const Matrix& R,
                           const GaussianBelief& prior, const Matrix& ys) {
  const Eigen::Index d = A.rows();
  const Eigen::Index dy = H.rows();
  if (A.cols() != d || Q.rows() != d || Q.cols() != d || H.cols() != d || R.rows() != dy ||
      R.cols() != dy || prior.mean.size() != d || prior.cov.rows() != d || ys.cols() != dy) {
    throw ConfigError("inconsistent Kalman filter dimensions");
  }
  KalmanOutput out;
  const auto T = static_cast<std::size_t>(ys.rows());
  out.filtered.reserve(T);
  out.predicted.reserve(T);
  out.log_likelihoods.reserve(T);

  const Matrix I = Matrix::Identity(d, d);
  Vector m = prior.mean;
  Matrix P = symmetrise(prior.cov);
  for (std::size_t t = 0; t < T; ++t) {
    m = A * m;
    P = symmetrise(A * P * A.transpose() + Q);
    out.predicted.push_back({m, P});

    const Vector y = ys.row(static_cast<Eigen::Index>(t)).transpose();
    if (!y.allFinite()) {
      out.filtered.push_back({m, P});
      out.log_likelihoods.push_back(0.0);
      continue;
    }
    const Vector innovation = y - H * m;
    const Matrix S = symmetrise(H * P * H.transpose() + R);
    const Eigen::LLT<Matrix> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("innovation covariance is not positive definite", t + 1);
    }
    // K = P H^T S^{-1}
    const Matrix K = llt.solve(H * P).transpose();
    m += K * innovation;
    const Matrix IKH = I - K * H;
    P = symmetrise(IKH * P * IKH.transpose() + K * R * K.transpose());
    out.filtered.push_back({m, P});

    const Matrix L = llt.matrixL();
    const Vector z = L.triangularView<Eigen::Lower>().solve(innovation);
    const double log_det = 2.0 * L.diagonal().array().log().sum();
    out.log_likelihoods.push_back(
        -0.5 * (static_cast<double>(dy) * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm()));
  }
  return out;
}

std::vector<GaussianBelief> rts_smoother(const std::vector<GaussianBelief>& filtered,
                                         const std::vector<GaussianBelief>& predicted,
                                         const Matrix& A) {
  if (filtered.size() != predicted.size()) throw ConfigError("filtered/predicted length mismatch");
  std::vector<GaussianBelief> smoothed(filtered);
  if (filtered.empty()) return smoothed;
  for (std::size_t t = filtered.size() - 1; t-- > 0;) {
    const GaussianBelief& f = filtered[t];
    const GaussianBelief& p = predicted[t + 1];
    const Eigen::LLT<Matrix> llt(p.cov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("predicted covariance is not positive definite", t + 2);
    }
    // G = P_t A^T P_{t+1|t}^{-1}
    const Matrix G = llt.solve(A * f.cov).transpose();
    smoothed[t].mean = f.mean + G * (smoothed[t + 1].mean - p.mean);
    smoothed[t].cov = symmetrise(f.cov + G * (smoothed[t + 1].cov - p.cov) * G.transpose());
  }
  return smoothed;
}

Matrix belief_means(const std::vector<GaussianBelief>& beliefs) {
  if (beliefs.empty()) return {};
  Matrix out(static_cast<Eigen::Index>(beliefs.size()), beliefs.front().mean.size());
  for (std::size_t t = 0; t < beliefs.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = beliefs[t].mean.transpose();
  }
  return out;
}

Matrix belief_variances(const std::vector<GaussianBelief>& beliefs) {
  if (beliefs.empty()) return {};
  Matrix out(static_cast<Eigen::Index>(beliefs.size()), beliefs.front().mean.size());
  for (std::size_t t = 0; t < beliefs.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = beliefs[t].cov.diagonal().transpose();
  }
  return out;
}

}  // namespace rsmc
