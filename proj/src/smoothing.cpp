#include "rsmc/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsmc/errors.hpp"
#include "rsmc/kernels.hpp"

namespace rsmc {

Matrix SmoothedTrajectories::means() const {
  if (states.empty()) return {};
  Matrix out(static_cast<Eigen::Index>(states.size()), states.front().rows());
  for (std::size_t t = 0; t < states.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = states[t].rowwise().mean().transpose();
  }
  return out;
}

Matrix SmoothedTrajectories::quantiles(double q) const {
  if (states.empty()) return {};
  Matrix out(static_cast<Eigen::Index>(states.size()), states.front().rows());
  std::vector<double> values(trajectories());
  for (std::size_t t = 0; t < states.size(); ++t) {
    for (Eigen::Index j = 0; j < states[t].rows(); ++j) {
      for (Eigen::Index m = 0; m < states[t].cols(); ++m) values[static_cast<std::size_t>(m)] = states[t](j, m);
      out(static_cast<Eigen::Index>(t), j) = sample_quantile(values, q);
    }
  }
  return out;
}

SmoothedTrajectories ffbs(const FilterOutput& forward, const LinearGaussianTransition& transition,
                          std::size_t trajectories, std::uint64_t seed) {
  const auto& ens = forward.ensembles;
  if (ens.empty()) throw ConfigError("FFBS needs stored forward ensembles");
  if (trajectories == 0) throw ConfigError("FFBS needs at least one trajectory");
  if (!transition.invertible_noise()) {
    throw NumericalError("FFBS needs a non-singular transition covariance");
  }
  const std::size_t T = ens.size();
  const Eigen::Index d = ens.front().states.rows();
  const Eigen::Index n = ens.front().states.cols();
  const auto M = static_cast<Eigen::Index>(trajectories);

  SmoothedTrajectories out;
  out.particles = static_cast<std::size_t>(n);
  out.states.assign(T, Matrix(d, M));

  // Whitened predicted means L^{-1} A x_t^(i) and the whitening factor itself.
  const Matrix L = transition.sqrt_Q();
  const Matrix Linv = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  std::vector<Matrix> whitened(T);
  for (std::size_t t = 0; t + 1 < T; ++t) whitened[t] = Linv * (transition.A() * ens[t].states);

  const std::vector<double> final_cdf = kernels::cumulative_weights(ens.back().weights);
  const std::uint64_t key = derive_seed(seed, StreamPurpose::Backward);

  bool failed = false;
  std::size_t failed_step = 0;
  std::size_t evaluations = 0;
#pragma omp parallel for schedule(static) reduction(+ : evaluations)
  for (Eigen::Index m = 0; m < M; ++m) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(m)));
    std::vector<double> logb(static_cast<std::size_t>(n));
    std::vector<double> cdf(static_cast<std::size_t>(n));
    std::size_t idx = kernels::categorical_index(final_cdf, rng.uniform());
    out.states[T - 1].col(m) = ens[T - 1].states.col(static_cast<Eigen::Index>(idx));
    for (std::size_t t = T - 1; t-- > 0;) {
      const Vector target = Linv * out.states[t + 1].col(m);
      const Matrix& mu = whitened[t];
      const auto& lw = ens[t].log_weights;
      double hi = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) {
        double q = 0.0;
        for (Eigen::Index r = 0; r < d; ++r) {
          const double e = target[r] - mu(r, i);
          q += e * e;
        }
        const double v = lw[static_cast<std::size_t>(i)] - 0.5 * q;
        logb[static_cast<std::size_t>(i)] = v;
        hi = std::max(hi, v);
      }
      evaluations += static_cast<std::size_t>(n);
      if (!std::isfinite(hi)) {
#pragma omp critical(rsmc_ffbs_failure)
        {
          failed = true;
          failed_step = std::max(failed_step, t + 1);
        }
        break;
      }
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += std::exp(logb[static_cast<std::size_t>(i)] - hi);
        cdf[static_cast<std::size_t>(i)] = acc;
      }
      const double u = rng.uniform() * acc;
      idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
      idx = std::min(idx, static_cast<std::size_t>(n - 1));
      out.states[t].col(m) = ens[t].states.col(static_cast<Eigen::Index>(idx));
    }
  }
  if (failed) throw DegenerateBackwardKernel(failed_step);
  out.kernel_evaluations = evaluations;
  return out;
}

}  // namespace rsmc
