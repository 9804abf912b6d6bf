#include "rsmc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rsmc::kernels {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::Index chunk_count(Eigen::Index n) { return (n + kChunk - 1) / kChunk; }

void fill_normals(std::uint64_t key, Eigen::Index first, Eigen::Index count, Matrix& z) {
  for (Eigen::Index j = 0; j < count; ++j) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(first + j)));
    for (Eigen::Index r = 0; r < z.rows(); ++r) z(r, j) = rng.normal();
  }
}

bool observed(const Vector& y) { return y.allFinite(); }

}  // namespace

std::vector<double> cumulative_weights(std::span<const double> weights) {
  std::vector<double> cdf(weights.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cdf[i] = acc;
  }
  if (!cdf.empty()) {
    // Trailing zero-weight entries must stay unreachable.
    std::size_t last = cdf.size() - 1;
    while (last > 0 && weights[last] == 0.0) --last;
    for (std::size_t i = last; i < cdf.size(); ++i) cdf[i] = 1.0;
  }
  return cdf;
}

std::size_t categorical_index(std::span<const double> cdf, double u) {
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

// ---------------------------------------------------------------------------

namespace reference {

void propagate(const LinearGaussianTransition& transition, const Matrix& prev,
               std::span<const std::size_t> ancestors, std::uint64_t key, Matrix& out) {
  const Eigen::Index n = ancestors.empty() ? prev.cols() : static_cast<Eigen::Index>(ancestors.size());
  const Eigen::Index d = prev.rows();
  out.resize(d, n);
  Vector z(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(i)));
    for (Eigen::Index r = 0; r < d; ++r) z[r] = rng.normal();
    const Eigen::Index src = ancestors.empty() ? i : static_cast<Eigen::Index>(ancestors[i]);
    out.col(i) = transition.A() * prev.col(src) + transition.sqrt_Q() * z;
  }
}

void log_potentials(const GeneralisedLikelihood& gl, const Matrix& states, const Vector& y,
                    std::span<double> out) {
  if (!observed(y)) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    out[static_cast<std::size_t>(i)] = gl.log_potential(states.col(i), y);
  }
}

Normalised normalise(std::span<const double> log_weights) {
  Normalised res;
  res.weights.assign(log_weights.size(), 0.0);
  double hi = kNegInf;
  for (double v : log_weights) {
    if (!std::isnan(v)) hi = std::max(hi, v);
  }
  if (!std::isfinite(hi)) {
    res.ok = false;
    return res;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    const double v = log_weights[i];
    res.weights[i] = std::isnan(v) ? 0.0 : std::exp(v - hi);
    total += res.weights[i];
  }
  for (double& w : res.weights) w /= total;
  res.log_mean = hi + std::log(total) - std::log(static_cast<double>(log_weights.size()));
  return res;
}

std::vector<std::size_t> multinomial(std::span<const double> weights, std::size_t n,
                                     std::uint64_t key) {
  const std::vector<double> cdf = cumulative_weights(weights);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(key, i));
    out[i] = categorical_index(cdf, rng.uniform());
  }
  return out;
}

std::vector<std::size_t> systematic(std::span<const double> weights, std::size_t n,
                                    std::uint64_t key) {
  const std::vector<double> cdf = cumulative_weights(weights);
  CounterRng rng(key);
  const double u0 = rng.uniform();
  std::vector<std::size_t> out(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + u0) / static_cast<double>(n);
    while (j + 1 < cdf.size() && cdf[j] <= u) ++j;
    out[i] = j;
  }
  return out;
}

}  // namespace reference

// ---------------------------------------------------------------------------

namespace parallel {

void propagate(const LinearGaussianTransition& transition, const Matrix& prev,
               std::span<const std::size_t> ancestors, std::uint64_t key, Matrix& out) {
  const Eigen::Index n = ancestors.empty() ? prev.cols() : static_cast<Eigen::Index>(ancestors.size());
  const Eigen::Index d = prev.rows();
  out.resize(d, n);
  const Eigen::Index chunks = chunk_count(n);
  const Matrix& A = transition.A();
  const Matrix& L = transition.sqrt_Q();
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index first = c * kChunk;
    const Eigen::Index count = std::min(kChunk, n - first);
    Matrix src(d, count);
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::Index i = first + j;
      src.col(j) = prev.col(ancestors.empty() ? i : static_cast<Eigen::Index>(ancestors[i]));
    }
    Matrix z(d, count);
    fill_normals(key, first, count, z);
    out.middleCols(first, count).noalias() = A * src;
    out.middleCols(first, count).noalias() += L * z;
  }
}

void log_potentials(const GeneralisedLikelihood& gl, const Matrix& states, const Vector& y,
                    std::span<double> out) {
  if (!observed(y)) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const Eigen::Index n = states.cols();
  const Eigen::Index chunks = chunk_count(n);
  const ObservationMap& map = gl.base().map();
  const auto dy = static_cast<std::size_t>(y.size());
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index first = c * kChunk;
    const Eigen::Index count = std::min(kChunk, n - first);
    Matrix mapped;
    map.apply_columns(states.middleCols(first, count), mapped);
    mapped = (-mapped).colwise() + y;
    for (Eigen::Index j = 0; j < count; ++j) {
      out[static_cast<std::size_t>(first + j)] =
          gl.residual_log_potential({mapped.col(j).data(), dy});
    }
  }
}

Normalised normalise(std::span<const double> log_weights) {
  Normalised res;
  const auto n = static_cast<Eigen::Index>(log_weights.size());
  res.weights.assign(log_weights.size(), 0.0);
  double hi = kNegInf;
  for (double v : log_weights) {
    if (!std::isnan(v)) hi = std::max(hi, v);
  }
  if (!std::isfinite(hi)) {
    res.ok = false;
    return res;
  }
  const Eigen::Index chunks = chunk_count(n);
  std::vector<double> partial(static_cast<std::size_t>(chunks), 0.0);
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index first = c * kChunk;
    const Eigen::Index last = std::min(first + kChunk, n);
    double acc = 0.0;
    for (Eigen::Index i = first; i < last; ++i) {
      const double v = log_weights[static_cast<std::size_t>(i)];
      const double w = std::isnan(v) ? 0.0 : std::exp(v - hi);
      res.weights[static_cast<std::size_t>(i)] = w;
      acc += w;
    }
    partial[static_cast<std::size_t>(c)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  const double inv = 1.0 / total;
#pragma omp parallel for schedule(static) if (chunks > 1)
  for (Eigen::Index i = 0; i < n; ++i) res.weights[static_cast<std::size_t>(i)] *= inv;
  res.log_mean = hi + std::log(total) - std::log(static_cast<double>(n));
  return res;
}

std::vector<std::size_t> multinomial(std::span<const double> weights, std::size_t n,
                                     std::uint64_t key) {
  const std::vector<double> cdf = cumulative_weights(weights);
  std::vector<std::size_t> out(n);
  const auto total = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (total > kChunk)
  for (std::int64_t i = 0; i < total; ++i) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(i)));
    out[static_cast<std::size_t>(i)] = categorical_index(cdf, rng.uniform());
  }
  return out;
}

std::vector<std::size_t> systematic(std::span<const double> weights, std::size_t n,
                                    std::uint64_t key) {
  const std::vector<double> cdf = cumulative_weights(weights);
  CounterRng rng(key);
  const double u0 = rng.uniform();
  std::vector<std::size_t> out(n);
  const auto total = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (total > kChunk)
  for (std::int64_t i = 0; i < total; ++i) {
    const double u = (static_cast<double>(i) + u0) / static_cast<double>(n);
    out[static_cast<std::size_t>(i)] = categorical_index(cdf, u);
  }
  return out;
}

}  // namespace parallel

}  // namespace rsmc::kernels
