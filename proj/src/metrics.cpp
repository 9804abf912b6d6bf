#include "rsmc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(what) + ": shape mismatch");
  }
}

bool row_missing(const Matrix& ys, Eigen::Index t) { return !ys.row(t).allFinite(); }

}  // namespace

Vector nmse(const Matrix& truth, const Matrix& estimates) {
  require_same_shape(truth, estimates, "nmse");
  Vector out(truth.cols());
  for (Eigen::Index j = 0; j < truth.cols(); ++j) {
    const double den = truth.col(j).squaredNorm();
    out[j] = den > 0.0 ? (truth.col(j) - estimates.col(j)).squaredNorm() / den : kNaN;
  }
  return out;
}

Vector empirical_coverage(const Matrix& truth, const Matrix& lower, const Matrix& upper) {
  require_same_shape(truth, lower, "coverage");
  require_same_shape(truth, upper, "coverage");
  Vector out = Vector::Zero(truth.cols());
  if (truth.rows() == 0) return out;
  for (Eigen::Index t = 0; t < truth.rows(); ++t) {
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      if (truth(t, j) >= lower(t, j) && truth(t, j) <= upper(t, j)) out[j] += 1.0;
    }
  }
  return out / static_cast<double>(truth.rows());
}

Vector empirical_coverage(const Matrix& truth, const std::vector<Matrix>& particles) {
  if (static_cast<std::size_t>(truth.rows()) != particles.size()) {
    throw ConfigError("coverage: one particle set per step required");
  }
  Matrix lower(truth.rows(), truth.cols());
  Matrix upper(truth.rows(), truth.cols());
  std::vector<double> buf;
  for (Eigen::Index t = 0; t < truth.rows(); ++t) {
    const Matrix& p = particles[static_cast<std::size_t>(t)];
    if (p.rows() != truth.cols()) throw ConfigError("coverage: particle dimension mismatch");
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      buf.resize(static_cast<std::size_t>(p.cols()));
      for (Eigen::Index i = 0; i < p.cols(); ++i) buf[static_cast<std::size_t>(i)] = p(j, i);
      lower(t, j) = sample_quantile(buf, 0.05);
      upper(t, j) = sample_quantile(buf, 0.95);
    }
  }
  return empirical_coverage(truth, lower, upper);
}

Vector predictive_medae(const Matrix& ys, const std::vector<Matrix>& predictive, MedaeMode mode) {
  if (static_cast<std::size_t>(ys.rows()) != predictive.size()) {
    throw ConfigError("medae: one predictive sample block per step required");
  }
  Vector out(ys.cols());
  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(ys.rows()));
  for (Eigen::Index j = 0; j < ys.cols(); ++j) {
    errors.clear();
    for (Eigen::Index t = 0; t < ys.rows(); ++t) {
      if (row_missing(ys, t)) continue;
      const Matrix& s = predictive[static_cast<std::size_t>(t)];
      if (s.cols() < 1 || s.rows() != ys.cols()) throw ConfigError("medae: bad predictive block");
      if (mode == MedaeMode::SingleDraw) {
        errors.push_back(std::abs(s(j, 0) - ys(t, j)));
      } else if (mode == MedaeMode::MeanOverDraws) {
        errors.push_back((s.row(j).array() - ys(t, j)).abs().mean());
      } else {
        errors.push_back(std::abs(s.row(j).mean() - ys(t, j)));
      }
    }
    out[j] = errors.empty() ? kNaN : median(errors);
  }
  return out;
}

double finite_mean(const Vector& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::isfinite(v[i])) {
      sum += v[i];
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : kNaN;
}

double quantile(std::vector<double> values, double q) {
  std::erase_if(values, [](double x) { return std::isnan(x); });
  if (values.empty()) return kNaN;
  return sample_quantile(values, q);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double interquartile_range(std::vector<double> values) {
  return quantile(values, 0.75) - quantile(values, 0.25);
}

EssSummary summarise_ess(std::span<const double> ess) {
  EssSummary s;
  if (ess.empty()) return s;
  s.min = *std::min_element(ess.begin(), ess.end());
  double sum = 0.0;
  for (double e : ess) sum += e;
  s.mean = sum / static_cast<double>(ess.size());
  return s;
}

RunMetrics compute_run_metrics(const Matrix& truth, const FilterOutput& output, const Matrix& ys,
                               MedaeMode mode) {
  RunMetrics m;
  m.nmse_per_dim = nmse(truth, output.means);
  m.coverage_per_dim = empirical_coverage(truth, output.lower, output.upper);
  m.medae_per_obs_dim = predictive_medae(ys, output.predictive_samples, mode);
  m.ess = summarise_ess(output.ess);
  return m;
}

std::vector<InfluencePoint> influence_profile(const GeneralisedLikelihood& gl,
                                              std::span<const double> standardised_residuals) {
  if (gl.base().obs_dim() != 1) throw ConfigError("influence profile needs a 1-D observation");
  const double sigma = gl.base().residual_scale();
  const double h = 1e-5 * sigma;
  std::vector<InfluencePoint> out;
  out.reserve(standardised_residuals.size());
  for (double d : standardised_residuals) {
    const double r = d * sigma;
    const double up = r + h;
    const double dn = r - h;
    const double deriv = (gl.residual_log_potential(std::span<const double>(&up, 1)) -
                          gl.residual_log_potential(std::span<const double>(&dn, 1))) /
                         (2.0 * h);
    out.push_back({d, std::abs(deriv)});
  }
  return out;
}

}  // namespace rsmc
