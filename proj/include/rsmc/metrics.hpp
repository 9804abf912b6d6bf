#pragma once

// Evaluation metrics: NMSE, empirical coverage, predictive MedAE, ESS
// summaries and the influence profile of a generalised likelihood.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "rsmc/filters.hpp"
#include "rsmc/models.hpp"

namespace rsmc {

/// sum_t (x_tj - xhat_tj)^2 / sum_t x_tj^2 per dimension; NaN where the
/// denominator vanishes.
Vector nmse(const Matrix& truth, const Matrix& estimates);

/// Fraction of steps with lower_tj <= x_tj <= upper_tj.
Vector empirical_coverage(const Matrix& truth, const Matrix& lower, const Matrix& upper);

/// Uses the empirical 5% and 95% quantiles of each step's particles (state_dim x N).
Vector empirical_coverage(const Matrix& truth, const std::vector<Matrix>& particles);

/// SingleDraw    : |yhat - y| for the first draw
/// MeanOverDraws : mean over draws of |yhat - y|
/// PredictiveMean: |mean(yhat) - y|, the point forecast
enum class MedaeMode { SingleDraw, MeanOverDraws, PredictiveMean };

/// median_t of the per-step absolute error. Rows of ys containing NaN are skipped.
Vector predictive_medae(const Matrix& ys, const std::vector<Matrix>& predictive,
                        MedaeMode mode = MedaeMode::SingleDraw);

/// Mean over finite entries; NaN when none are finite.
double finite_mean(const Vector& v);

double median(std::vector<double> values);
/// Type-7 quantile; NaN entries are dropped first.
double quantile(std::vector<double> values, double q);
double interquartile_range(std::vector<double> values);

struct EssSummary {
  double min = 0.0;
  double mean = 0.0;
};
EssSummary summarise_ess(std::span<const double> ess);

struct RunMetrics {
  Vector nmse_per_dim;
  Vector coverage_per_dim;
  Vector medae_per_obs_dim;
  EssSummary ess;

  double nmse() const { return finite_mean(nmse_per_dim); }
  double coverage() const { return finite_mean(coverage_per_dim); }
  double medae() const { return finite_mean(medae_per_obs_dim); }
};

RunMetrics compute_run_metrics(const Matrix& truth, const FilterOutput& output, const Matrix& ys,
                               MedaeMode mode = MedaeMode::SingleDraw);

struct InfluencePoint {
  double d;
  double influence;
};

/// |d/dy log G(y | x)| at y = h(x) + d sigma by central differences with step
/// 1e-5 sigma. Needs a one-dimensional observation.
std::vector<InfluencePoint> influence_profile(const GeneralisedLikelihood& gl,
                                              std::span<const double> standardised_residuals);

}  // namespace rsmc
