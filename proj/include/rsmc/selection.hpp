#pragma once

// Predictive selection of beta by grid search: each candidate is scored by
// the median over steps of the one-step-ahead absolute prediction error.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "rsmc/filters.hpp"

namespace rsmc {

enum class DimensionWeighting { InverseMedian, None };

struct BetaSelectionConfig {
  std::vector<double> grid{0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 0.8};
  /// Predictive draws per step; 0 means one per particle.
  std::size_t predictive_samples = 0;
  DimensionWeighting weighting = DimensionWeighting::InverseMedian;

  /// Throws ConfigError; the grid must be strictly increasing.
  void validate() const;
};

/// Per-step loss: mean over draws of |yhat - y| per dimension, combined with
/// weights 1/median_t(loss_j) normalised to sum to one. Missing rows give NaN.
std::vector<double> predictive_loss(const std::vector<Matrix>& predictive, const Matrix& ys,
                                    DimensionWeighting weighting = DimensionWeighting::InverseMedian);

/// Median of the finite per-step losses.
double selection_score(const std::vector<double>& losses);

struct ScoreRow {
  double beta;
  std::size_t run_id;
  double score;  // +inf when the filter degenerated
};

struct BetaSelectionResult {
  double selected_beta = 0.0;
  std::size_t mode_count = 0;
  std::vector<double> grid;
  std::vector<double> per_run_selected;
  std::vector<ScoreRow> table;
};

/// Scores one (beta, run) pair. DegenerateWeights and NumericalError thrown by
/// the scorer are recorded as +inf.
using BetaScorer = std::function<double(double beta, std::size_t run_id)>;

/// Grid search over `runs` tuning runs. Returns the modal per-run argmin; ties
/// at every level go to the smaller beta.
BetaSelectionResult select_beta(const BetaSelectionConfig& config, std::size_t runs,
                                const BetaScorer& scorer);

/// Runs the template filter with a beta rule on each tuning sequence.
BetaSelectionResult select_beta(const StateSpaceModel& model, const FilterSpec& spec_template,
                                const std::vector<Matrix>& tuning_ys,
                                const BetaSelectionConfig& config, std::uint64_t seed,
                                IntegralMode mode = IntegralMode::DropConstant);

}  // namespace rsmc
