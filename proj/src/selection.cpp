#include "rsmc/selection.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "rsmc/errors.hpp"
#include "rsmc/metrics.hpp"

namespace rsmc {

void BetaSelectionConfig::validate() const {
  if (grid.empty()) throw ConfigError("beta grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw ConfigError("beta grid values must lie in (0, 1)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("beta grid must be strictly increasing");
  }
}

std::vector<double> predictive_loss(const std::vector<Matrix>& predictive, const Matrix& ys,
                                    DimensionWeighting weighting) {
  const auto T = static_cast<std::size_t>(ys.rows());
  if (predictive.size() != T) throw ConfigError("predictive loss: one sample block per step required");
  const Eigen::Index dy = ys.cols();
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  Matrix per_dim = Matrix::Constant(ys.rows(), dy, nan);
  for (std::size_t t = 0; t < T; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    const Matrix& s = predictive[t];
    if (s.cols() < 1) throw ConfigError("predictive loss: M must be at least 1");
    if (s.rows() != dy) throw ConfigError("predictive loss: dimension mismatch");
    if (!ys.row(r).allFinite()) continue;
    for (Eigen::Index j = 0; j < dy; ++j) per_dim(r, j) = (s.row(j).array() - ys(r, j)).abs().mean();
  }

  Vector w = Vector::Ones(dy);
  if (weighting == DimensionWeighting::InverseMedian) {
    for (Eigen::Index j = 0; j < dy; ++j) {
      const std::vector<double> col(per_dim.col(j).data(), per_dim.col(j).data() + per_dim.rows());
      const double m = median(col);
      w[j] = (m > 0.0 && std::isfinite(m)) ? 1.0 / m : 1.0;
    }
  }
  w /= w.sum();

  std::vector<double> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = per_dim.row(static_cast<Eigen::Index>(t)).dot(w);
  return out;
}

double selection_score(const std::vector<double>& losses) {
  std::vector<double> finite;
  finite.reserve(losses.size());
  for (double l : losses) {
    if (std::isfinite(l)) finite.push_back(l);
  }
  if (finite.empty()) return std::numeric_limits<double>::infinity();
  return median(std::move(finite));
}

BetaSelectionResult select_beta(const BetaSelectionConfig& config, std::size_t runs,
                                const BetaScorer& scorer) {
  config.validate();
  if (runs < 1) throw ConfigError("beta selection needs at least one run");
  const std::size_t G = config.grid.size();
  const std::size_t jobs = G * runs;
  std::vector<double> scores(jobs, std::numeric_limits<double>::infinity());
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < jobs; ++k) {
    const std::size_t run = k / G;
    const double beta = config.grid[k % G];
    try {
      const double s = scorer(beta, run);
      scores[k] = std::isnan(s) ? std::numeric_limits<double>::infinity() : s;
    } catch (const DegenerateWeights&) {
    } catch (const NumericalError&) {
    } catch (...) {
#pragma omp critical(rsmc_selection_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  BetaSelectionResult res;
  res.grid = config.grid;
  std::vector<std::size_t> votes(G, 0);
  for (std::size_t run = 0; run < runs; ++run) {
    std::size_t best = 0;
    for (std::size_t g = 0; g < G; ++g) {
      const double s = scores[run * G + g];
      res.table.push_back({config.grid[g], run, s});
      if (s < scores[run * G + best]) best = g;
    }
    res.per_run_selected.push_back(config.grid[best]);
    ++votes[best];
  }
  const auto mode = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  res.selected_beta = config.grid[mode];
  res.mode_count = votes[mode];
  return res;
}

BetaSelectionResult select_beta(const StateSpaceModel& model, const FilterSpec& spec_template,
                                const std::vector<Matrix>& tuning_ys,
                                const BetaSelectionConfig& config, std::uint64_t seed,
                                IntegralMode mode) {
  FilterSpec spec = spec_template;
  spec.predictive_draws = config.predictive_samples ? config.predictive_samples : spec.particles;
  spec.store_ensembles = false;
  spec.validate();
  return select_beta(config, tuning_ys.size(), [&](double beta, std::size_t run) {
    const auto gl = GeneralisedLikelihood::beta(model.likelihood, beta, mode);
    const FilterOutput out = run_filter(model, gl, spec, tuning_ys[run], derive_seed(seed, run));
    return selection_score(predictive_loss(out.predictive_samples, tuning_ys[run], config.weighting));
  });
}

}  // namespace rsmc
