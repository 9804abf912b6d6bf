#pragma once

// Multi-run benchmark harness. States are simulated once per experiment from
// data_seed; each run redraws the observations from derive_seed(data_seed, run)
// and every filter in that run uses the particle seed derive_seed(base_seed, run).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsmc/csv_io.hpp"
#include "rsmc/filters.hpp"
#include "rsmc/metrics.hpp"
#include "rsmc/selection.hpp"
#include "rsmc/simulators.hpp"

namespace rsmc {

enum class ExperimentKind { WienerVelocity, AsymmetricWiener, TAN, GPRegression };

enum class FilterType { Kalman, Bootstrap, Auxiliary };

enum class LikelihoodChoice {
  Gaussian,        // the nominal noise model of the experiment
  StudentT,        // independent t per dimension, `scale` and `dof`
  Asymmetric,      // two-piece normal with the simulator's scales
  OracleMixture,   // the true contaminated noise law (Gaussian contamination only)
};

struct FilterConfig {
  std::string name;
  FilterType type = FilterType::Bootstrap;
  LikelihoodChoice likelihood = LikelihoodChoice::Gaussian;
  std::optional<double> beta;  // unset: standard rule
  IntegralMode integral_mode = IntegralMode::DropConstant;
  double t_scale = 1.0;
  double t_dof = 1.0;
  FilterSpec spec;
  /// FFBS trajectories for the GP experiment; 0 disables smoothing.
  std::size_t smoother_trajectories = 1000;
};

struct DataSource {
  std::filesystem::path path;
  std::string time_column = "t";
  std::string value_column = "value";
  std::string truth_column;  // optional
};

struct SimulatorConfig {
  double dt = 0.1;
  std::size_t steps = 1000;
  std::optional<Vector> x0;  // experiment default when unset
  ContaminationSpec contamination = AdditiveGaussian{0.1, 100.0};
  double obs_variance = 1.0;
  double sigma_left = 1.0;   // asymmetric Wiener
  double sigma_right = 10.0;
  double lengthscale = 0.03;  // GP
  double signal_variance = 32.0;
  std::optional<DataSource> data;  // GP: observed series instead of a simulated draw
};

struct SelectionSettings {
  BetaSelectionConfig config;
  std::size_t runs = 1;
  /// Tuning sequences have ceil(fraction * steps) observations.
  double tuning_fraction = 0.1;
  FilterConfig filter;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::WienerVelocity;
  SimulatorConfig simulator;
  std::vector<FilterConfig> filters;
  std::size_t runs = 1;
  std::uint64_t base_seed = 1;
  std::uint64_t data_seed = 20200;
  std::filesystem::path output_dir = "out";
  MedaeMode medae = MedaeMode::PredictiveMean;
  bool write_trajectories = false;
  /// 0 uses every available core.
  std::size_t threads = 0;
  std::optional<SelectionSettings> beta_selection;

  /// Throws ConfigError.
  void validate() const;
};

std::string to_string(ExperimentKind kind);
std::string rule_name(const FilterConfig& filter);

/// The experiment's default configuration (simulator values and filter list).
ExperimentConfig default_config(ExperimentKind kind);

struct Dataset {
  Matrix states;                 // T x d_x (empty when only observations are known)
  std::vector<Matrix> obs;       // per run, T x d_y
  std::vector<std::vector<bool>> contaminated;
};

struct RunRecord {
  std::string filter;
  std::string rule;
  double beta = 0.0;
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  RunMetrics metrics;
  std::vector<double> ess;
  Matrix means;
  Matrix lower;
  Matrix upper;
};

struct FilterSummary {
  std::string filter;
  std::size_t completed = 0;
  std::size_t failed = 0;
  double nmse_median = 0.0, nmse_iqr = 0.0, nmse_mean = 0.0;
  double coverage_median = 0.0, coverage_iqr = 0.0, coverage_mean = 0.0;
  double medae_median = 0.0, medae_iqr = 0.0, medae_mean = 0.0;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // run-major, filter order as configured
  std::vector<FilterSummary> summaries;

  const FilterSummary& summary(const std::string& filter) const;
};

/// Builds the model a filter sees.
StateSpaceModel build_model(const ExperimentConfig& config, const FilterConfig& filter);

/// Simulates (or loads) the experiment's data.
Dataset make_dataset(const ExperimentConfig& config);

/// Runs every filter on every run. Degenerate runs become failed records.
ExperimentResult run_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config, const Dataset& data);

/// metrics.csv, summary.json, ess.csv and (optionally) per-run trajectories.
void write_outputs(const ExperimentConfig& config, const ExperimentResult& result);

/// Tuning data and grid search for the configured selection filter.
BetaSelectionResult run_beta_selection(const ExperimentConfig& config);
void write_selection(const ExperimentConfig& config, const BetaSelectionResult& result);

/// dataset_run<k>.csv per run: t, x_1..x_dx, y_1..y_dy, contaminated.
void write_dataset(const ExperimentConfig& config, const Dataset& data);


}  // namespace rsmc
