#include "rsmc/experiment.hpp"

#include <omp.h>

#include <cmath>
#include <exception>
#include <fstream>
#include <json.hpp>

#include "rsmc/errors.hpp"
#include "rsmc/kalman.hpp"
#include "rsmc/smoothing.hpp"

namespace rsmc {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ95 = 1.6448536269514722;
constexpr std::uint64_t kTuningTag = 0x7475'6e65ULL;

bool is_linear(ExperimentKind k) { return k != ExperimentKind::TAN; }

FilterConfig make_filter(std::string name, FilterType type, std::optional<double> beta,
                         LikelihoodChoice lik = LikelihoodChoice::Gaussian) {
  FilterConfig f;
  f.name = std::move(name);
  f.type = type;
  f.beta = beta;
  f.likelihood = lik;
  f.spec.kind = type == FilterType::Auxiliary ? FilterKind::Auxiliary : FilterKind::Bootstrap;
  return f;
}

Vector default_x0(const ExperimentConfig& c) {
  if (c.simulator.x0) return *c.simulator.x0;
  switch (c.experiment) {
    case ExperimentKind::WienerVelocity:
    case ExperimentKind::AsymmetricWiener:
      return WienerVelocityConfig{}.x0;
    case ExperimentKind::TAN:
      return TanConfig::standard().x0;
    case ExperimentKind::GPRegression:
      return Vector::Zero(3);
  }
  return {};
}

struct Dynamics {
  Matrix A;
  Matrix Q;
  Matrix H;  // empty for TAN
  Matrix prior_cov;
  Vector prior_mean;
};

Dynamics dynamics(const ExperimentConfig& c) {
  Dynamics d;
  const SimulatorConfig& s = c.simulator;
  switch (c.experiment) {
    case ExperimentKind::WienerVelocity:
    case ExperimentKind::AsymmetricWiener: {
      const LinearGaussianSystem sys = wiener_velocity_system(s.dt);
      d.A = sys.A;
      d.Q = sys.Q;
      d.H = sys.H;
      d.prior_mean = default_x0(c);
      d.prior_cov = sys.Q;
      break;
    }
    case ExperimentKind::TAN: {
      TanConfig tan = TanConfig::standard();
      d.A = Matrix::Identity(6, 6);
      for (int i = 0; i < 3; ++i) d.A(i, i + 3) = s.dt;
      d.Q = tan.Q;
      d.prior_mean = default_x0(c);
      d.prior_cov = tan.Q;
      break;
    }
    case ExperimentKind::GPRegression: {
      const Matern52StateSpace m =
          build_matern52(s.lengthscale, s.signal_variance, s.dt, s.obs_variance);
      d.A = m.A;
      d.Q = m.Q;
      d.H = m.H;
      d.prior_mean = Vector::Zero(3);
      d.prior_cov = m.P_inf;
      break;
    }
  }
  return d;
}

ObservationMap observation_map(const ExperimentConfig& c, const Dynamics& d) {
  if (c.experiment == ExperimentKind::TAN) {
    const Vector x0 = default_x0(c);
    return tan_observation_map(x0.head(2), DemParams{});
  }
  return ObservationMap::linear(d.H);
}

LikelihoodFamily nominal_family(const ExperimentConfig& c, const ObservationMap& map) {
  const auto dy = static_cast<Eigen::Index>(map.obs_dim());
  if (c.experiment == ExperimentKind::AsymmetricWiener) {
    return LikelihoodFamily::asymmetric_gaussian(map, c.simulator.sigma_left, c.simulator.sigma_right);
  }
  return LikelihoodFamily::gaussian(map, c.simulator.obs_variance * Matrix::Identity(dy, dy));
}

RunRecord failed_record(const FilterConfig& f, std::size_t run, std::uint64_t seed,
                        const char* what) {
  RunRecord r;
  r.filter = f.name;
  r.rule = rule_name(f);
  r.beta = f.beta.value_or(0.0);
  r.run_id = run;
  r.seed = seed;
  r.failed = true;
  r.error = what;
  return r;
}

RunRecord run_one(const ExperimentConfig& c, const FilterConfig& f, const Dynamics& dyn,
                  const Matrix& states, const Matrix& ys, std::size_t run, std::uint64_t seed) {
  RunRecord rec;
  rec.filter = f.name;
  rec.rule = rule_name(f);
  rec.beta = f.beta.value_or(0.0);
  rec.run_id = run;
  rec.seed = seed;
  const bool gp = c.experiment == ExperimentKind::GPRegression;
  const StateSpaceModel model = build_model(c, f);

  Matrix means;
  Matrix lower;
  Matrix upper;
  std::vector<Matrix> predictive;
  if (f.type == FilterType::Kalman) {
    const Matrix R = c.simulator.obs_variance *
                     Matrix::Identity(dyn.H.rows(), dyn.H.rows());
    const KalmanOutput k =
        kalman_filter(dyn.A, dyn.Q, dyn.H, R, {dyn.prior_mean, dyn.prior_cov}, ys);
    std::vector<GaussianBelief> beliefs =
        gp ? rts_smoother(k.filtered, k.predicted, dyn.A) : k.filtered;
    means = belief_means(beliefs);
    const Matrix sd = belief_variances(beliefs).cwiseSqrt();
    lower = means - kZ95 * sd;
    upper = means + kZ95 * sd;
    for (const GaussianBelief& b : k.predicted) predictive.emplace_back(dyn.H * b.mean);
  } else {
    const GeneralisedLikelihood gl =
        f.beta ? GeneralisedLikelihood::beta(model.likelihood, *f.beta, f.integral_mode)
               : GeneralisedLikelihood::standard(model.likelihood);
    FilterSpec spec = f.spec;
    const bool smooth = gp && f.smoother_trajectories > 0;
    spec.store_ensembles = smooth;
    FilterOutput out = run_filter(model, gl, spec, ys, seed);
    rec.ess = out.ess;
    predictive = std::move(out.predictive_samples);
    if (smooth) {
      const SmoothedTrajectories s = ffbs(out, model.transition, f.smoother_trajectories, seed);
      means = s.means();
      lower = s.quantiles(0.05);
      upper = s.quantiles(0.95);
    } else {
      means = std::move(out.means);
      lower = std::move(out.lower);
      upper = std::move(out.upper);
    }
  }

  if (states.size() > 0) {
    const Eigen::Index dm = gp ? 1 : states.cols();
    rec.metrics.nmse_per_dim = nmse(states.leftCols(dm), means.leftCols(dm));
    rec.metrics.coverage_per_dim =
        empirical_coverage(states.leftCols(dm), lower.leftCols(dm), upper.leftCols(dm));
  }
  rec.metrics.medae_per_obs_dim = predictive_medae(ys, predictive, c.medae);
  if (rec.ess.empty()) {
    rec.metrics.ess = {kNaN, kNaN};
  } else {
    rec.metrics.ess = summarise_ess(rec.ess);
  }
  rec.means = std::move(means);
  rec.lower = std::move(lower);
  rec.upper = std::move(upper);
  return rec;
}

nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void set_threads(std::size_t threads) {
  if (threads > 0) omp_set_num_threads(static_cast<int>(threads));
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::WienerVelocity: return "wiener_velocity";
    case ExperimentKind::AsymmetricWiener: return "asymmetric_wiener";
    case ExperimentKind::TAN: return "tan";
    case ExperimentKind::GPRegression: return "gp_regression";
  }
  return "unknown";
}

std::string rule_name(const FilterConfig& filter) {
  if (filter.type == FilterType::Kalman) return "exact";
  return filter.beta ? "beta" : "standard";
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  SimulatorConfig& s = c.simulator;
  switch (kind) {
    case ExperimentKind::WienerVelocity:
      c.runs = 20;
      c.filters = {make_filter("kalman", FilterType::Kalman, std::nullopt),
                   make_filter("bpf", FilterType::Bootstrap, std::nullopt),
                   make_filter("beta-bpf(0.1)", FilterType::Bootstrap, 0.1),
                   make_filter("oracle-bpf", FilterType::Bootstrap, std::nullopt,
                               LikelihoodChoice::OracleMixture)};
      break;
    case ExperimentKind::AsymmetricWiener: {
      c.runs = 20;
      s.contamination = MultiplicativeExponential{0.1, 1000.0};
      FilterConfig t1 = make_filter("t-bpf(1)", FilterType::Bootstrap, std::nullopt,
                                    LikelihoodChoice::StudentT);
      FilterConfig t10 = t1;
      t10.name = "t-bpf(10)";
      t10.t_scale = 10.0;
      c.filters = {make_filter("bpf", FilterType::Bootstrap, std::nullopt, LikelihoodChoice::Asymmetric),
                   make_filter("beta-bpf(0.1)", FilterType::Bootstrap, 0.1, LikelihoodChoice::Asymmetric),
                   t1, t10};
      break;
    }
    case ExperimentKind::TAN:
      c.runs = 10;
      s.steps = 2000;
      s.obs_variance = 400.0;
      s.contamination = AdditiveStudentT{0.05, 1.0, 20.0};
      c.filters = {make_filter("bpf", FilterType::Bootstrap, std::nullopt),
                   make_filter("beta-bpf(0.05)", FilterType::Bootstrap, 0.05),
                   make_filter("apf", FilterType::Auxiliary, std::nullopt),
                   make_filter("beta-apf(0.05)", FilterType::Auxiliary, 0.05)};
      break;
    case ExperimentKind::GPRegression:
      c.runs = 10;
      s.dt = 0.005;
      s.steps = 200;
      s.contamination = AdditiveGaussian{0.1, 50.0};
      c.filters = {make_filter("kalman-rts", FilterType::Kalman, std::nullopt),
                   make_filter("bpf-ffbs", FilterType::Bootstrap, std::nullopt),
                   make_filter("beta-bpf-ffbs(0.2)", FilterType::Bootstrap, 0.2)};
      break;
  }
  return c;
}

void ExperimentConfig::validate() const {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  if (filters.empty()) throw ConfigError("at least one filter is required");
  const SimulatorConfig& s = simulator;
  if (!(s.dt > 0.0)) throw ConfigError("simulator.dt must be positive");
  if (s.steps < 1) throw ConfigError("simulator.steps must be at least 1");
  if (!(s.obs_variance > 0.0)) throw ConfigError("simulator.obs_variance must be positive");
  if (!(s.sigma_left > 0.0) || !(s.sigma_right > 0.0)) {
    throw ConfigError("simulator.sigma_left and sigma_right must be positive");
  }
  const Eigen::Index dx = experiment == ExperimentKind::TAN ? 6
                          : experiment == ExperimentKind::GPRegression ? 3 : 4;
  if (s.x0 && s.x0->size() != dx) {
    throw ConfigError("simulator.x0 must have " + std::to_string(dx) + " entries");
  }
  const double p = contamination_probability(s.contamination);
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("contamination probability must lie in [0, 1]");
  if (std::holds_alternative<MultiplicativeExponential>(s.contamination) &&
      experiment != ExperimentKind::AsymmetricWiener && experiment != ExperimentKind::WienerVelocity) {
    throw ConfigError("exponential contamination is only defined for the Wiener experiments");
  }
  if (s.data) {
    if (experiment != ExperimentKind::GPRegression) {
      throw ConfigError("simulator.data is only supported for gp_regression");
    }
    if (!std::filesystem::exists(s.data->path)) {
      throw ConfigError("data file not found: " + s.data->path.string());
    }
  }
  const auto check_filter = [&](const FilterConfig& f) {
    if (f.type == FilterType::Kalman) {
      if (!is_linear(experiment)) throw ConfigError("filter '" + f.name + "': Kalman needs a linear model");
      if (f.beta) throw ConfigError("filter '" + f.name + "': Kalman has no beta rule");
      return;
    }
    f.spec.validate();
    if (f.beta && !(*f.beta > 0.0 && *f.beta < 1.0)) {
      throw ConfigError("filter '" + f.name + "': beta must lie in (0, 1)");
    }
    if (f.likelihood == LikelihoodChoice::OracleMixture &&
        !std::holds_alternative<AdditiveGaussian>(s.contamination) &&
        !std::holds_alternative<NoContamination>(s.contamination)) {
      throw ConfigError("filter '" + f.name + "': the oracle likelihood needs Gaussian contamination");
    }
    if (f.likelihood == LikelihoodChoice::StudentT && !(f.t_scale > 0.0 && f.t_dof > 0.0)) {
      throw ConfigError("filter '" + f.name + "': t_scale and t_dof must be positive");
    }
  };
  for (const FilterConfig& f : filters) check_filter(f);
  if (beta_selection) {
    beta_selection->config.validate();
    if (beta_selection->runs < 1) throw ConfigError("beta_selection.runs must be at least 1");
    if (!(beta_selection->tuning_fraction > 0.0 && beta_selection->tuning_fraction <= 1.0)) {
      throw ConfigError("beta_selection.tuning_fraction must lie in (0, 1]");
    }
    if (beta_selection->filter.type == FilterType::Kalman) {
      throw ConfigError("beta selection needs a particle filter");
    }
    check_filter(beta_selection->filter);
  }
}

StateSpaceModel build_model(const ExperimentConfig& c, const FilterConfig& f) {
  const Dynamics d = dynamics(c);
  const ObservationMap map = observation_map(c, d);
  const auto dy = static_cast<Eigen::Index>(map.obs_dim());
  const double var = c.simulator.obs_variance;
  std::optional<LikelihoodFamily> lik;
  switch (f.likelihood) {
    case LikelihoodChoice::Gaussian:
      lik = nominal_family(c, map);
      if (c.experiment == ExperimentKind::AsymmetricWiener) {
        lik = LikelihoodFamily::gaussian(map, var * Matrix::Identity(dy, dy));
      }
      break;
    case LikelihoodChoice::StudentT:
      lik = LikelihoodFamily::student_t(map, Vector::Constant(dy, f.t_scale), f.t_dof);
      break;
    case LikelihoodChoice::Asymmetric:
      lik = LikelihoodFamily::asymmetric_gaussian(map, c.simulator.sigma_left, c.simulator.sigma_right);
      break;
    case LikelihoodChoice::OracleMixture: {
      const Matrix I = Matrix::Identity(dy, dy);
      const auto* g = std::get_if<AdditiveGaussian>(&c.simulator.contamination);
      const double p = g ? g->probability : 0.0;
      const double scale = g ? g->scale : 0.0;
      std::vector<MixtureComponent> comps{{1.0 - p, Vector::Zero(dy), var * I}};
      if (p > 0.0) comps.push_back({p, Vector::Zero(dy), (var + scale * scale) * I});
      if (p >= 1.0) comps.erase(comps.begin());
      lik = LikelihoodFamily::gaussian_mixture(map, comps);
      break;
    }
  }
  StateSpaceModel m{GaussianDensity(d.prior_mean, d.prior_cov), LinearGaussianTransition(d.A, d.Q),
                    *lik};
  m.validate();
  return m;
}

Dataset make_dataset(const ExperimentConfig& c) {
  c.validate();
  const Dynamics d = dynamics(c);
  const SimulatorConfig& s = c.simulator;
  Dataset out;

  if (s.data) {
    ColumnMap cols{s.data->time_column, s.data->value_column, std::nullopt};
    if (!s.data->truth_column.empty()) cols.truth = s.data->truth_column;
    const SensorSeries series = ingest_csv(s.data->path, cols);
    const auto T = static_cast<Eigen::Index>(series.size());
    Matrix ys(T, 1);
    for (Eigen::Index t = 0; t < T; ++t) ys(t, 0) = series.values[static_cast<std::size_t>(t)];
    if (!series.truth.empty()) {
      out.states.resize(T, 1);
      for (Eigen::Index t = 0; t < T; ++t) out.states(t, 0) = series.truth[static_cast<std::size_t>(t)];
    }
    out.obs.assign(c.runs, ys);
    out.contaminated.assign(c.runs, std::vector<bool>(series.size(), false));
    return out;
  }

  Vector x0 = default_x0(c);
  if (c.experiment == ExperimentKind::GPRegression && !s.x0) {
    CounterRng rng(derive_seed(c.data_seed, StreamPurpose::Initialise));
    x0 = GaussianDensity(d.prior_mean, d.prior_cov).sample(rng);
  }
  out.states = simulate_states(d.A, d.Q, x0, s.steps, c.data_seed);
  const ObservationMap map = observation_map(c, d);
  const LikelihoodFamily noise = nominal_family(c, map);
  for (std::size_t r = 0; r < c.runs; ++r) {
    const std::uint64_t seed = derive_seed(c.data_seed, r);
    const LgssmSimulation sim = observe(out.states, noise, seed);
    ContaminatedObservations co = contaminate(sim, s.contamination, seed);
    out.obs.push_back(std::move(co.obs));
    out.contaminated.push_back(std::move(co.flags));
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, make_dataset(config));
}

ExperimentResult run_experiment(const ExperimentConfig& c, const Dataset& data) {
  c.validate();
  if (data.obs.size() != c.runs) throw ConfigError("dataset does not match the number of runs");
  set_threads(c.threads);
  const Dynamics dyn = dynamics(c);
  const std::size_t F = c.filters.size();
  const std::size_t jobs = c.runs * F;
  ExperimentResult result;
  result.records.resize(jobs);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < jobs; ++k) {
    const std::size_t run = k / F;
    const FilterConfig& f = c.filters[k % F];
    const std::uint64_t seed = derive_seed(c.base_seed, run);
    try {
      result.records[k] = run_one(c, f, dyn, data.states, data.obs[run], run, seed);
    } catch (const DegenerateWeights& e) {
      result.records[k] = failed_record(f, run, seed, e.what());
    } catch (const DegenerateBackwardKernel& e) {
      result.records[k] = failed_record(f, run, seed, e.what());
    } catch (const NumericalError& e) {
      result.records[k] = failed_record(f, run, seed, e.what());
    } catch (...) {
#pragma omp critical(rsmc_experiment_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (const FilterConfig& f : c.filters) {
    FilterSummary s;
    s.filter = f.name;
    std::vector<double> n, cov, med;
    for (const RunRecord& r : result.records) {
      if (r.filter != f.name) continue;
      if (r.failed) {
        ++s.failed;
        continue;
      }
      ++s.completed;
      n.push_back(r.metrics.nmse_per_dim.size() ? r.metrics.nmse() : kNaN);
      cov.push_back(r.metrics.coverage_per_dim.size() ? r.metrics.coverage() : kNaN);
      med.push_back(r.metrics.medae());
    }
    const auto mean = [](const std::vector<double>& v) {
      return finite_mean(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    s.nmse_median = median(n);
    s.nmse_iqr = interquartile_range(n);
    s.nmse_mean = mean(n);
    s.coverage_median = median(cov);
    s.coverage_iqr = interquartile_range(cov);
    s.coverage_mean = mean(cov);
    s.medae_median = median(med);
    s.medae_iqr = interquartile_range(med);
    s.medae_mean = mean(med);
    result.summaries.push_back(s);
  }
  return result;
}

const FilterSummary& ExperimentResult::summary(const std::string& filter) const {
  for (const FilterSummary& s : summaries) {
    if (s.filter == filter) return s;
  }
  throw ConfigError("no filter named '" + filter + "'");
}

void write_outputs(const ExperimentConfig& c, const ExperimentResult& result) {
  std::filesystem::create_directories(c.output_dir);
  const std::string exp = to_string(c.experiment);
  {
    std::ofstream os = open_output(c.output_dir / "metrics.csv");
    CsvWriter w(os);
    for (const char* h : {"experiment", "filter", "rule", "beta", "run_id", "seed", "dim", "nmse",
                          "coverage", "medae", "min_ess", "mean_ess"}) {
      w.field(std::string(h));
    }
    w.end_row();
    for (const RunRecord& r : result.records) {
      const auto prefix = [&] {
        w.field(exp).field(r.filter).field(r.rule).field(r.beta).field(r.run_id).field(
            std::to_string(r.seed));
      };
      if (r.failed) {
        prefix();
        w.field(std::string("failed"));
        for (int i = 0; i < 5; ++i) w.field(std::string());
        w.end_row();
        continue;
      }
      const Eigen::Index dims =
          std::max(r.metrics.nmse_per_dim.size(), r.metrics.medae_per_obs_dim.size());
      for (Eigen::Index j = 0; j < dims; ++j) {
        prefix();
        w.field(static_cast<std::size_t>(j));
        const auto opt = [&](const Vector& v) {
          if (j < v.size()) w.field(v[j]);
          else w.field(std::string());
        };
        opt(r.metrics.nmse_per_dim);
        opt(r.metrics.coverage_per_dim);
        opt(r.metrics.medae_per_obs_dim);
        if (r.ess.empty()) {
          w.field(std::string()).field(std::string());
        } else {
          w.field(r.metrics.ess.min).field(r.metrics.ess.mean);
        }
        w.end_row();
      }
    }
  }
  {
    nlohmann::ordered_json j;
    j["experiment"] = exp;
    j["runs"] = c.runs;
    j["base_seed"] = c.base_seed;
    j["data_seed"] = c.data_seed;
    nlohmann::ordered_json filters = nlohmann::ordered_json::array();
    for (const FilterSummary& s : result.summaries) {
      nlohmann::ordered_json f;
      f["filter"] = s.filter;
      f["completed_runs"] = s.completed;
      f["failed_runs"] = s.failed;
      const auto stat = [&](double med, double iqr, double mean) {
        return nlohmann::ordered_json{{"median", number(med)}, {"iqr", number(iqr)}, {"mean", number(mean)}};
      };
      f["nmse"] = stat(s.nmse_median, s.nmse_iqr, s.nmse_mean);
      f["coverage"] = stat(s.coverage_median, s.coverage_iqr, s.coverage_mean);
      f["medae"] = stat(s.medae_median, s.medae_iqr, s.medae_mean);
      filters.push_back(f);
    }
    j["filters"] = filters;
    std::ofstream os = open_output(c.output_dir / "summary.json");
    os << j.dump(2) << '\n';
  }
  {
    std::ofstream os = open_output(c.output_dir / "ess.csv");
    CsvWriter w(os);
    w.field(std::string("filter")).field(std::string("run_id")).field(std::string("t")).field(std::string("ess"));
    w.end_row();
    for (const RunRecord& r : result.records) {
      for (std::size_t t = 0; t < r.ess.size(); ++t) {
        w.field(r.filter).field(r.run_id).field(t + 1).field(r.ess[t]);
        w.end_row();
      }
    }
  }
  bool any_failed = false;
  for (const RunRecord& r : result.records) any_failed |= r.failed;
  if (any_failed) {
    std::ofstream os = open_output(c.output_dir / "failures.csv");
    CsvWriter w(os);
    w.field(std::string("filter")).field(std::string("run_id")).field(std::string("seed")).field(std::string("error"));
    w.end_row();
    for (const RunRecord& r : result.records) {
      if (!r.failed) continue;
      w.field(r.filter).field(r.run_id).field(std::to_string(r.seed)).field(r.error);
      w.end_row();
    }
  }
  if (c.write_trajectories) {
    const std::filesystem::path dir = c.output_dir / "trajectories";
    std::filesystem::create_directories(dir);
    for (const RunRecord& r : result.records) {
      if (r.failed) continue;
      std::string stem = r.filter;
      for (char& ch : stem) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
      }
      std::ofstream os = open_output(dir / (stem + "_run" + std::to_string(r.run_id) + ".csv"));
      CsvWriter w(os);
      w.field(std::string("t"));
      for (Eigen::Index j = 0; j < r.means.cols(); ++j) {
        const std::string s = std::to_string(j);
        w.field("mean_" + s).field("lower_" + s).field("upper_" + s);
      }
      w.end_row();
      for (Eigen::Index t = 0; t < r.means.rows(); ++t) {
        w.field(static_cast<std::size_t>(t + 1));
        for (Eigen::Index j = 0; j < r.means.cols(); ++j) {
          w.field(r.means(t, j)).field(r.lower(t, j)).field(r.upper(t, j));
        }
        w.end_row();
      }
    }
  }
}

BetaSelectionResult run_beta_selection(const ExperimentConfig& c) {
  c.validate();
  if (!c.beta_selection) throw ConfigError("configuration has no beta_selection section");
  const SelectionSettings& sel = *c.beta_selection;
  set_threads(c.threads);
  ExperimentConfig tuning = c;
  tuning.runs = sel.runs;
  tuning.data_seed = derive_seed(c.data_seed, kTuningTag);
  tuning.simulator.steps = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(sel.tuning_fraction * static_cast<double>(c.simulator.steps))));
  const Dataset data = make_dataset(tuning);
  const StateSpaceModel model = build_model(c, sel.filter);
  return select_beta(model, sel.filter.spec, data.obs, sel.config,
                     derive_seed(c.base_seed, kTuningTag), sel.filter.integral_mode);
}

void write_selection(const ExperimentConfig& c, const BetaSelectionResult& result) {
  std::filesystem::create_directories(c.output_dir);
  {
    std::ofstream os = open_output(c.output_dir / "selection_scores.csv");
    CsvWriter w(os);
    w.field(std::string("beta")).field(std::string("run_id")).field(std::string("score"));
    w.end_row();
    for (const ScoreRow& r : result.table) {
      w.field(r.beta).field(r.run_id).field(r.score);
      w.end_row();
    }
  }
  nlohmann::ordered_json j;
  j["selected_beta"] = result.selected_beta;
  j["mode_count"] = result.mode_count;
  j["grid"] = result.grid;
  j["per_run_selected"] = result.per_run_selected;
  std::ofstream os = open_output(c.output_dir / "selection.json");
  os << j.dump(2) << '\n';
}

void write_dataset(const ExperimentConfig& c, const Dataset& data) {
  std::filesystem::create_directories(c.output_dir);
  for (std::size_t r = 0; r < data.obs.size(); ++r) {
    const Matrix& ys = data.obs[r];
    const Eigen::Index dx = data.states.rows() == ys.rows() ? data.states.cols() : 0;
    std::ofstream os = open_output(c.output_dir / ("dataset_run" + std::to_string(r) + ".csv"));
    CsvWriter w(os);
    w.field(std::string("t"));
    for (Eigen::Index j = 0; j < dx; ++j) w.field("x_" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < ys.cols(); ++j) w.field("y_" + std::to_string(j + 1));
    w.field(std::string("contaminated"));
    w.end_row();
    for (Eigen::Index t = 0; t < ys.rows(); ++t) {
      w.field(static_cast<std::size_t>(t + 1));
      for (Eigen::Index j = 0; j < dx; ++j) w.field(data.states(t, j));
      for (Eigen::Index j = 0; j < ys.cols(); ++j) w.field(ys(t, j));
      w.field(std::size_t{data.contaminated[r][static_cast<std::size_t>(t)] ? 1u : 0u});
      w.end_row();
    }
  }
}

}  // namespace rsmc
