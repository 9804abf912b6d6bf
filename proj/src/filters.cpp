#include "rsmc/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rsmc/errors.hpp"
#include "rsmc/kernels.hpp"

namespace rsmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

struct Kernels {
  Backend backend;

  void propagate(const LinearGaussianTransition& tr, const Matrix& prev,
                 std::span<const std::size_t> anc, std::uint64_t key, Matrix& out) const {
    if (backend == Backend::Reference) kernels::reference::propagate(tr, prev, anc, key, out);
    else kernels::parallel::propagate(tr, prev, anc, key, out);
  }
  void log_potentials(const GeneralisedLikelihood& gl, const Matrix& states, const Vector& y,
                      std::span<double> out) const {
    if (backend == Backend::Reference) kernels::reference::log_potentials(gl, states, y, out);
    else kernels::parallel::log_potentials(gl, states, y, out);
  }
  kernels::Normalised normalise(std::span<const double> logw) const {
    return backend == Backend::Reference ? kernels::reference::normalise(logw)
                                         : kernels::parallel::normalise(logw);
  }
};

Matrix gather(const Matrix& states, std::span<const std::size_t> idx) {
  Matrix out(states.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.col(static_cast<Eigen::Index>(i)) = states.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

class Recorder {
 public:
  Recorder(FilterOutput& out, std::size_t steps, std::size_t dim, std::size_t particles)
      : out_(out) {
    const auto T = static_cast<Eigen::Index>(steps);
    const auto d = static_cast<Eigen::Index>(dim);
    out_.means.resize(T, d);
    out_.variances.resize(T, d);
    out_.lower.resize(T, d);
    out_.upper.resize(T, d);
    out_.ess.reserve(steps);
    out_.log_normalising_increments.reserve(steps);
    out_.predictive_samples.reserve(steps);
    out_.particles = particles;
    values_.resize(particles);
  }

  /// weights empty => equally weighted.
  void summarise(std::size_t t, const Matrix& states, std::span<const double> weights) {
    const auto row = static_cast<Eigen::Index>(t);
    const auto n = static_cast<double>(states.cols());
    for (Eigen::Index j = 0; j < states.rows(); ++j) {
      for (Eigen::Index i = 0; i < states.cols(); ++i) values_[static_cast<std::size_t>(i)] = states(j, i);
      double mean = 0.0;
      double var = 0.0;
      if (weights.empty()) {
        for (double v : values_) mean += v;
        mean /= n;
        for (double v : values_) var += (v - mean) * (v - mean);
        var /= n;
        out_.lower(row, j) = sample_quantile(values_, 0.05);
        out_.upper(row, j) = sample_quantile(values_, 0.95);
      } else {
        for (std::size_t i = 0; i < values_.size(); ++i) mean += weights[i] * values_[i];
        for (std::size_t i = 0; i < values_.size(); ++i) {
          var += weights[i] * (values_[i] - mean) * (values_[i] - mean);
        }
        out_.lower(row, j) = weighted_quantile(values_, weights, 0.05);
        out_.upper(row, j) = weighted_quantile(values_, weights, 0.95);
      }
      out_.means(row, j) = mean;
      out_.variances(row, j) = var;
    }
  }

 private:
  FilterOutput& out_;
  std::vector<double> values_;
};

/// y ~ sum_i W_i g(y | x_t) with x_t ~ f(. | x_{t-1}^(i)).
Matrix predictive_draws(const GeneralisedLikelihood& gl, const LinearGaussianTransition& tr,
                        const Matrix& prev, std::span<const double> prev_weights,
                        const FilterSpec& spec, std::uint64_t key) {
  const LikelihoodFamily& fam = gl.base();
  const auto dy = static_cast<Eigen::Index>(fam.obs_dim());
  const auto m = static_cast<Eigen::Index>(spec.predictive_draws ? spec.predictive_draws : spec.particles);
  Matrix out(dy, m);
  const std::vector<double> cdf = kernels::cumulative_weights(prev_weights);
  const auto draw = [&](Eigen::Index k, Vector& z, Vector& x) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(k)));
    const std::size_t j = kernels::categorical_index(cdf, rng.uniform());
    for (Eigen::Index r = 0; r < z.size(); ++r) z[r] = rng.normal();
    x.noalias() = tr.A() * prev.col(static_cast<Eigen::Index>(j));
    x.noalias() += tr.sqrt_Q() * z;
    fam.map().apply({x.data(), static_cast<std::size_t>(x.size())},
                    {out.col(k).data(), static_cast<std::size_t>(dy)});
    if (spec.predictive_noise) out.col(k) += fam.sample_noise(rng);
  };
  if (spec.backend == Backend::Reference) {
    Vector z(prev.rows());
    Vector x(prev.rows());
    for (Eigen::Index k = 0; k < m; ++k) draw(k, z, x);
  } else {
#pragma omp parallel
    {
      Vector z(prev.rows());
      Vector x(prev.rows());
#pragma omp for schedule(static)
      for (Eigen::Index k = 0; k < m; ++k) draw(k, z, x);
    }
  }
  return out;
}

Matrix sample_prior(const GaussianDensity& prior, std::size_t n, std::uint64_t key) {
  const auto d = static_cast<Eigen::Index>(prior.dim());
  Matrix out(d, static_cast<Eigen::Index>(n));
  Vector z(d);
  for (std::size_t i = 0; i < n; ++i) {
    CounterRng rng(derive_seed(key, i));
    for (Eigen::Index r = 0; r < d; ++r) z[r] = rng.normal();
    out.col(static_cast<Eigen::Index>(i)) = prior.mean() + prior.sqrt_cov() * z;
  }
  return out;
}

void check_inputs(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                  const FilterSpec& spec, const Matrix& ys) {
  spec.validate();
  model.validate();
  if (gl.base().state_dim() != model.state_dim()) {
    throw ConfigError("likelihood state dimension does not match the model");
  }
  if (static_cast<std::size_t>(ys.cols()) != gl.base().obs_dim()) {
    throw ConfigError("observation dimension " + std::to_string(ys.cols()) +
                      " does not match likelihood dimension " +
                      std::to_string(gl.base().obs_dim()));
  }
  if (ys.rows() < 1) throw ConfigError("need at least one observation");
}

std::vector<double> logs_of(std::span<const double> w) {
  std::vector<double> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = std::log(w[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void FilterSpec::validate() const {
  if (particles < 2) throw ConfigError("particle count must be at least 2");
  if (trigger.kind == ResampleTrigger::Kind::EssBelow &&
      !(trigger.fraction > 0.0 && trigger.fraction <= 1.0)) {
    throw ConfigError("ESS resampling fraction must lie in (0, 1]");
  }
  if (!(apf_stabiliser_fraction >= 0.0) || !std::isfinite(apf_stabiliser_fraction)) {
    throw ConfigError("APF stabiliser fraction must be non-negative");
  }
}

double FilterOutput::log_evidence() const {
  return std::accumulate(log_normalising_increments.begin(), log_normalising_increments.end(), 0.0);
}

NormalisedWeights normalise_log_weights(std::span<const double> log_weights, std::size_t step) {
  if (log_weights.empty()) throw ConfigError("cannot normalise an empty weight vector");
  kernels::Normalised n = kernels::parallel::normalise(log_weights);
  if (!n.ok) throw DegenerateWeights(step);
  return {std::move(n.weights), n.log_mean};
}

double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return 1.0 / sq;
}

std::vector<std::size_t> resample(std::span<const double> weights, std::size_t n,
                                  ResamplingScheme scheme, std::uint64_t key, Backend backend) {
  if (weights.empty()) throw ConfigError("cannot resample an empty weight vector");
  if (scheme == ResamplingScheme::Multinomial) {
    return backend == Backend::Reference ? kernels::reference::multinomial(weights, n, key)
                                         : kernels::parallel::multinomial(weights, n, key);
  }
  return backend == Backend::Reference ? kernels::reference::systematic(weights, n, key)
                                       : kernels::parallel::systematic(weights, n, key);
}

double sample_quantile(std::span<const double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> v(values.begin(), values.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double acc = 0.0;
  for (std::size_t i : order) {
    acc += weights[i];
    if (acc >= q) return values[i];
  }
  return values[order.back()];
}

// ---------------------------------------------------------------------------

Vector TransitionProposal::sample(const Vector& prev, const Vector&, CounterRng& rng) const {
  return transition_.sample(prev, rng);
}

double TransitionProposal::log_density(const Vector& x, const Vector& prev, const Vector&) const {
  return transition_.log_density(x, prev);
}

ScaledTransitionProposal::ScaledTransitionProposal(const LinearGaussianTransition& transition,
                                                   double scale)
    : transition_(transition), widened_(transition.A(), scale * scale * transition.Q()) {
  if (!(scale > 0.0)) throw ConfigError("proposal scale must be positive");
}

Vector ScaledTransitionProposal::sample(const Vector& prev, const Vector&, CounterRng& rng) const {
  return widened_.sample(prev, rng);
}

double ScaledTransitionProposal::log_density(const Vector& x, const Vector& prev,
                                             const Vector&) const {
  return widened_.log_density(x, prev);
}

// ---------------------------------------------------------------------------

FilterOutput run_generic_pf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                            const Proposal& proposal, const FilterSpec& spec, const Matrix& ys,
                            std::uint64_t seed) {
  check_inputs(model, gl, spec, ys);
  const Kernels k{spec.backend};
  const std::size_t n = spec.particles;
  const auto T = static_cast<std::size_t>(ys.rows());
  const LinearGaussianTransition& tr = model.transition;

  FilterOutput out;
  Recorder rec(out, T, model.state_dim(), n);

  Matrix prev = sample_prior(model.prior, n, derive_seed(derive_seed(seed, 0), StreamPurpose::Initialise));
  std::vector<double> prev_w(n, 1.0 / static_cast<double>(n));
  std::vector<double> prev_logw(n, -std::log(static_cast<double>(n)));
  std::vector<std::size_t> prev_anc(n);
  std::iota(prev_anc.begin(), prev_anc.end(), std::size_t{0});

  Matrix states;
  std::vector<double> logw(n);
  for (std::size_t t = 0; t < T; ++t) {
    const std::uint64_t step_key = derive_seed(seed, t + 1);
    const Vector y = ys.row(static_cast<Eigen::Index>(t)).transpose();

    out.predictive_samples.push_back(
        predictive_draws(gl, tr, prev, prev_w, spec, derive_seed(step_key, StreamPurpose::Predictive)));

    const std::uint64_t prop_key = derive_seed(step_key, StreamPurpose::Propagate);
    if (proposal.is_transition()) {
      k.propagate(tr, prev, {}, prop_key, states);
    } else {
      states.resize(prev.rows(), prev.cols());
      for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng(derive_seed(prop_key, i));
        states.col(static_cast<Eigen::Index>(i)) = proposal.sample(prev.col(static_cast<Eigen::Index>(i)), y, rng);
      }
    }

    k.log_potentials(gl, states, y, logw);
    if (!proposal.is_transition()) {
      for (std::size_t i = 0; i < n; ++i) {
        const Vector x = states.col(static_cast<Eigen::Index>(i));
        const Vector p = prev.col(static_cast<Eigen::Index>(i));
        logw[i] += tr.log_density(x, p) - proposal.log_density(x, p, y);
      }
    }
    for (std::size_t i = 0; i < n; ++i) logw[i] += prev_logw[i];

    kernels::Normalised norm = k.normalise(logw);
    if (!norm.ok) throw DegenerateWeights(t + 1);
    out.log_normalising_increments.push_back(norm.log_mean + std::log(static_cast<double>(n)));
    const double ess = effective_sample_size(norm.weights);
    out.ess.push_back(ess);

    if (spec.store_ensembles) {
      out.ensembles.push_back({states, logs_of(norm.weights), norm.weights, prev_anc, t + 1});
    }

    const bool do_resample = spec.trigger.kind == ResampleTrigger::Kind::Always ||
                             ess < spec.trigger.fraction * static_cast<double>(n);
    if (do_resample) {
      std::vector<std::size_t> anc = resample(norm.weights, n, spec.resampling,
                                              derive_seed(step_key, StreamPurpose::Resample), spec.backend);
      prev = gather(states, anc);
      rec.summarise(t, prev, {});
      std::fill(prev_w.begin(), prev_w.end(), 1.0 / static_cast<double>(n));
      std::fill(prev_logw.begin(), prev_logw.end(), -std::log(static_cast<double>(n)));
      prev_anc = std::move(anc);
    } else {
      rec.summarise(t, states, norm.weights);
      prev = states;
      prev_logw = logs_of(norm.weights);
      prev_w = std::move(norm.weights);
      std::iota(prev_anc.begin(), prev_anc.end(), std::size_t{0});
    }
  }
  return out;
}

FilterOutput run_bpf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                     const FilterSpec& spec, const Matrix& ys, std::uint64_t seed) {
  const TransitionProposal proposal(model.transition);
  return run_generic_pf(model, gl, proposal, spec, ys, seed);
}

std::vector<double> apf_first_stage_log_weights(const GeneralisedLikelihood& gl,
                                                const LinearGaussianTransition& transition,
                                                const Matrix& prev,
                                                std::span<const double> prev_log_weights,
                                                const Vector& y, double stabiliser_fraction,
                                                Backend backend) {
  const Kernels k{backend};
  const Matrix predicted_means = transition.A() * prev;
  std::vector<double> out(static_cast<std::size_t>(prev.cols()));
  k.log_potentials(gl, predicted_means, y, out);
  const double sup = y.allFinite() ? gl.sup_log_potential() : 0.0;
  const double log_c = stabiliser_fraction > 0.0 ? std::log(stabiliser_fraction) + sup : kNegInf;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = prev_log_weights[i] + log_add_exp(out[i], log_c);
  }
  return out;
}

FilterOutput run_apf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                     const FilterSpec& spec, const Matrix& ys, std::uint64_t seed) {
  check_inputs(model, gl, spec, ys);
  const Kernels k{spec.backend};
  const std::size_t n = spec.particles;
  const auto T = static_cast<std::size_t>(ys.rows());
  const LinearGaussianTransition& tr = model.transition;

  FilterOutput out;
  Recorder rec(out, T, model.state_dim(), n);

  Matrix prev = sample_prior(model.prior, n, derive_seed(derive_seed(seed, 0), StreamPurpose::Initialise));
  std::vector<double> prev_w(n, 1.0 / static_cast<double>(n));
  std::vector<double> prev_logw(n, -std::log(static_cast<double>(n)));

  Matrix states;
  std::vector<double> logw(n);
  for (std::size_t t = 0; t < T; ++t) {
    const std::uint64_t step_key = derive_seed(seed, t + 1);
    const Vector y = ys.row(static_cast<Eigen::Index>(t)).transpose();

    out.predictive_samples.push_back(
        predictive_draws(gl, tr, prev, prev_w, spec, derive_seed(step_key, StreamPurpose::Predictive)));

    const std::vector<double> first_stage = apf_first_stage_log_weights(
        gl, tr, prev, prev_logw, y, spec.apf_stabiliser_fraction, spec.backend);
    kernels::Normalised first = k.normalise(first_stage);
    if (!first.ok) throw DegenerateWeights(t + 1);
    const std::vector<std::size_t> picks =
        resample(first.weights, n, ResamplingScheme::Multinomial,
                 derive_seed(step_key, StreamPurpose::FirstStage), spec.backend);

    k.propagate(tr, prev, picks, derive_seed(step_key, StreamPurpose::Propagate), states);
    k.log_potentials(gl, states, y, logw);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = picks[i];
      logw[i] -= first_stage[a] - prev_logw[a];
    }

    kernels::Normalised norm = k.normalise(logw);
    if (!norm.ok) throw DegenerateWeights(t + 1);
    out.log_normalising_increments.push_back(first.log_mean + std::log(static_cast<double>(n)) +
                                             norm.log_mean);
    out.ess.push_back(effective_sample_size(norm.weights));
    rec.summarise(t, states, norm.weights);

    prev_logw = logs_of(norm.weights);
    if (spec.store_ensembles) {
      out.ensembles.push_back({states, prev_logw, norm.weights, picks, t + 1});
    }
    prev = states;
    prev_w = std::move(norm.weights);
  }
  return out;
}

FilterOutput run_filter(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                        const FilterSpec& spec, const Matrix& ys, std::uint64_t seed) {
  switch (spec.kind) {
    case FilterKind::Bootstrap: return run_bpf(model, gl, spec, ys, seed);
    case FilterKind::Auxiliary: return run_apf(model, gl, spec, ys, seed);
    case FilterKind::Generic: break;
  }
  throw ConfigError("generic filters need an explicit proposal; call run_generic_pf");
}

}  // namespace rsmc
