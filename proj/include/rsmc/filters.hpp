#pragma once

// Generalised particle filters: the generic sequential importance resampler,
// the (beta-)bootstrap filter and the (beta-)auxiliary filter.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rsmc/models.hpp"

namespace rsmc {

enum class FilterKind { Bootstrap, Auxiliary, Generic };
enum class ResamplingScheme { Multinomial, Systematic };
enum class Backend { Reference, Parallel };

struct ResampleTrigger {
  enum class Kind { Always, EssBelow };
  Kind kind = Kind::Always;
  double fraction = 1.0;

  static ResampleTrigger always() { return {}; }
  static ResampleTrigger ess_below(double fraction) { return {Kind::EssBelow, fraction}; }
};

struct FilterSpec {
  FilterKind kind = FilterKind::Bootstrap;
  std::size_t particles = 1000;
  ResamplingScheme resampling = ResamplingScheme::Multinomial;
  ResampleTrigger trigger = ResampleTrigger::always();
  /// c_t = fraction * sup G for the auxiliary filter's first stage.
  double apf_stabiliser_fraction = 0.05;
  /// One-step-ahead predictive observation draws kept per step; 0 means one per particle.
  std::size_t predictive_draws = 0;
  /// Add likelihood noise to predictive draws (y ~ g(.|x)) instead of y = h(x).
  bool predictive_noise = false;
  /// Keep every weighted pre-resampling ensemble (needed for FFBS).
  bool store_ensembles = false;
  Backend backend = Backend::Parallel;

  /// Throws ConfigError.
  void validate() const;
};

/// Weighted particle cloud at one step, before resampling.
struct ParticleEnsemble {
  Matrix states;                        // state_dim x N
  std::vector<double> log_weights;      // normalised: logsumexp == 0
  std::vector<double> weights;          // sums to 1
  std::vector<std::size_t> ancestors;   // indices into the previous stored ensemble
  std::size_t time_index = 0;
};

struct FilterOutput {
  Matrix means;      // T x state_dim
  Matrix variances;  // T x state_dim
  Matrix lower;      // 5% marginal quantiles, T x state_dim
  Matrix upper;      // 95% marginal quantiles, T x state_dim
  std::vector<double> ess;
  std::vector<double> log_normalising_increments;
  std::vector<Matrix> predictive_samples;  // per step: obs_dim x predictive_draws
  std::vector<ParticleEnsemble> ensembles;
  std::size_t particles = 0;

  std::size_t steps() const { return ess.size(); }
  double log_evidence() const;
};

struct NormalisedWeights {
  std::vector<double> weights;
  /// log((1/N) sum exp(log_weights)).
  double log_mean = 0.0;
};

/// Max-shifted normalisation. Throws DegenerateWeights(step) when nothing survives.
NormalisedWeights normalise_log_weights(std::span<const double> log_weights, std::size_t step = 0);

/// 1 / sum w_i^2.
double effective_sample_size(std::span<const double> weights);

std::vector<std::size_t> resample(std::span<const double> weights, std::size_t n,
                                  ResamplingScheme scheme, std::uint64_t key,
                                  Backend backend = Backend::Parallel);

/// Importance proposal q_t(x_t | x_{t-1}, y_t).
class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual Vector sample(const Vector& prev, const Vector& y, CounterRng& rng) const = 0;
  virtual double log_density(const Vector& x, const Vector& prev, const Vector& y) const = 0;
  /// True when q_t == f_t, so the f/q ratio is identically one.
  virtual bool is_transition() const { return false; }
};

/// q_t = f_t.
class TransitionProposal final : public Proposal {
 public:
  explicit TransitionProposal(const LinearGaussianTransition& transition) : transition_(transition) {}
  Vector sample(const Vector& prev, const Vector& y, CounterRng& rng) const override;
  double log_density(const Vector& x, const Vector& prev, const Vector& y) const override;
  bool is_transition() const override { return true; }

 private:
  const LinearGaussianTransition& transition_;
};

/// N(A x_{t-1}, scale^2 Q): the transition with widened noise.
class ScaledTransitionProposal final : public Proposal {
 public:
  ScaledTransitionProposal(const LinearGaussianTransition& transition, double scale);
  Vector sample(const Vector& prev, const Vector& y, CounterRng& rng) const override;
  double log_density(const Vector& x, const Vector& prev, const Vector& y) const override;

 private:
  const LinearGaussianTransition& transition_;
  LinearGaussianTransition widened_;
};

/// Ys is T x obs_dim; rows containing NaN are treated as missing (no weighting).
FilterOutput run_generic_pf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                            const Proposal& proposal, const FilterSpec& spec, const Matrix& ys,
                            std::uint64_t seed);

FilterOutput run_bpf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                     const FilterSpec& spec, const Matrix& ys, std::uint64_t seed);

FilterOutput run_apf(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                     const FilterSpec& spec, const Matrix& ys, std::uint64_t seed);

/// Dispatches on spec.kind (Bootstrap or Auxiliary).
FilterOutput run_filter(const StateSpaceModel& model, const GeneralisedLikelihood& gl,
                        const FilterSpec& spec, const Matrix& ys, std::uint64_t seed);

/// log(w_{t-1}^(i) * (G(A x_{t-1}^(i)) + c_t)), unnormalised.
std::vector<double> apf_first_stage_log_weights(const GeneralisedLikelihood& gl,
                                                const LinearGaussianTransition& transition,
                                                const Matrix& prev,
                                                std::span<const double> prev_log_weights,
                                                const Vector& y, double stabiliser_fraction,
                                                Backend backend = Backend::Parallel);

/// Type-7 (linear interpolation) quantile of unweighted samples.
double sample_quantile(std::span<const double> values, double q);

/// Smallest value whose cumulative weight reaches q.
double weighted_quantile(std::span<const double> values, std::span<const double> weights, double q);

}  // namespace rsmc
