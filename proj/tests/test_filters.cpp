#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <vector>

#include <omp.h>

#include "helpers.hpp"
#include "properties.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/filters.hpp"
#include "rsmc/kalman.hpp"

using namespace rsmc;

namespace {

// The transition, but routed through the generic importance-weight path.
class CopyOfTransition final : public Proposal {
 public:
  explicit CopyOfTransition(const LinearGaussianTransition& t) : t_(t) {}
  Vector sample(const Vector& prev, const Vector&, CounterRng& rng) const override { return t_.sample(prev, rng); }
  double log_density(const Vector& x, const Vector& prev, const Vector&) const override {
    return t_.log_density(x, prev);
  }

 private:
  const LinearGaussianTransition& t_;
};

StateSpaceModel scalar_model(double a, double q, double r, double prior_var = 1.0) {
  return {GaussianDensity(Vector::Zero(1), Matrix::Constant(1, 1, prior_var)),
          LinearGaussianTransition(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, q)),
          LikelihoodFamily::gaussian(testing::identity_map(1), Matrix::Constant(1, 1, r))};
}

}  // namespace

TEST_SUITE("filters") {

TEST_CASE("filter spec validation") {
  FilterSpec s;
  s.particles = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.particles = 10;
  s.trigger = ResampleTrigger::ess_below(0.0);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.trigger = ResampleTrigger::ess_below(0.5);
  CHECK_NOTHROW(s.validate());
  const auto model = scalar_model(1, 1, 1);
  CHECK_THROWS_AS(run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), FilterSpec{}, Matrix(3, 2), 1),
                  ConfigError);
}

TEST_CASE("bootstrap filter tracks the Kalman filter on a 4-D model") {
  const auto c = props::pf_matches_kalman();
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("Monte Carlo error decays at the square-root rate") {
  const auto c = props::monte_carlo_rate();
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("one-step conjugate posterior") {
  const auto model = scalar_model(1.0, 1.0, 1.0);
  FilterSpec spec;
  spec.particles = 100000;
  const Matrix ys = Matrix::Constant(1, 1, 1.0);
  const auto out = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, ys, 3);
  // x1 ~ N(0, 2), y ~ N(x1, 1): posterior N(2/3, 2/3)
  const double se = std::sqrt(2.0 * (2.0 / 3.0) / 1e5);
  CHECK(std::abs(out.means(0, 0) - 2.0 / 3.0) < 4 * se);
  CHECK(out.variances(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(0.02));
  CHECK(out.log_evidence() == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi * 3.0) - 1.0 / 6.0).epsilon(0.01));
}

TEST_CASE("generic filter with the transition as proposal reduces to the bootstrap filter") {
  const auto sys = props::random_lgssm(3, 2, 30, 17);
  const auto model = sys.model();
  const auto gl = GeneralisedLikelihood::beta(model.likelihood, 0.2);
  FilterSpec spec;
  spec.particles = 700;
  const auto bpf = run_bpf(model, gl, spec, sys.ys, 12);
  const auto gen = run_generic_pf(model, gl, TransitionProposal(model.transition), spec, sys.ys, 12);
  CHECK(bpf.means == gen.means);
  CHECK(bpf.ess == gen.ess);

  spec.backend = Backend::Reference;
  const auto ref = run_bpf(model, gl, spec, sys.ys, 12);
  const auto copy = run_generic_pf(model, gl, CopyOfTransition(model.transition), spec, sys.ys, 12);
  CHECK((ref.means - copy.means).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t t = 0; t < ref.ess.size(); ++t) CHECK(ref.ess[t] == doctest::Approx(copy.ess[t]).epsilon(1e-10));
}

TEST_CASE("widened proposal stays consistent with the Kalman filter") {
  const auto sys = props::random_lgssm(2, 1, 20, 23);
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 20000;
  const auto out = run_generic_pf(model, GeneralisedLikelihood::standard(model.likelihood),
                                  ScaledTransitionProposal(model.transition, 1.5), spec, sys.ys, 4);
  const auto kf = sys.kalman();
  const Matrix km = belief_means(kf.filtered), kv = belief_variances(kf.filtered);
  CHECK(((out.means - km).array().abs() / (kv.array() / 20000.0 * 10.0).sqrt()).maxCoeff() < 4.0);
}

TEST_CASE("reference and parallel backends give the same filter") {
  const auto sys = props::random_lgssm(4, 2, 40, 5);
  const auto model = sys.model();
  const auto gl = GeneralisedLikelihood::beta(model.likelihood, 0.1);
  for (auto kind : {FilterKind::Bootstrap, FilterKind::Auxiliary}) {
    FilterSpec spec;
    spec.kind = kind;
    spec.particles = 1500;
    const auto par = run_filter(model, gl, spec, sys.ys, 8);
    spec.backend = Backend::Reference;
    const auto ref = run_filter(model, gl, spec, sys.ys, 8);
    CHECK((par.means - ref.means).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((par.predictive_samples.back() - ref.predictive_samples.back()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("filters are thread-count invariant") {
  const auto sys = props::random_lgssm(4, 2, 30, 6);
  const auto model = sys.model();
  const auto gl = GeneralisedLikelihood::beta(model.likelihood, 0.1);
  for (auto kind : {FilterKind::Bootstrap, FilterKind::Auxiliary}) {
    FilterSpec spec;
    spec.kind = kind;
    spec.particles = 2000;
    std::vector<FilterOutput> outs;
    for (int threads : {1, 2, 8}) {
      omp_set_num_threads(threads);
      outs.push_back(run_filter(model, gl, spec, sys.ys, 31));
    }
    omp_set_num_threads(omp_get_num_procs());
    for (std::size_t i = 1; i < outs.size(); ++i) {
      CHECK(outs[i].means == outs[0].means);
      CHECK(outs[i].lower == outs[0].lower);
      CHECK(outs[i].ess == outs[0].ess);
      CHECK(outs[i].predictive_samples.back() == outs[0].predictive_samples.back());
    }
  }
}

TEST_CASE("ESS stays within [1, N]") {
  const auto sys = props::random_lgssm(2, 2, 50, 8);
  const auto model = sys.model();
  for (auto kind : {FilterKind::Bootstrap, FilterKind::Auxiliary}) {
    FilterSpec spec;
    spec.kind = kind;
    spec.particles = 300;
    const auto out = run_filter(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 1);
    REQUIRE(out.steps() == 50);
    for (double e : out.ess) {
      CHECK(e >= 1.0 - 1e-9);
      CHECK(e <= 300.0 + 1e-9);
    }
  }
}

TEST_CASE("uninformative steps keep the full ESS after resampling") {
  const auto model = scalar_model(0.9, 0.5, 1.0);
  Matrix ys = Matrix::Constant(5, 1, std::numeric_limits<double>::quiet_NaN());
  FilterSpec spec;
  spec.particles = 200;
  const auto out = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, ys, 2);
  for (double e : out.ess) CHECK(e == doctest::Approx(200.0));
  CHECK(out.log_evidence() == doctest::Approx(0.0));
}

TEST_CASE("missing observations are prediction-only steps") {
  const auto sys = props::random_lgssm(2, 1, 30, 41);
  Matrix ys = sys.ys;
  for (int t : {3, 4, 17}) ys(t, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 5000;
  std::vector<Matrix> means;
  for (std::uint64_t r = 0; r < 4; ++r)
    means.push_back(run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, ys, 9 + r).means);
  const auto kf = kalman_filter(sys.A, sys.Q, sys.H, sys.R, sys.prior, ys);
  const Matrix km = belief_means(kf.filtered), kv = belief_variances(kf.filtered);
  const Matrix nominal = kv / 5000.0;
  const double inflation = props::pooled_inflation(means, nominal);
  CHECK(means.front().allFinite());
  CHECK(((means.front() - km).array().abs() / (nominal.array() * inflation).sqrt()).maxCoeff() < 4.0);
  CHECK(kf.log_likelihoods[3] == 0.0);
}

TEST_CASE("auxiliary first stage by hand") {
  // Q -> 0: the first stage sees w_{t-1} (G(A x) + c).
  const LinearGaussianTransition tr(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 1e-12));
  const auto fam = LikelihoodFamily::gaussian(testing::identity_map(1), Matrix::Identity(1, 1));
  const auto gl = GeneralisedLikelihood::standard(fam);
  Matrix prev(1, 3);
  prev << -2.0, 0.0, 4.0;
  const std::vector<double> w{0.2, 0.5, 0.3};
  std::vector<double> lw;
  for (double v : w) lw.push_back(std::log(v));
  const Vector y = Vector::Constant(1, 1.0);
  const auto first = apf_first_stage_log_weights(gl, tr, prev, lw, y, 0.05, Backend::Reference);
  const double sup = 1.0 / std::sqrt(2 * std::numbers::pi);
  std::vector<double> expected;
  double total = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double m = 0.5 * prev(0, i);
    const double g = sup * std::exp(-0.5 * (1.0 - m) * (1.0 - m));
    expected.push_back(w[i] * (g + 0.05 * sup));
    total += expected.back();
  }
  const auto got = normalise_log_weights(first).weights;
  for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(expected[i] / total).epsilon(1e-12));
  const auto par = apf_first_stage_log_weights(gl, tr, prev, lw, y, 0.05, Backend::Parallel);
  for (int i = 0; i < 3; ++i) CHECK(par[i] == doctest::Approx(first[i]).epsilon(1e-14));
}

TEST_CASE("auxiliary first stage becomes uniform in a flat region") {
  const LinearGaussianTransition tr(Matrix::Identity(1, 1), Matrix::Constant(1, 1, 1.0));
  const auto gl = GeneralisedLikelihood::beta(
      LikelihoodFamily::gaussian(testing::identity_map(1), Matrix::Identity(1, 1)), 0.1);
  Matrix prev(1, 4);
  prev << 0.0, 1.0, -1.0, 2.0;
  const std::vector<double> lw(4, std::log(0.25));
  const auto first = normalise_log_weights(
      apf_first_stage_log_weights(gl, tr, prev, lw, Vector::Constant(1, 1e4), 0.05)).weights;
  for (double v : first) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("auxiliary filter tracks the Kalman filter") {
  const auto sys = props::random_lgssm(2, 1, 30, 12);
  const auto model = sys.model();
  FilterSpec spec;
  spec.kind = FilterKind::Auxiliary;
  spec.particles = 20000;
  const auto out = run_apf(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 4);
  const auto kf = sys.kalman();
  const Matrix km = belief_means(kf.filtered), kv = belief_variances(kf.filtered);
  CHECK(((out.means - km).array().abs() / (kv.array() * 4.0 / 20000.0).sqrt()).maxCoeff() < 4.0);
  CHECK(out.log_evidence() == doctest::Approx(std::accumulate(kf.log_likelihoods.begin(), kf.log_likelihoods.end(), 0.0)).epsilon(0.01));
}

TEST_CASE("tiny beta follows the standard filter") {
  const auto sys = props::random_lgssm(2, 2, 20, 3);
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 1000;
  const auto a = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 5);
  const auto b = run_bpf(model, GeneralisedLikelihood::beta(model.likelihood, 1e-6), spec, sys.ys, 5);
  CHECK((a.means - b.means).cwiseAbs().maxCoeff() < 1e-3);
  for (std::size_t t = 0; t < a.ess.size(); ++t) CHECK(a.ess[t] == doctest::Approx(b.ess[t]).epsilon(1e-4));
}

TEST_CASE("predictive draws") {
  const auto sys = props::random_lgssm(2, 2, 10, 3);
  const auto model = sys.model();
  const auto gl = GeneralisedLikelihood::standard(model.likelihood);
  FilterSpec spec;
  spec.particles = 400;
  auto out = run_bpf(model, gl, spec, sys.ys, 5);
  CHECK(out.predictive_samples.size() == 10);
  CHECK(out.predictive_samples[0].rows() == 2);
  CHECK(out.predictive_samples[0].cols() == 400);
  spec.predictive_draws = 7;
  out = run_bpf(model, gl, spec, sys.ys, 5);
  CHECK(out.predictive_samples[3].cols() == 7);
}

TEST_CASE("ESS threshold trigger and systematic resampling") {
  const auto sys = props::random_lgssm(2, 1, 30, 44);
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 20000;
  spec.resampling = ResamplingScheme::Systematic;
  spec.trigger = ResampleTrigger::ess_below(0.5);
  const auto out = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 4);
  const auto kf = sys.kalman();
  const Matrix km = belief_means(kf.filtered), kv = belief_variances(kf.filtered);
  CHECK(((out.means - km).array().abs() / (kv.array() * 4.0 / 20000.0).sqrt()).maxCoeff() < 4.0);
}

TEST_CASE("degenerate weights abort with the step") {
  const auto model = scalar_model(1.0, 1.0, 1.0);
  Matrix ys(3, 1);
  ys << 0.0, 1e300, 0.0;
  FilterSpec spec;
  spec.particles = 50;
  try {
    run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, ys, 1);
    FAIL("expected DegenerateWeights");
  } catch (const DegenerateWeights& e) {
    CHECK(e.step() == 2);
  }
}

TEST_CASE("weighted and sample quantiles") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(sample_quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(sample_quantile(v, 0.0) == 1.0);
  CHECK(sample_quantile(v, 1.0) == 4.0);
  CHECK(weighted_quantile(v, std::vector<double>{0.1, 0.1, 0.7, 0.1}, 0.5) == 3.0);
}

}
