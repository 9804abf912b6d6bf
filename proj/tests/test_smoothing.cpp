#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "properties.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/smoothing.hpp"

using namespace rsmc;

TEST_SUITE("smoothing") {

TEST_CASE("FFBS means agree with RTS") {
  const auto c = props::ffbs_matches_rts();
  INFO(c.detail);
  CHECK(c.pass);
}

TEST_CASE("backward pass cost is N M (T - 1) kernel evaluations") {
  for (std::size_t T : {5u, 20u}) {
    const auto sys = props::random_lgssm(2, 1, T, 3);
    const auto model = sys.model();
    FilterSpec spec;
    spec.particles = 200;
    spec.store_ensembles = true;
    const auto out = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 1);
    const auto tr = ffbs(out, model.transition, 50, 2);
    CHECK(tr.kernel_evaluations == 200 * 50 * (T - 1));
    CHECK(tr.trajectories() == 50);
    CHECK(tr.states.size() == T);
  }
}

TEST_CASE("trajectories stay on the stored ensembles") {
  const auto sys = props::random_lgssm(2, 1, 8, 4);
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 100;
  spec.store_ensembles = true;
  const auto out = run_bpf(model, GeneralisedLikelihood::beta(model.likelihood, 0.2), spec, sys.ys, 1);
  const auto tr = ffbs(out, model.transition, 40, 2);
  for (std::size_t t = 0; t < tr.states.size(); ++t) {
    for (Eigen::Index m = 0; m < 40; ++m) {
      bool found = false;
      for (Eigen::Index i = 0; i < 100 && !found; ++i) found = tr.states[t].col(m) == out.ensembles[t].states.col(i);
      CHECK(found);
    }
  }
}

TEST_CASE("a single step samples the filtering ensemble") {
  const auto sys = props::random_lgssm(1, 1, 1, 9);
  const auto model = sys.model();
  FilterSpec spec;
  spec.particles = 2000;
  spec.store_ensembles = true;
  const auto out = run_bpf(model, GeneralisedLikelihood::standard(model.likelihood), spec, sys.ys, 1);
  const auto tr = ffbs(out, model.transition, 20000, 2);
  double wm = 0.0, wv = 0.0;
  const auto& e = out.ensembles[0];
  for (Eigen::Index i = 0; i < 2000; ++i) wm += e.weights[i] * e.states(0, i);
  for (Eigen::Index i = 0; i < 2000; ++i) wv += e.weights[i] * (e.states(0, i) - wm) * (e.states(0, i) - wm);
  CHECK(std::abs(tr.means()(0, 0) - wm) < 4.0 * std::sqrt(wv / 20000.0));
  CHECK(tr.kernel_evaluations == 0);
}

TEST_CASE("near-deterministic dynamics pick the compatible ancestor") {
  Matrix A = Matrix::Identity(1, 1);
  const LinearGaussianTransition tight(A, Matrix::Constant(1, 1, 1e-10));
  FilterOutput fwd;
  ParticleEnsemble e0, e1;
  e0.states = Matrix(1, 3);
  e0.states << -1.0, 0.0, 1.0;
  e0.weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  e0.log_weights = {std::log(1.0 / 3), std::log(1.0 / 3), std::log(1.0 / 3)};
  e1.states = Matrix(1, 3);
  e1.states << 1.0, 1.0, 1.0;
  e1.weights = e0.weights;
  e1.log_weights = e0.log_weights;
  fwd.ensembles = {e0, e1};
  const auto tr = ffbs(fwd, tight, 100, 3);
  for (Eigen::Index m = 0; m < 100; ++m) CHECK(tr.states[0](0, m) == 1.0);
}

TEST_CASE("incompatible ensembles raise a backward degeneracy") {
  const LinearGaussianTransition tight(Matrix::Identity(1, 1), Matrix::Constant(1, 1, 1e-300));
  FilterOutput fwd;
  ParticleEnsemble e0, e1;
  e0.states = Matrix::Constant(1, 2, 0.0);
  e0.weights = {0.5, 0.5};
  e0.log_weights = {std::log(0.5), std::log(0.5)};
  e1.states = Matrix::Constant(1, 2, 1e200);
  e1.weights = e0.weights;
  e1.log_weights = e0.log_weights;
  fwd.ensembles = {e0, e1};
  CHECK_THROWS_AS(ffbs(fwd, tight, 5, 3), DegenerateBackwardKernel);
  CHECK_THROWS_AS(ffbs(FilterOutput{}, tight, 5, 3), ConfigError);
}

}
