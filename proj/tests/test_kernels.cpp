#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <omp.h>

#include "helpers.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/filters.hpp"
#include "rsmc/kernels.hpp"

using namespace rsmc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> counts_of(const std::vector<std::size_t>& anc, std::size_t k) {
  std::vector<double> c(k, 0.0);
  for (auto a : anc) c[a] += 1.0;
  return c;
}

double chi_square(const std::vector<double>& counts, const std::vector<double>& probs, double n) {
  double x = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    x += (counts[i] - e) * (counts[i] - e) / e;
  }
  return x;
}

std::vector<double> skewed_weights(std::size_t k) {
  std::vector<double> w(k);
  for (std::size_t i = 0; i < k; ++i) w[i] = 1.0 + static_cast<double>(i * i % 7);
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= s;
  return w;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("normalise examples") {
  auto a = normalise_log_weights(std::vector<double>{0, 0, 0, 0});
  for (double w : a.weights) CHECK(w == doctest::Approx(0.25));
  CHECK(a.log_mean == doctest::Approx(0.0));

  auto b = normalise_log_weights(std::vector<double>{0, -kInf});
  CHECK(b.weights[0] == 1.0);
  CHECK(b.weights[1] == 0.0);

  auto c = normalise_log_weights(std::vector<double>{1000.0, 1000.0 + std::log(3.0)});
  CHECK(c.weights[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(c.weights[1] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(c.log_mean == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));

  CHECK_THROWS_AS(normalise_log_weights(std::vector<double>{-kInf, -kInf}, 7), DegenerateWeights);
  try {
    normalise_log_weights(std::vector<double>{-kInf}, 7);
  } catch (const DegenerateWeights& e) {
    CHECK(e.step() == 7);
  }
}

TEST_CASE("normalised weights sum to one") {
  CounterRng rng(17);
  std::vector<double> lw(5000);
  for (double& v : lw) v = 50.0 * rng.normal();
  auto n = normalise_log_weights(lw);
  CHECK(std::abs(std::accumulate(n.weights.begin(), n.weights.end(), 0.0) - 1.0) < 1e-12);
  auto r = kernels::reference::normalise(lw);
  for (std::size_t i = 0; i < lw.size(); ++i) CHECK(std::abs(r.weights[i] - n.weights[i]) < 1e-15);
}

TEST_CASE("effective sample size examples") {
  CHECK(effective_sample_size(std::vector<double>(100, 0.01)) == doctest::Approx(100.0));
  CHECK(effective_sample_size(std::vector<double>{0, 1, 0}) == 1.0);
  CHECK(effective_sample_size(std::vector<double>{0.5, 0.5, 0, 0}) == doctest::Approx(2.0));
}

TEST_CASE("resampling edge cases") {
  std::vector<double> onehot(6, 0.0);
  onehot[3] = 1.0;
  for (auto scheme : {ResamplingScheme::Multinomial, ResamplingScheme::Systematic})
    for (auto backend : {Backend::Reference, Backend::Parallel})
      for (auto a : resample(onehot, 50, scheme, 9, backend)) CHECK(a == 3);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto anc = resample(std::vector<double>{0.5, 0.5}, 4, ResamplingScheme::Systematic, seed);
    auto c = counts_of(anc, 2);
    REQUIRE(c[0] == 2.0);
    REQUIRE(c[1] == 2.0);
  }
}

TEST_CASE("multinomial resampling passes chi-square tests") {
  const std::size_t n = 100000;
  // critical values at the 0.001 level
  {
    const std::vector<double> uniform(100, 0.01);
    auto anc = resample(uniform, n, ResamplingScheme::Multinomial, 123);
    CHECK(chi_square(counts_of(anc, 100), uniform, n) < 148.23);
  }
  {
    const auto w = skewed_weights(10);
    auto anc = resample(w, n, ResamplingScheme::Multinomial, 321);
    CHECK(chi_square(counts_of(anc, 10), w, n) < 27.88);
  }
}

TEST_CASE("resampling schemes are unbiased") {
  const auto w = skewed_weights(10);
  const std::size_t particles = 10, reps = 100000;
  for (auto scheme : {ResamplingScheme::Multinomial, ResamplingScheme::Systematic}) {
    std::vector<double> sum(10, 0.0), sumsq(10, 0.0);
    for (std::size_t r = 0; r < reps; ++r) {
      auto c = counts_of(resample(w, particles, scheme, derive_seed(77, r)), 10);
      for (std::size_t i = 0; i < 10; ++i) {
        sum[i] += c[i];
        sumsq[i] += c[i] * c[i];
      }
    }
    for (std::size_t i = 0; i < 10; ++i) {
      const double mean = sum[i] / reps;
      const double sd = std::sqrt(std::max(sumsq[i] / reps - mean * mean, 1e-12));
      CHECK(std::abs(mean - particles * w[i]) < 3.0 * sd / std::sqrt(double(reps)) + 1e-12);
    }
  }
}

TEST_CASE("systematic counts are floor or ceiling of N w") {
  const auto w = skewed_weights(10);
  const std::size_t n = 100000;
  auto c = counts_of(resample(w, n, ResamplingScheme::Systematic, 5), 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(c[i] >= std::floor(n * w[i]) - 1e-9);
    CHECK(c[i] <= std::ceil(n * w[i]) + 1e-9);
  }
}

TEST_CASE("reference and parallel kernels agree") {
  const Eigen::Index d = 4, n = 1000;
  LinearGaussianTransition tr(testing::random_stable(d, 2), testing::random_spd(d, 3));
  Matrix prev(d, n);
  CounterRng rng(4);
  for (Eigen::Index i = 0; i < prev.size(); ++i) prev.data()[i] = rng.normal();
  std::vector<std::size_t> anc(n);
  for (auto& a : anc) a = rng() % static_cast<std::uint64_t>(n);

  Matrix a, b;
  kernels::reference::propagate(tr, prev, anc, 99, a);
  kernels::parallel::propagate(tr, prev, anc, 99, b);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);

  auto gl = GeneralisedLikelihood::beta(
      LikelihoodFamily::gaussian(ObservationMap::linear(Matrix::Identity(2, 4)), Matrix::Identity(2, 2)), 0.1);
  Vector y(2);
  y << 0.3, -1.0;
  std::vector<double> la(n), lb(n);
  kernels::reference::log_potentials(gl, a, y, la);
  kernels::parallel::log_potentials(gl, a, y, lb);
  for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(la[i] - lb[i]) < 1e-12);

  auto na = kernels::reference::normalise(la), nb = kernels::parallel::normalise(lb);
  for (Eigen::Index i = 0; i < n; ++i) CHECK(std::abs(na.weights[i] - nb.weights[i]) < 1e-15);
  CHECK(kernels::reference::multinomial(na.weights, n, 5) == kernels::parallel::multinomial(na.weights, n, 5));
  CHECK(kernels::reference::systematic(na.weights, n, 5) == kernels::parallel::systematic(na.weights, n, 5));
}

TEST_CASE("parallel kernels are thread-count invariant") {
  const Eigen::Index d = 3, n = 3000;
  LinearGaussianTransition tr(testing::random_stable(d, 8), testing::random_spd(d, 9));
  Matrix prev = Matrix::Ones(d, n);
  std::vector<Matrix> outs;
  std::vector<std::vector<double>> weights;
  for (int threads : {1, 2, 8}) {
    omp_set_num_threads(threads);
    Matrix out;
    kernels::parallel::propagate(tr, prev, {}, 11, out);
    outs.push_back(out);
    std::vector<double> lw(n);
    for (Eigen::Index i = 0; i < n; ++i) lw[i] = -out.col(i).squaredNorm();
    weights.push_back(kernels::parallel::normalise(lw).weights);
  }
  omp_set_num_threads(omp_get_num_procs());
  CHECK(outs[0] == outs[1]);
  CHECK(outs[0] == outs[2]);
  CHECK(weights[0] == weights[1]);
  CHECK(weights[0] == weights[2]);
}

TEST_CASE("missing observations leave weights untouched") {
  auto gl = GeneralisedLikelihood::standard(
      LikelihoodFamily::gaussian(testing::identity_map(1), Matrix::Identity(1, 1)));
  Matrix states = Matrix::Random(1, 10);
  std::vector<double> out(10, 5.0);
  kernels::parallel::log_potentials(gl, states, Vector::Constant(1, std::nan("")), out);
  for (double v : out) CHECK(v == 0.0);
}

}
