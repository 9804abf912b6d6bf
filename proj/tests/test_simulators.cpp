#include <doctest.h>

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/MatrixFunctions>

#include "helpers.hpp"
#include "properties.hpp"
#include "rsmc/errors.hpp"
#include "rsmc/simulators.hpp"

using namespace rsmc;

namespace {

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// Taylor series after scaling by 2^-s, then repeated squaring, in long double.
Matrix series_exp(const Matrix& M) {
  const LongMatrix L = M.cast<long double>();
  int s = 0;
  long double norm = L.cwiseAbs().rowwise().sum().maxCoeff();
  while (norm > 0.01L) {
    norm /= 2.0L;
    ++s;
  }
  const LongMatrix X = L / std::ldexp(1.0L, s);
  LongMatrix term = LongMatrix::Identity(M.rows(), M.cols()), sum = term;
  for (int k = 1; k < 40; ++k) {
    term = term * X / (long double)k;
    sum += term;
  }
  for (int i = 0; i < s; ++i) sum = sum * sum;
  return sum.cast<double>();
}

}  // namespace

TEST_SUITE("simulators") {

TEST_CASE("noise-free rollouts") {
  const Matrix states = simulate_states(Matrix::Identity(3, 3), Matrix::Zero(3, 3), Vector::Ones(3), 20, 1);
  CHECK(states.rows() == 20);
  for (Eigen::Index t = 0; t < 20; ++t) CHECK(states.row(t) == Vector::Ones(3).transpose());

  const auto sys = wiener_velocity_system(0.1);
  const Matrix w = simulate_states(sys.A, Matrix::Zero(4, 4), (Vector(4) << 0, 0, 1, 0).finished(), 10, 1);
  for (Eigen::Index t = 0; t < 10; ++t) {
    CHECK(w(t, 0) == doctest::Approx(0.1 * double(t + 1)).epsilon(1e-12));
    CHECK(w(t, 1) == 0.0);
  }
  const auto obs = observe(w, ObservationMap::linear(sys.H), Matrix::Zero(2, 2), 3);
  CHECK(obs.clean_obs == w.leftCols(2));
}

TEST_CASE("wiener velocity matrices") {
  const auto sys = wiener_velocity_system(0.1);
  CHECK(sys.A(0, 2) == doctest::Approx(0.1));
  CHECK(sys.A(1, 3) == doctest::Approx(0.1));
  CHECK(sys.Q(0, 0) == doctest::Approx(0.001 / 3.0));
  CHECK(sys.Q(0, 2) == doctest::Approx(0.005));
  CHECK(sys.Q(2, 2) == doctest::Approx(0.1));
  CHECK(sys.H == Matrix::Identity(2, 4));
  CHECK_THROWS_AS(wiener_velocity_system(0.0), ConfigError);
}

TEST_CASE("state covariance growth matches propagation") {
  const Matrix A = testing::random_stable(2, 5, 0.9);
  const Matrix Q = testing::random_spd(2, 6);
  Matrix P = Matrix::Zero(2, 2);
  for (int t = 0; t < 3; ++t) P = A * P * A.transpose() + Q;
  const int n = 10000;
  Matrix s = Matrix::Zero(2, 2), s2 = Matrix::Zero(2, 2);
  for (int r = 0; r < n; ++r) {
    const Matrix x = simulate_states(A, Q, Vector::Zero(2), 3, derive_seed(8, r));
    const Vector x3 = x.row(2).transpose();
    const Matrix o = x3 * x3.transpose();
    s += o;
    s2 += o.cwiseProduct(o);
  }
  s /= n;
  s2 /= n;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(s(i, j) - P(i, j)) < 3.0 * std::sqrt((s2(i, j) - s(i, j) * s(i, j)) / n));
}

TEST_CASE("simulators are deterministic in the seed") {
  const auto sys = wiener_velocity_system(0.1);
  const auto fam = LikelihoodFamily::gaussian(ObservationMap::linear(sys.H), Matrix::Identity(2, 2));
  const auto a = simulate_lgssm(sys.A, sys.Q, Vector::Zero(4), fam, 50, 7);
  const auto b = simulate_lgssm(sys.A, sys.Q, Vector::Zero(4), fam, 50, 7);
  const auto c = simulate_lgssm(sys.A, sys.Q, Vector::Zero(4), fam, 50, 8);
  CHECK(a.clean_obs == b.clean_obs);
  CHECK(a.states == b.states);
  CHECK(a.clean_obs != c.clean_obs);
  CHECK((a.signal + a.noise - a.clean_obs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("contamination") {
  const Eigen::Index T = 100000;
  LgssmSimulation sim;
  sim.signal = Matrix::Zero(T, 2);
  sim.noise = Matrix::Zero(T, 2);
  CounterRng rng(3);
  for (Eigen::Index i = 0; i < sim.noise.size(); ++i) sim.noise.data()[i] = rng.normal();
  sim.clean_obs = sim.signal + sim.noise;
  sim.states = Matrix::Zero(T, 2);

  SUBCASE("no contamination at p = 0") {
    const auto c = contaminate(sim, AdditiveGaussian{0.0, 100.0}, 1);
    CHECK(c.obs == sim.clean_obs);
    for (bool f : c.flags) CHECK_FALSE(f);
  }
  SUBCASE("flag rate") {
    for (double p : {0.05, 0.1, 0.5}) {
      const auto c = contaminate(sim, AdditiveStudentT{p, 1.0, 20.0}, 2);
      double hits = 0;
      for (bool f : c.flags) hits += f;
      CHECK(std::abs(hits / T - p) <= 3.0 * std::sqrt(p * (1 - p) / T));
      for (Eigen::Index t = 0; t < 1000; ++t) {
        if (!c.flags[t]) CHECK(c.obs.row(t) == sim.clean_obs.row(t));
      }
    }
  }
  SUBCASE("additive gaussian scale") {
    const auto c = contaminate(sim, AdditiveGaussian{1.0, 100.0}, 3);
    const Matrix d = c.obs - sim.clean_obs;
    const double sd = std::sqrt(d.col(0).squaredNorm() / T);
    CHECK(std::abs(sd - 100.0) < 3.0 * 100.0 / std::sqrt(2.0 * T));
  }
  SUBCASE("multiplicative exponential scale") {
    const auto c = contaminate(sim, MultiplicativeExponential{1.0, 1000.0}, 4);
    const Matrix resid = c.obs - sim.signal;
    const Eigen::ArrayXd ratio = resid.col(0).array().abs();
    const double base = sim.noise.col(0).cwiseAbs().mean();
    const double mean = ratio.mean();
    const double se = std::sqrt((ratio - mean).square().mean() / T);
    CHECK(std::abs(mean - 1000.0 * base) < 3.0 * se);
    CHECK_THROWS_AS(contaminate(sim.clean_obs, MultiplicativeExponential{1.0, 1000.0}, 4), ConfigError);
  }
  CHECK(contamination_probability(AdditiveGaussian{0.3, 1.0}) == 0.3);
  CHECK(contamination_probability(NoContamination{}) == 0.0);
}

TEST_CASE("elevation map") {
  const DemParams dem;
  CHECK(peaks(0, 0) == doctest::Approx(200.0 * 8.0 / 3.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(dem_elevation(0, 0, dem) == doctest::Approx(196.2024).epsilon(1e-6));
  for (double a : {1000.0, -2500.0, 7000.0}) {
    double sines = 0.0;
    for (int i = 0; i < 6; ++i) sines += dem.alpha[i] * std::sin(dem.omega[i] * dem.q * a);
    CHECK(dem_elevation(a, 0, dem) - peaks(dem.q * a, 0) == doctest::Approx(sines).epsilon(1e-10));
  }
  DemParams single = dem;
  single.alpha = {50.0, 0, 0, 0, 0, 0};
  const double period = 2 * std::numbers::pi / (single.psi[0] * single.q);
  for (double b : {-300.0, 0.0, 4200.0}) {
    const double r0 = dem_elevation(1234.0, b, single) - peaks(single.q * 1234.0, single.q * b);
    const double r1 = dem_elevation(1234.0, b + period, single) - peaks(single.q * 1234.0, single.q * (b + period));
    CHECK(r0 == doctest::Approx(r1).epsilon(1e-9));
  }
}

TEST_CASE("terrain navigation observations") {
  const auto cfg = TanConfig::standard();
  CHECK(cfg.x0.size() == 6);
  CHECK(cfg.A(0, 3) == doctest::Approx(0.1));
  CHECK(cfg.Q(4, 4) == doctest::Approx(0.456 * 0.456));
  const Vector hub = cfg.hub();
  const auto h = tan_observation_map(hub, cfg.dem);
  Vector x = cfg.x0;
  x[2] = dem_elevation(hub[0], hub[1], cfg.dem);
  const Vector y0 = h(x);
  CHECK(std::abs(y0[0]) < 1e-12);
  CHECK(y0[1] == 0.0);
  x[0] += 3.0;
  x[1] += 4.0;
  CHECK(h(x)[1] == doctest::Approx(5.0).epsilon(1e-12));
  CounterRng rng(1);
  const int n = 20000;
  double s = 0;
  for (int i = 0; i < n; ++i) s += tan_observe(x, hub, cfg.dem, rng, 400.0)[1] - 5.0;
  CHECK(std::abs(s / n) < 4.0 * 20.0 / std::sqrt(n));
}

TEST_CASE("terrain trajectories have seed-stable elevation statistics") {
  const auto cfg = TanConfig::standard();
  const auto h = tan_observation_map(cfg.hub(), cfg.dem);
  std::vector<double> stats;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Matrix x = simulate_states(cfg.A, cfg.Q, cfg.x0, 2000, seed);
    double acc = 0;
    for (Eigen::Index t = 0; t < x.rows(); ++t) acc += std::abs(h(Vector(x.row(t).transpose()))[0]);
    stats.push_back(acc / double(x.rows()));
  }
  double mean = 0, var = 0;
  for (double v : stats) mean += v / stats.size();
  for (double v : stats) var += (v - mean) * (v - mean) / (stats.size() - 1);
  for (double v : stats) CHECK(std::abs(v - mean) < 3.0 * std::sqrt(var) * 1.5);
  CHECK(mean > 0);
}

TEST_CASE("Matern-5/2 construction") {
  const auto m = build_matern52(0.03, 32.0, 0.005, 1.0);
  CHECK(m.P_inf(0, 0) == 32.0);
  CHECK(m.P_inf == m.P_inf.transpose());
  CHECK(m.H == (Matrix(1, 3) << 1, 0, 0).finished());
  CHECK(m.lambda == doctest::Approx(std::sqrt(5.0) / 0.03));

  SUBCASE("matrix exponential against a series") {
    for (double dt : {0.005, 0.0005, 0.05}) {
      const auto mm = build_matern52(0.03, 32.0, dt, 1.0);
      const Matrix oracle = series_exp(dt * mm.F);
      CHECK((mm.A - oracle).norm() / oracle.norm() < 1e-12);
    }
  }
  SUBCASE("stationary covariance solves the Lyapunov equation") {
    Matrix L = Matrix::Zero(3, 1);
    L(2, 0) = 1.0;
    const Matrix resid = m.F * m.P_inf + m.P_inf * m.F.transpose() + L * m.white_noise_density * L.transpose();
    CHECK(resid.norm() / (m.F.norm() * m.P_inf.norm()) < 1e-13);
  }
  SUBCASE("small steps") {
    const auto a = build_matern52(0.03, 32.0, 1e-4, 1.0);
    const auto b = build_matern52(0.03, 32.0, 1e-5, 1.0);
    const Matrix I = Matrix::Identity(3, 3);
    CHECK((a.A - I).norm() / (b.A - I).norm() == doctest::Approx(10.0).epsilon(0.05));
    CHECK(a.Q.norm() / b.Q.norm() == doctest::Approx(10.0).epsilon(0.05));
  }
  SUBCASE("stationarity identity") {
    const auto c = props::matern_stationarity();
    INFO(c.detail);
    CHECK(c.pass);
  }
  SUBCASE("autocovariance") {
    const auto c = props::matern_autocovariance();
    INFO(c.detail);
    CHECK(c.pass);
  }
  CHECK(matern52_kernel(0.0, 0.03, 32.0) == 32.0);
  CHECK_THROWS_AS(build_matern52(0.0, 32.0, 0.005, 1.0), ConfigError);
  CHECK_THROWS_AS(build_matern52(0.03, 32.0, -1.0, 1.0), ConfigError);
}

}
