#include "rsmc/simulators.hpp"

#include <cmath>


#include "rsmc/errors.hpp"

namespace rsmc {

LinearGaussianSystem wiener_velocity_system(double dt) {
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  LinearGaussianSystem s;
  s.A = Matrix::Identity(4, 4);
  s.A(0, 2) = dt;
  s.A(1, 3) = dt;
  s.Q = Matrix::Zero(4, 4);
  const double q11 = dt * dt * dt / 3.0;
  const double q12 = dt * dt / 2.0;
  for (int k = 0; k < 2; ++k) {
    s.Q(k, k) = q11;
    s.Q(k, k + 2) = q12;
    s.Q(k + 2, k) = q12;
    s.Q(k + 2, k + 2) = dt;
  }
  s.H = Matrix::Zero(2, 4);
  s.H(0, 0) = 1.0;
  s.H(1, 1) = 1.0;
  return s;
}

double contamination_probability(const ContaminationSpec& spec) {
  return std::visit(
      [](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, NoContamination>) return 0.0;
        else return c.probability;
      },
      spec);
}

Matrix simulate_states(const Matrix& A, const Matrix& Q, const Vector& x0, std::size_t steps,
                       std::uint64_t seed) {
  if (steps < 1) throw ConfigError("need at least one step");
  const LinearGaussianTransition tr(A, Q);
  if (static_cast<std::size_t>(x0.size()) != tr.dim()) throw ConfigError("x0 dimension mismatch");
  const std::uint64_t key = derive_seed(seed, StreamPurpose::States);
  Matrix states(static_cast<Eigen::Index>(steps), x0.size());
  Vector x = x0;
  for (std::size_t t = 0; t < steps; ++t) {
    CounterRng rng(derive_seed(key, t));
    x = tr.sample(x, rng);
    states.row(static_cast<Eigen::Index>(t)) = x.transpose();
  }
  return states;
}

namespace {

template <class NoiseFn>
LgssmSimulation observe_with(const Matrix& states, const ObservationMap& map, std::uint64_t seed,
                             NoiseFn&& noise) {
  if (static_cast<std::size_t>(states.cols()) != map.state_dim()) {
    throw ConfigError("state dimension does not match observation map");
  }
  const std::uint64_t key = derive_seed(seed, StreamPurpose::ObservationNoise);
  const Eigen::Index T = states.rows();
  const auto dy = static_cast<Eigen::Index>(map.obs_dim());
  LgssmSimulation sim;
  sim.states = states;
  sim.signal.resize(T, dy);
  sim.noise.resize(T, dy);
  for (Eigen::Index t = 0; t < T; ++t) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(t)));
    sim.signal.row(t) = map(states.row(t).transpose()).transpose();
    sim.noise.row(t) = noise(rng).transpose();
  }
  sim.clean_obs = sim.signal + sim.noise;
  return sim;
}

}  // namespace

LgssmSimulation observe(const Matrix& states, const LikelihoodFamily& family, std::uint64_t seed) {
  return observe_with(states, family.map(), seed,
                      [&](CounterRng& rng) { return family.sample_noise(rng); });
}

LgssmSimulation observe(const Matrix& states, const ObservationMap& map, const Matrix& R,
                        std::uint64_t seed) {
  const GaussianDensity noise(Vector::Zero(static_cast<Eigen::Index>(map.obs_dim())), R);
  return observe_with(states, map, seed, [&](CounterRng& rng) { return noise.sample(rng); });
}

LgssmSimulation simulate_lgssm(const Matrix& A, const Matrix& Q, const Vector& x0,
                               const LikelihoodFamily& obs, std::size_t steps, std::uint64_t seed) {
  return observe(simulate_states(A, Q, x0, steps, seed), obs, seed);
}

ContaminatedObservations contaminate(const LgssmSimulation& sim, const ContaminationSpec& spec,
                                     std::uint64_t seed) {
  const double p = contamination_probability(spec);
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("contamination probability must lie in [0, 1]");
  const std::uint64_t key = derive_seed(seed, StreamPurpose::Contamination);
  const Eigen::Index T = sim.clean_obs.rows();
  const Eigen::Index dy = sim.clean_obs.cols();
  ContaminatedObservations out{sim.clean_obs, std::vector<bool>(static_cast<std::size_t>(T), false)};
  for (Eigen::Index t = 0; t < T; ++t) {
    CounterRng rng(derive_seed(key, static_cast<std::uint64_t>(t)));
    const bool hit = rng.uniform() < p;
    out.flags[static_cast<std::size_t>(t)] = hit;
    if (!hit) continue;
    std::visit(
        [&](const auto& c) {
          using C = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<C, AdditiveGaussian>) {
            for (Eigen::Index j = 0; j < dy; ++j) out.obs(t, j) += c.scale * rng.normal();
          } else if constexpr (std::is_same_v<C, AdditiveStudentT>) {
            for (Eigen::Index j = 0; j < dy; ++j) out.obs(t, j) += c.scale * rng.student_t(c.dof);
          } else if constexpr (std::is_same_v<C, MultiplicativeExponential>) {
            for (Eigen::Index j = 0; j < dy; ++j) {
              const double xi = c.scale * rng.exponential();
              out.obs(t, j) = sim.signal(t, j) + xi * sim.noise(t, j);
            }
          }
        },
        spec);
  }
  return out;
}

ContaminatedObservations contaminate(const Matrix& clean_obs, const ContaminationSpec& spec,
                                     std::uint64_t seed) {
  if (std::holds_alternative<MultiplicativeExponential>(spec)) {
    throw ConfigError("multiplicative contamination needs the separated observation noise");
  }
  LgssmSimulation sim;
  sim.clean_obs = clean_obs;
  return contaminate(sim, spec, seed);
}

// ---------------------------------------------------------------------------

double peaks(double c, double d) {
  const double a = 3.0 * (1.0 - c) * (1.0 - c) * std::exp(-c * c - (d + 1.0) * (d + 1.0));
  const double b = 10.0 * (c / 5.0 - c * c * c - std::pow(d, 5)) * std::exp(-c * c - d * d);
  const double e = std::exp(-(c + 1.0) * (c + 1.0) - d * d) / 3.0;
  return 200.0 * (a - b - e);
}

double dem_elevation(double a, double b, const DemParams& params) {
  const double qa = params.q * a;
  const double qb = params.q * b;
  double z = peaks(qa, qb);
  for (std::size_t i = 0; i < params.alpha.size(); ++i) {
    z += params.alpha[i] * std::sin(params.omega[i] * qa) * std::cos(params.psi[i] * qb);
  }
  return z;
}

TanConfig TanConfig::standard() {
  TanConfig c;
  c.x0 = (Vector(6) << -7.5e3, 5e3, 1.1e3, 88.15, -60.53, 0.0).finished();
  c.A = Matrix::Identity(6, 6);
  for (int i = 0; i < 3; ++i) c.A(i, i + 3) = c.dt;
  c.Q = (Vector(6) << 4.0, 4.0, 36.0, 0.0841, 0.207936, 5.29).finished().asDiagonal();
  return c;
}

ObservationMap tan_observation_map(const Vector& hub, const DemParams& dem) {
  if (hub.size() != 2) throw ConfigError("TAN hub must be a 2-vector");
  const double hx = hub[0];
  const double hy = hub[1];
  return ObservationMap::nonlinear(6, 2, [hx, hy, dem](std::span<const double> x, std::span<double> y) {
    y[0] = x[2] - dem_elevation(x[0], x[1], dem);
    y[1] = std::hypot(x[0] - hx, x[1] - hy);
  });
}

Vector tan_observe(const Vector& x, const Vector& hub, const DemParams& dem, CounterRng& rng,
                   double obs_variance) {
  Vector y = tan_observation_map(hub, dem)(x);
  const double s = std::sqrt(obs_variance);
  for (Eigen::Index j = 0; j < y.size(); ++j) y[j] += s * rng.normal();
  return y;
}

// ---------------------------------------------------------------------------

Matern52StateSpace build_matern52(double lengthscale, double signal_variance, double dt,
                                  double obs_variance) {
  if (!(lengthscale > 0.0) || !(signal_variance > 0.0) || !(dt > 0.0) || !(obs_variance >= 0.0)) {
    throw ConfigError("Matern-5/2 parameters must be positive");
  }
  Matern52StateSpace m;
  m.lengthscale = lengthscale;
  m.signal_variance = signal_variance;
  m.dt = dt;
  m.obs_variance = obs_variance;
  const double lam = std::sqrt(5.0) / lengthscale;
  m.lambda = lam;
  m.F = Matrix::Zero(3, 3);
  m.F(0, 1) = 1.0;
  m.F(1, 2) = 1.0;
  m.F(2, 0) = -lam * lam * lam;
  m.F(2, 1) = -3.0 * lam * lam;
  m.F(2, 2) = -3.0 * lam;
  const double kappa = signal_variance * lam * lam / 3.0;
  m.P_inf = Matrix::Zero(3, 3);
  m.P_inf(0, 0) = signal_variance;
  m.P_inf(0, 2) = -kappa;
  m.P_inf(2, 0) = -kappa;
  m.P_inf(1, 1) = kappa;
  m.P_inf(2, 2) = signal_variance * lam * lam * lam * lam;
  m.white_noise_density = 16.0 / 3.0 * signal_variance * std::pow(lam, 5);

  // (F + lam I) is nilpotent of order 3
  const Matrix N = dt * (m.F + lam * Matrix::Identity(3, 3));
  m.A = std::exp(-lam * dt) * (Matrix::Identity(3, 3) + N + 0.5 * N * N);
  m.Q = symmetrise(m.P_inf - m.A * m.P_inf * m.A.transpose());
  require_psd(m.Q, "Matern-5/2 transition covariance");
  m.H = Matrix::Zero(1, 3);
  m.H(0, 0) = 1.0;
  return m;
}

double matern52_kernel(double tau, double lengthscale, double signal_variance) {
  const double r = std::sqrt(5.0) * std::abs(tau) / lengthscale;
  return signal_variance * (1.0 + r + r * r / 3.0) * std::exp(-r);
}

}  // namespace rsmc
