#pragma once

// Benchmark data generators: Wiener velocity, terrain-aided navigation with a
// synthetic elevation map, outlier contamination and the Matérn-5/2 GP in
// state-space form.

#include <array>
#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "rsmc/models.hpp"

namespace rsmc {

struct LinearGaussianSystem {
  Matrix A;
  Matrix Q;
  Matrix H;
};

/// Planar constant-velocity model, state [p_x, p_y, v_x, v_y], positions observed.
LinearGaussianSystem wiener_velocity_system(double dt);

struct WienerVelocityConfig {
  double dt = 0.1;
  std::size_t steps = 1000;
  Vector x0 = (Vector(4) << 140.0, 140.0, 50.0, 0.0).finished();
};

struct NoContamination {};
/// y += N(0, scale^2 I) with probability p.
struct AdditiveGaussian {
  double probability = 0.0;
  double scale = 100.0;
};
/// y += scale * t_dof per dimension with probability p.
struct AdditiveStudentT {
  double probability = 0.0;
  double dof = 1.0;
  double scale = 20.0;
};
/// noise <- xi * noise, xi ~ Exp(mean = scale), with probability p.
struct MultiplicativeExponential {
  double probability = 0.0;
  double scale = 1000.0;
};
using ContaminationSpec =
    std::variant<NoContamination, AdditiveGaussian, AdditiveStudentT, MultiplicativeExponential>;

double contamination_probability(const ContaminationSpec& spec);

struct LgssmSimulation {
  Matrix states;     // T x d_x, x_1..x_T
  Matrix signal;     // T x d_y, h(x_t)
  Matrix noise;      // T x d_y
  Matrix clean_obs;  // signal + noise
};

/// x_1..x_T from x_t = A x_{t-1} + N(0, Q) started at x0.
Matrix simulate_states(const Matrix& A, const Matrix& Q, const Vector& x0, std::size_t steps,
                       std::uint64_t seed);

/// y_t = h(x_t) + e_t, e_t drawn from the family's noise model.
LgssmSimulation observe(const Matrix& states, const LikelihoodFamily& family, std::uint64_t seed);

/// As above with Gaussian noise N(0, R); R may be singular (R = 0 gives y = h(x)).
LgssmSimulation observe(const Matrix& states, const ObservationMap& map, const Matrix& R,
                        std::uint64_t seed);

LgssmSimulation simulate_lgssm(const Matrix& A, const Matrix& Q, const Vector& x0,
                               const LikelihoodFamily& obs, std::size_t steps, std::uint64_t seed);

struct ContaminatedObservations {
  Matrix obs;
  std::vector<bool> flags;  // one per step
};

ContaminatedObservations contaminate(const LgssmSimulation& sim, const ContaminationSpec& spec,
                                     std::uint64_t seed);

/// Additive variants only; the multiplicative variant needs the separated noise.
ContaminatedObservations contaminate(const Matrix& clean_obs, const ContaminationSpec& spec,
                                     std::uint64_t seed);

// --- Terrain-aided navigation ---------------------------------------------

struct DemParams {
  std::array<double, 6> alpha{300.0, 80.0, 60.0, 40.0, 20.0, 10.0};
  std::array<double, 6> omega{5.0, 10.0, 20.0, 30.0, 80.0, 150.0};
  std::array<double, 6> psi{4.0, 10.0, 20.0, 40.0, 90.0, 150.0};
  double q = 3.0 / 2.96e4;
};

/// The classic "peaks" surface scaled by 200.
double peaks(double c, double d);

/// peaks(q a, q b) + sum_i alpha_i sin(omega_i q a) cos(psi_i q b).
double dem_elevation(double a, double b, const DemParams& params);

struct TanConfig {
  double dt = 0.1;
  std::size_t steps = 2000;
  Vector x0;
  Matrix A;
  Matrix Q;
  DemParams dem;
  double obs_variance = 400.0;

  static TanConfig standard();
  Vector hub() const { return x0.head(2); }
};

/// h(x) = [x_3 - DEM(x_1, x_2), ||x_{1:2} - hub||].
ObservationMap tan_observation_map(const Vector& hub, const DemParams& dem);

Vector tan_observe(const Vector& x, const Vector& hub, const DemParams& dem, CounterRng& rng,
                   double obs_variance);

// --- Matérn-5/2 GP as a linear-Gaussian state-space model ------------------

struct Matern52StateSpace {
  double lengthscale = 0.0;
  double signal_variance = 0.0;
  double dt = 0.0;
  double obs_variance = 0.0;
  double lambda = 0.0;
  Matrix F;
  Matrix P_inf;
  Matrix A;
  Matrix Q;
  Matrix H;
  /// Spectral density of the driving white noise, 16/3 sigma^2 lambda^5.
  double white_noise_density = 0.0;
};

/// Throws ConfigError for non-positive inputs or a non-PSD Q.
Matern52StateSpace build_matern52(double lengthscale, double signal_variance, double dt,
                                  double obs_variance);

double matern52_kernel(double tau, double lengthscale, double signal_variance);

}  // namespace rsmc
