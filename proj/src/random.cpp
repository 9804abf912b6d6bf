#include "rsmc/random.hpp"

#include <cmath>
#include <numbers>

namespace rsmc {

double CounterRng::normal() noexcept {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

double CounterRng::exponential() noexcept { return -std::log(uniform()); }

namespace {

// Marsaglia-Tsang, shape >= 1.
double gamma_ge1(CounterRng& rng, double shape) noexcept {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

double CounterRng::student_t(double dof) noexcept {
  if (dof == 1.0) return std::tan(std::numbers::pi * (uniform() - 0.5));
  const double shape = 0.5 * dof;
  double g = 0.0;
  if (shape >= 1.0) {
    g = gamma_ge1(*this, shape);
  } else {
    g = gamma_ge1(*this, shape + 1.0) * std::pow(uniform(), 1.0 / shape);
  }
  const double chi2 = 2.0 * g;
  return normal() / std::sqrt(chi2 / dof);
}

}  // namespace rsmc
