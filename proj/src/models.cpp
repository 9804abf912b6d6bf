#include "rsmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "rsmc/errors.hpp"

namespace rsmc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct Factorisation {
  Matrix sqrt;
  Matrix inv_sqrt;
  double log_det = 0.0;
  bool positive_definite = false;
};

Factorisation factorise(const Matrix& cov) {
  Factorisation f;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success && cov.size() > 0) {
    f.sqrt = llt.matrixL();
    const Eigen::Index d = cov.rows();
    f.inv_sqrt = f.sqrt.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
    f.log_det = 2.0 * f.sqrt.diagonal().array().log().sum();
    f.positive_definite = std::isfinite(f.log_det) && (f.sqrt.diagonal().array() > 0.0).all();
    if (f.positive_definite) return f;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  f.sqrt = eig.eigenvectors() * root.asDiagonal();
  f.positive_definite = false;
  return f;
}

double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ConfigError(std::string(what) + ": expected dimension " + std::to_string(want) +
                      ", got " + std::to_string(got));
  }
}

}  // namespace

Matrix symmetrise(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void require_psd(const Matrix& m, std::string_view what) {
  if (m.rows() != m.cols()) throw ConfigError(std::string(what) + " must be square");
  if (!m.allFinite()) throw ConfigError(std::string(what) + " has non-finite entries");
  if (m.size() == 0) return;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrise(m), Eigen::EigenvaluesOnly);
  const double hi = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
  if (eig.eigenvalues().minCoeff() < -kPsdTolerance * hi) {
    throw ConfigError(std::string(what) + " is not positive semi-definite (min eigenvalue " +
                      std::to_string(eig.eigenvalues().minCoeff()) + ")");
  }
}

// ---------------------------------------------------------------------------

GaussianDensity::GaussianDensity(Vector mean, Matrix cov)
    : mean_(std::move(mean)), cov_(symmetrise(cov)) {
  require_dim(static_cast<std::size_t>(cov_.rows()), static_cast<std::size_t>(mean_.size()),
              "Gaussian covariance");
  require_psd(cov_, "Gaussian covariance");
  Factorisation f = factorise(cov_);
  sqrt_cov_ = std::move(f.sqrt);
  inv_sqrt_cov_ = std::move(f.inv_sqrt);
  positive_definite_ = f.positive_definite;
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + f.log_det);
}

double GaussianDensity::log_density(const Vector& x) const {
  if (!positive_definite_) throw NumericalError("log density of a singular Gaussian");
  require_dim(static_cast<std::size_t>(x.size()), dim(), "Gaussian argument");
  const Vector z = inv_sqrt_cov_.triangularView<Eigen::Lower>() * (x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

Vector GaussianDensity::sample(CounterRng& rng) const {
  Vector z(mean_.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return mean_ + sqrt_cov_ * z;
}

LinearGaussianTransition::LinearGaussianTransition(Matrix A, Matrix Q)
    : A_(std::move(A)), noise_(Vector::Zero(Q.rows()), Q) {
  if (A_.rows() != A_.cols()) throw ConfigError("transition matrix must be square");
  require_dim(noise_.dim(), static_cast<std::size_t>(A_.rows()), "transition covariance");
}

double LinearGaussianTransition::log_density(const Vector& next, const Vector& prev) const {
  return noise_.log_density(next - A_ * prev);
}

Vector LinearGaussianTransition::sample(const Vector& prev, CounterRng& rng) const {
  return A_ * prev + noise_.sample(rng);
}

// ---------------------------------------------------------------------------

ObservationMap ObservationMap::linear(Matrix H) {
  if (H.size() == 0) throw ConfigError("observation matrix is empty");
  ObservationMap m;
  m.state_dim_ = static_cast<std::size_t>(H.cols());
  m.obs_dim_ = static_cast<std::size_t>(H.rows());
  m.H_ = std::move(H);
  return m;
}

ObservationMap ObservationMap::nonlinear(std::size_t state_dim, std::size_t obs_dim,
                                         Function h) {
  if (state_dim == 0 || obs_dim == 0 || !h) throw ConfigError("invalid nonlinear map");
  ObservationMap m;
  m.state_dim_ = state_dim;
  m.obs_dim_ = obs_dim;
  m.function_ = std::move(h);
  return m;
}

Vector ObservationMap::operator()(const Vector& x) const {
  require_dim(static_cast<std::size_t>(x.size()), state_dim_, "observation map input");
  Vector y(static_cast<Eigen::Index>(obs_dim_));
  apply({x.data(), state_dim_}, {y.data(), obs_dim_});
  return y;
}

void ObservationMap::apply(std::span<const double> x, std::span<double> y) const {
  if (function_) {
    function_(x, y);
    return;
  }
  const Eigen::Map<const Vector> xv(x.data(), static_cast<Eigen::Index>(state_dim_));
  Eigen::Map<Vector> yv(y.data(), static_cast<Eigen::Index>(obs_dim_));
  yv.noalias() = H_ * xv;
}

void ObservationMap::apply_columns(const Matrix& states, Matrix& out) const {
  out.resize(static_cast<Eigen::Index>(obs_dim_), states.cols());
  if (!function_) {
    out.noalias() = H_ * states;
    return;
  }
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    function_({states.col(i).data(), state_dim_}, {out.col(i).data(), obs_dim_});
  }
}

// ---------------------------------------------------------------------------

LikelihoodFamily LikelihoodFamily::gaussian(ObservationMap map, Matrix cov) {
  cov = symmetrise(cov);
  require_dim(static_cast<std::size_t>(cov.rows()), map.obs_dim(), "likelihood covariance");
  require_psd(cov, "likelihood covariance");
  Factorisation f = factorise(cov);
  if (!f.positive_definite) throw ConfigError("likelihood covariance must be positive definite");
  const double log_norm = -0.5 * (static_cast<double>(cov.rows()) * kLog2Pi + f.log_det);
  return LikelihoodFamily(std::move(map),
                          Gaussian{GaussianNoise{cov}, f.inv_sqrt, f.sqrt, log_norm});
}

LikelihoodFamily LikelihoodFamily::student_t(ObservationMap map, Vector scale, double dof) {
  require_dim(static_cast<std::size_t>(scale.size()), map.obs_dim(), "Student-t scale");
  if (!(dof > 0.0) || !std::isfinite(dof)) throw ConfigError("Student-t dof must be positive");
  if (!((scale.array() > 0.0).all())) throw ConfigError("Student-t scale must be positive");
  const double per_dim = std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
                         0.5 * std::log(dof * std::numbers::pi);
  const double log_norm =
      static_cast<double>(scale.size()) * per_dim - scale.array().log().sum();
  return LikelihoodFamily(std::move(map), StudentT{StudentTNoise{std::move(scale), dof}, log_norm});
}

LikelihoodFamily LikelihoodFamily::asymmetric_gaussian(ObservationMap map, double sigma_left,
                                                       double sigma_right) {
  if (!(sigma_left > 0.0) || !(sigma_right > 0.0)) {
    throw ConfigError("asymmetric Gaussian scales must be positive");
  }
  return LikelihoodFamily(std::move(map),
                          Asymmetric{AsymmetricGaussianNoise{sigma_left, sigma_right}});
}

LikelihoodFamily LikelihoodFamily::gaussian_mixture(ObservationMap map,
                                                    std::vector<MixtureComponent> components) {
  if (components.empty()) throw ConfigError("mixture needs at least one component");
  Mixture mix;
  double total = 0.0;
  for (auto& c : components) {
    if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
    if (c.offset.size() == 0) c.offset = Vector::Zero(static_cast<Eigen::Index>(map.obs_dim()));
    require_dim(static_cast<std::size_t>(c.offset.size()), map.obs_dim(), "mixture offset");
    require_dim(static_cast<std::size_t>(c.cov.rows()), map.obs_dim(), "mixture covariance");
    c.cov = symmetrise(c.cov);
    require_psd(c.cov, "mixture covariance");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights must sum to 1");
  mix.shared_cov = true;
  for (const auto& c : components) {
    Factorisation f = factorise(c.cov);
    if (!f.positive_definite) throw ConfigError("mixture covariance must be positive definite");
    mix.inv_sqrt.push_back(f.inv_sqrt);
    mix.sqrt.push_back(f.sqrt);
    mix.log_norm.push_back(std::log(c.weight) -
                           0.5 * (static_cast<double>(c.cov.rows()) * kLog2Pi + f.log_det));
    if ((c.cov - components.front().cov).norm() != 0.0) mix.shared_cov = false;
  }
  mix.noise.components = std::move(components);
  return LikelihoodFamily(std::move(map), std::move(mix));
}

FamilyKind LikelihoodFamily::kind() const {
  return std::visit(
      [](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian>) return FamilyKind::Gaussian;
        else if constexpr (std::is_same_v<T, StudentT>) return FamilyKind::StudentT;
        else if constexpr (std::is_same_v<T, Asymmetric>) return FamilyKind::AsymmetricGaussian;
        else return FamilyKind::GaussianMixture;
      },
      noise_);
}

std::string_view LikelihoodFamily::name() const {
  switch (kind()) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::StudentT: return "student_t";
    case FamilyKind::AsymmetricGaussian: return "asymmetric_gaussian";
    case FamilyKind::GaussianMixture: return "gaussian_mixture";
  }
  return "unknown";
}

double LikelihoodFamily::log_density(const Vector& x, const Vector& y) const {
  require_dim(static_cast<std::size_t>(x.size()), state_dim(), "likelihood state");
  require_dim(static_cast<std::size_t>(y.size()), obs_dim(), "likelihood observation");
  Vector r = y - map_(x);
  return residual_log_density({r.data(), obs_dim()});
}

double LikelihoodFamily::residual_log_density(std::span<const double> residual) const {
  const auto d = static_cast<Eigen::Index>(residual.size());
  const Eigen::Map<const Vector> r(residual.data(), d);
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          double quad = 0.0;
          for (Eigen::Index i = 0; i < d; ++i) {
            double z = 0.0;
            for (Eigen::Index j = 0; j <= i; ++j) z += n.inv_sqrt(i, j) * r[j];
            quad += z * z;
          }
          return n.log_norm - 0.5 * quad;
        } else if constexpr (std::is_same_v<T, StudentT>) {
          double acc = n.log_norm;
          const double nu = n.noise.dof;
          for (Eigen::Index i = 0; i < d; ++i) {
            const double z = r[i] / n.noise.scale[i];
            acc -= 0.5 * (nu + 1.0) * std::log1p(z * z / nu);
          }
          return acc;
        } else if constexpr (std::is_same_v<T, Asymmetric>) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < d; ++i) {
            const double s = r[i] < 0.0 ? n.noise.sigma_left : n.noise.sigma_right;
            const double z = r[i] / s;
            acc += -0.5 * kLog2Pi - std::log(s) - 0.5 * z * z;
          }
          return acc;
        } else {
          double terms[16];
          std::vector<double> heap;
          const std::size_t k = n.noise.components.size();
          std::span<double> out(terms, std::min<std::size_t>(k, 16));
          if (k > 16) {
            heap.resize(k);
            out = heap;
          }
          for (std::size_t c = 0; c < k; ++c) {
            const Vector z = n.inv_sqrt[c].template triangularView<Eigen::Lower>() *
                             (r - n.noise.components[c].offset);
            out[c] = n.log_norm[c] - 0.5 * z.squaredNorm();
          }
          return log_sum_exp(out);
        }
      },
      noise_);
}

double LikelihoodFamily::peak_log_density() const {
  const std::size_t d = obs_dim();
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian> || std::is_same_v<T, StudentT>) {
          return n.log_norm;
        } else if constexpr (std::is_same_v<T, Asymmetric>) {
          const double s = std::min(n.noise.sigma_left, n.noise.sigma_right);
          return static_cast<double>(d) * (-0.5 * kLog2Pi - std::log(s));
        } else {
          double best = -std::numeric_limits<double>::infinity();
          for (const auto& c : n.noise.components) {
            best = std::max(best, residual_log_density({c.offset.data(), d}));
          }
          return best;
        }
      },
      noise_);
}

double LikelihoodFamily::power_integral(double beta) const {
  if (!(beta > 0.0)) throw ConfigError("power integral requires beta > 0");
  const auto gaussian_integral = [beta](double dim, double log_det) {
    return std::exp(-0.5 * beta * (dim * kLog2Pi + log_det) - 0.5 * dim * std::log1p(beta));
  };
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          const double log_det = 2.0 * n.sqrt.diagonal().array().abs().log().sum();
          return gaussian_integral(static_cast<double>(obs_dim()), log_det);
        } else if constexpr (std::is_same_v<T, StudentT>) {
          throw NotClosedForm("Student-t power integral has no closed form");
        } else if constexpr (std::is_same_v<T, Asymmetric>) {
          const double per_dim = 0.5 * std::exp(-0.5 * beta * kLog2Pi - 0.5 * std::log1p(beta)) *
                                 (std::pow(n.noise.sigma_left, -beta) +
                                  std::pow(n.noise.sigma_right, -beta));
          return std::pow(per_dim, static_cast<double>(obs_dim()));
        } else {
          if (n.noise.components.size() != 1) {
            throw NotClosedForm("Gaussian mixture power integral has no closed form");
          }
          const double log_det = 2.0 * n.sqrt.front().diagonal().array().abs().log().sum();
          return gaussian_integral(static_cast<double>(obs_dim()), log_det);
        }
      },
      noise_);
}

Vector LikelihoodFamily::sample_noise(CounterRng& rng) const {
  const auto d = static_cast<Eigen::Index>(obs_dim());
  Vector out(d);
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          Vector z(d);
          for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
          out = n.sqrt * z;
        } else if constexpr (std::is_same_v<T, StudentT>) {
          for (Eigen::Index i = 0; i < d; ++i) out[i] = n.noise.scale[i] * rng.student_t(n.noise.dof);
        } else if constexpr (std::is_same_v<T, Asymmetric>) {
          for (Eigen::Index i = 0; i < d; ++i) {
            const double z = rng.normal();
            out[i] = z * (z < 0.0 ? n.noise.sigma_left : n.noise.sigma_right);
          }
        } else {
          double u = rng.uniform();
          std::size_t c = 0;
          while (c + 1 < n.noise.components.size() && u > n.noise.components[c].weight) {
            u -= n.noise.components[c].weight;
            ++c;
          }
          Vector z(d);
          for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
          out = n.noise.components[c].offset + n.sqrt[c] * z;
        }
      },
      noise_);
  return out;
}

double LikelihoodFamily::residual_scale() const {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Gaussian>) {
          return std::sqrt(n.noise.cov(0, 0));
        } else if constexpr (std::is_same_v<T, StudentT>) {
          return n.noise.scale[0];
        } else if constexpr (std::is_same_v<T, Asymmetric>) {
          return std::min(n.noise.sigma_left, n.noise.sigma_right);
        } else {
          double var = 0.0;
          for (const auto& c : n.noise.components) var += c.weight * c.cov(0, 0);
          return std::sqrt(var);
        }
      },
      noise_);
}

// ---------------------------------------------------------------------------

GeneralisedLikelihood::GeneralisedLikelihood(LikelihoodFamily base, LossRule rule,
                                             IntegralMode mode)
    : base_(std::move(base)), rule_(rule), mode_(mode) {
  if (const auto* b = std::get_if<BetaRule>(&rule_)) {
    if (!(b->beta > 0.0) || !std::isfinite(b->beta)) {
      throw ConfigError("beta must be positive, got " + std::to_string(b->beta));
    }
    if (mode_ == IntegralMode::Full) {
      integral_term_ = base_.power_integral(b->beta) / (b->beta + 1.0);
    }
  }
}

GeneralisedLikelihood GeneralisedLikelihood::standard(LikelihoodFamily base) {
  return GeneralisedLikelihood(std::move(base), StandardRule{});
}

GeneralisedLikelihood GeneralisedLikelihood::beta(LikelihoodFamily base, double beta,
                                                  IntegralMode mode) {
  return GeneralisedLikelihood(std::move(base), BetaRule{beta}, mode);
}

double GeneralisedLikelihood::beta_value() const {
  const auto* b = std::get_if<BetaRule>(&rule_);
  return b ? b->beta : 0.0;
}

double GeneralisedLikelihood::potential_from_log_density(double log_g) const {
  const auto* b = std::get_if<BetaRule>(&rule_);
  if (!b) return log_g;
  return std::expm1(b->beta * log_g) / b->beta - integral_term_;
}

double GeneralisedLikelihood::log_potential(const Vector& x, const Vector& y) const {
  return potential_from_log_density(base_.log_density(x, y));
}

double GeneralisedLikelihood::residual_log_potential(std::span<const double> residual) const {
  return potential_from_log_density(base_.residual_log_density(residual));
}

double GeneralisedLikelihood::sup_log_potential() const {
  return potential_from_log_density(base_.peak_log_density());
}

double GeneralisedLikelihood::beta_loss(const Vector& x, const Vector& y) const {
  const auto* b = std::get_if<BetaRule>(&rule_);
  if (!b) throw ConfigError("beta loss requested for the standard rule");
  const double integral = base_.power_integral(b->beta);
  return integral / (b->beta + 1.0) - std::exp(b->beta * base_.log_density(x, y)) / b->beta;
}

double log_density(const LikelihoodFamily& family, const Vector& x, const Vector& y) {
  return family.log_density(x, y);
}

double power_integral(const LikelihoodFamily& family, const Vector& x, double beta) {
  require_dim(static_cast<std::size_t>(x.size()), family.state_dim(), "power integral state");
  return family.power_integral(beta);
}

double beta_loss(const GeneralisedLikelihood& gl, const Vector& x, const Vector& y) {
  return gl.beta_loss(x, y);
}

double log_potential(const GeneralisedLikelihood& gl, const Vector& x, const Vector& y) {
  return gl.log_potential(x, y);
}

void StateSpaceModel::validate() const {
  require_dim(prior.dim(), transition.dim(), "prior");
  require_dim(likelihood.state_dim(), transition.dim(), "likelihood state");
}

}  // namespace rsmc
