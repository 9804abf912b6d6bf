#pragma once

// State-space models, likelihood families and the beta-divergence machinery
// that turns a likelihood into a particle-weight potential.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "rsmc/random.hpp"

namespace rsmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Eigenvalue floor for covariance PSD checks.
inline constexpr double kPsdTolerance = 1e-10;

Matrix symmetrise(const Matrix& m);

/// Throws ConfigError unless `m` is square, finite and PSD within kPsdTolerance.
void require_psd(const Matrix& m, std::string_view what);

/// Multivariate normal. Singular covariances are allowed for sampling only.
class GaussianDensity {
 public:
  GaussianDensity(Vector mean, Matrix cov);

  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  /// Lower factor L with L L^T = cov.
  const Matrix& sqrt_cov() const { return sqrt_cov_; }
  bool positive_definite() const { return positive_definite_; }

  /// Throws NumericalError when the covariance is singular.
  double log_density(const Vector& x) const;
  Vector sample(CounterRng& rng) const;

 private:
  Vector mean_;
  Matrix cov_;
  Matrix sqrt_cov_;
  Matrix inv_sqrt_cov_;
  double log_norm_ = 0.0;
  bool positive_definite_ = false;
};

/// x_t = A x_{t-1} + nu, nu ~ N(0, Q).
class LinearGaussianTransition {
 public:
  LinearGaussianTransition(Matrix A, Matrix Q);

  std::size_t dim() const { return static_cast<std::size_t>(A_.rows()); }
  const Matrix& A() const { return A_; }
  const Matrix& Q() const { return noise_.cov(); }
  const Matrix& sqrt_Q() const { return noise_.sqrt_cov(); }
  bool invertible_noise() const { return noise_.positive_definite(); }

  Vector mean(const Vector& prev) const { return A_ * prev; }
  double log_density(const Vector& next, const Vector& prev) const;
  Vector sample(const Vector& prev, CounterRng& rng) const;

 private:
  Matrix A_;
  GaussianDensity noise_;
};

/// Location map of a likelihood: linear (H x) or an arbitrary function.
class ObservationMap {
 public:
  using Function = std::function<void(std::span<const double> x, std::span<double> y)>;

  static ObservationMap linear(Matrix H);
  static ObservationMap nonlinear(std::size_t state_dim, std::size_t obs_dim, Function h);

  std::size_t state_dim() const { return state_dim_; }
  std::size_t obs_dim() const { return obs_dim_; }
  bool is_linear() const { return !function_; }
  const Matrix& matrix() const { return H_; }

  Vector operator()(const Vector& x) const;
  void apply(std::span<const double> x, std::span<double> y) const;
  /// Column-wise map of a state_dim x N block.
  void apply_columns(const Matrix& states, Matrix& out) const;

 private:
  ObservationMap() = default;
  std::size_t state_dim_ = 0;
  std::size_t obs_dim_ = 0;
  Matrix H_;
  Function function_;
};

struct GaussianNoise {
  Matrix cov;
};

/// Independent Student's t per observation dimension.
struct StudentTNoise {
  Vector scale;
  double dof = 1.0;
};

/// Per-dimension two-piece normal: N(0, left^2) below zero, N(0, right^2) above.
/// Each half carries mass 1/2, so the density jumps at zero unless left == right.
struct AsymmetricGaussianNoise {
  double sigma_left = 1.0;
  double sigma_right = 1.0;
};

struct MixtureComponent {
  double weight = 1.0;
  Vector offset;
  Matrix cov;
};

struct GaussianMixtureNoise {
  std::vector<MixtureComponent> components;
};

enum class FamilyKind { Gaussian, StudentT, AsymmetricGaussian, GaussianMixture };

/// A location family g(y | x) = p(y - h(x)).
class LikelihoodFamily {
 public:
  static LikelihoodFamily gaussian(ObservationMap map, Matrix cov);
  static LikelihoodFamily student_t(ObservationMap map, Vector scale, double dof);
  static LikelihoodFamily asymmetric_gaussian(ObservationMap map, double sigma_left,
                                              double sigma_right);
  static LikelihoodFamily gaussian_mixture(ObservationMap map,
                                           std::vector<MixtureComponent> components);

  FamilyKind kind() const;
  std::string_view name() const;
  std::size_t state_dim() const { return map_.state_dim(); }
  std::size_t obs_dim() const { return map_.obs_dim(); }
  const ObservationMap& map() const { return map_; }

  double log_density(const Vector& x, const Vector& y) const;
  /// log p(r) for the residual r = y - h(x).
  double residual_log_density(std::span<const double> residual) const;
  /// Supremum of the density over the residual (attained at the mode).
  double peak_log_density() const;
  /// Integral of g(y'|x)^(beta+1) dy'. Throws NotClosedForm where unavailable.
  double power_integral(double beta) const;
  /// Draws a residual from the noise distribution.
  Vector sample_noise(CounterRng& rng) const;
  /// Scale used to standardise residuals of 1-D families.
  double residual_scale() const;

 private:
  struct Gaussian {
    GaussianNoise noise;
    Matrix inv_sqrt;
    Matrix sqrt;
    double log_norm;
  };
  struct StudentT {
    StudentTNoise noise;
    double log_norm;
  };
  struct Asymmetric {
    AsymmetricGaussianNoise noise;
  };
  struct Mixture {
    GaussianMixtureNoise noise;
    std::vector<Matrix> inv_sqrt;
    std::vector<Matrix> sqrt;
    std::vector<double> log_norm;  // includes log weight
    bool shared_cov;
  };

  LikelihoodFamily(ObservationMap map, std::variant<Gaussian, StudentT, Asymmetric, Mixture> noise)
      : map_(std::move(map)), noise_(std::move(noise)) {}

  ObservationMap map_;
  std::variant<Gaussian, StudentT, Asymmetric, Mixture> noise_;
};

struct StandardRule {};
struct BetaRule {
  double beta;
};
using LossRule = std::variant<StandardRule, BetaRule>;

/// Whether the x-independent power-integral term is carried in the potential.
enum class IntegralMode { DropConstant, Full };

/// A likelihood paired with a loss. The log-potential is defined as
///   Standard : log g(y|x)
///   Beta     : expm1(beta * log g) / beta  [- PI / (beta + 1) in Full mode]
/// which equals -beta_loss up to the additive constant 1/beta and tends to
/// log g as beta -> 0.
class GeneralisedLikelihood {
 public:
  GeneralisedLikelihood(LikelihoodFamily base, LossRule rule,
                        IntegralMode mode = IntegralMode::DropConstant);

  static GeneralisedLikelihood standard(LikelihoodFamily base);
  static GeneralisedLikelihood beta(LikelihoodFamily base, double beta,
                                    IntegralMode mode = IntegralMode::DropConstant);

  const LikelihoodFamily& base() const { return base_; }
  const LossRule& rule() const { return rule_; }
  IntegralMode integral_mode() const { return mode_; }
  bool is_beta() const { return std::holds_alternative<BetaRule>(rule_); }
  /// 0 for the standard rule.
  double beta_value() const;

  double log_potential(const Vector& x, const Vector& y) const;
  double residual_log_potential(std::span<const double> residual) const;
  /// Maps log g to the log-potential.
  double potential_from_log_density(double log_g) const;
  double sup_log_potential() const;
  /// Full beta loss. Throws ConfigError under the standard rule.
  double beta_loss(const Vector& x, const Vector& y) const;

 private:
  LikelihoodFamily base_;
  LossRule rule_;
  IntegralMode mode_;
  double integral_term_ = 0.0;  // PI / (beta + 1) in Full mode
};

double log_density(const LikelihoodFamily& family, const Vector& x, const Vector& y);
double power_integral(const LikelihoodFamily& family, const Vector& x, double beta);
double beta_loss(const GeneralisedLikelihood& gl, const Vector& x, const Vector& y);
double log_potential(const GeneralisedLikelihood& gl, const Vector& x, const Vector& y);

/// The (prior, transition, likelihood) triple of a state-space HMM.
struct StateSpaceModel {
  GaussianDensity prior;
  LinearGaussianTransition transition;
  LikelihoodFamily likelihood;

  std::size_t state_dim() const { return transition.dim(); }
  std::size_t obs_dim() const { return likelihood.obs_dim(); }
  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;
};

}  // namespace rsmc
