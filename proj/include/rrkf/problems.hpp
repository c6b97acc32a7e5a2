#pragma once

#include "rrkf/common.hpp"
#include "rrkf/filter.hpp"
#include "rrkf/transition.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace rrkf {

/// A filtering problem with everything each method needs to start.
struct Problem {
  std::string name;
  std::shared_ptr<const TransitionModel> transitions;
  ObservationSequence observations;
  /// Ground truth, one column per observation time (may be empty).
  Matrix truth;
  Vector init_mean;
  /// Rank-r factor of the initial covariance.
  std::function<LowRankFactor(Index rank)> init_factor;
  /// Dense initial covariance (oracle scale).
  std::function<Matrix()> init_covariance;
  /// r initial ensemble members; `seed` selects the draw when the problem
  /// samples them.
  std::function<Matrix(Index size, std::uint64_t seed)> init_ensemble;

  Index dim() const { return transitions->dim(); }
  SqrtGaussian rrkf_init(Index rank) const { return SqrtGaussian{init_mean, init_factor(rank)}; }
};

/// Members drawn from N(mean, L L^T) with a full square root L.
Matrix sample_gaussian_members(const Vector& mean, const Matrix& sqrt_cov, Index size, std::uint64_t seed);

struct AdvectionScenario {
  Index n = 1024;
  double velocity = 1.0;
  double dt = 1.0;
  double dx = 1.0;
  Index obs_every = 5;
  Index obs_count = 10;
  double noise_std = 0.1;
  /// Number of transitions; the problem has steps + 1 time points, the first
  /// unobserved.
  Index steps = 800;
  /// Harmonics 0..harmonics of the initial-curve generator.
  Index harmonics = 25;
  double wave_period = 1000.0;
  /// Members of the ensemble whose sample covariance initializes the filters
  /// (0 means n).
  Index init_members = 0;
  std::uint64_t seed = 0;
};

/// Periodic advection with exact circular-shift dynamics and no process
/// noise.
Problem build_advection(const AdvectionScenario& scenario);

enum class MaternObservation {
  /// Every spatial location at every time point.
  full,
  /// `obs_count` random locations at `obs_times` random time points.
  random,
};

struct MaternScenario {
  /// Spatial locations, one row per point (1 or 2 columns).
  Matrix points;
  /// 2 * nu, one of 1, 3, 5.
  int smoothness = 1;
  double ell_t = 1.0;
  double ell_x = 1.0;
  double sigma_t = 1.0;
  double sigma_x = 1.0;
  double noise_std = 0.1;
  double dt = 0.1;
  double t0 = 0.0;
  /// Number of time points.
  Index steps = 100;
  MaternObservation observation = MaternObservation::full;
  Index obs_count = 0;
  Index obs_times = 0;
  std::uint64_t seed = 0;
};

/// Uniform grid over [lo, hi]^dim with the given spacing, row-major.
Matrix uniform_grid(double lo, double hi, double spacing, int dim);

/// Temporal Matern state-space pieces for nu = smoothness / 2.
struct MaternTemporal {
  Matrix drift;
  Matrix diffusion_gram;
  Matrix stationary_cov;
};
MaternTemporal matern_temporal(int smoothness, double lengthscale, double sigma);
/// sigma^2 * k_nu(|x - x'| / ell) Gram matrix over the rows of `points`.
Matrix matern_gram(const Matrix& points, int smoothness, double lengthscale, double sigma);

struct MaternModel {
  std::shared_ptr<const TransitionModel> transitions;
  MaternTemporal temporal;
  std::shared_ptr<const Matrix> spatial_gram;
  Matrix spatial_sqrt;
  Vector spatial_eigenvalues;
  Matrix spatial_eigenvectors;
  /// Spatial Gram jitter added for PSD safety (0 when none).
  double jitter = 0.0;
  Index spatial_dim() const { return spatial_gram->rows(); }
  Index order() const { return temporal.drift.rows(); }
  Index dim() const { return spatial_dim() * order(); }
  /// Top-`rank` factor of the stationary covariance.
  LowRankFactor stationary_factor(Index rank) const;
  Matrix stationary_covariance() const;
  /// Square root factor of the stationary covariance (n x n).
  Matrix stationary_sqrt() const;
};

/// Separable spatio-temporal Matern prior; state index = d * n_x + location.
MaternModel build_matern_model(const MaternScenario& scenario);

/// Matern problem with on-model data; initialized at the stationary prior,
/// the first correction conditions it on the first measurement.
Problem build_matern(const MaternScenario& scenario);
/// Fraction of stationary-covariance trace captured by its top-`rank`
/// eigenpairs.
double matern_spectrum_fraction(const MaternModel& model, Index rank);

/// Simulates x_l = Phi x_{l-1} + Q^{1/2} z from x_0 ~ N(0, init_sqrt init_sqrt^T)
/// and y_l = C x_l + noise. Observation values in `observations` are
/// overwritten; returns the trajectory (n x N).
Matrix generate_on_model_data(const TransitionModel& transitions, const Matrix& init_sqrt, const Vector& init_mean,
                              ObservationSequence& observations, std::uint64_t seed);
/// Same with structured square roots; `noise_sqrt(dt)` maps standard normal
/// draws to N(0, Q(dt)).
Matrix generate_on_model_data(const TransitionModel& transitions, const LinearOperator& init_sqrt,
                              const Vector& init_mean, const std::function<LinearOperator(double)>& noise_sqrt,
                              ObservationSequence& observations, std::uint64_t seed);

/// Random stable LTI system with m = `obs_dim` dense observations, exact
/// dynamics and dense SPD initial covariance.
struct RandomLtiScenario {
  Index n = 8;
  Index obs_dim = 8;
  Index steps = 25;
  double dt = 0.1;
  double noise_std = 0.5;
  std::uint64_t seed = 0;
};
Problem build_random_lti(const RandomLtiScenario& scenario);

/// Problem whose filtering covariances all live in a fixed `true_rank`
/// subspace of R^n.
struct RankCollapseScenario {
  Index n = 1000;
  Index true_rank = 7;
  Index obs_dim = 20;
  Index steps = 50;
  double dt = 0.1;
  double noise_std = 0.3;
  /// Decay rate of the complement of the subspace.
  double complement_decay = 1.0;
  std::uint64_t seed = 0;
};
Problem build_rank_collapse(const RankCollapseScenario& scenario);

}  // namespace rrkf
