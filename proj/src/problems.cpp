#include "rrkf/problems.hpp"

#include "rrkf/lti_sde.hpp"
#include "rrkf/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace rrkf {

namespace {

Matrix kron_dense(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

std::vector<Index> distinct_indices(Index range, Index count, Rng& rng) {
  require(count <= range, "distinct_indices: count exceeds range");
  std::vector<Index> pool(static_cast<std::size_t>(range));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    const Index j = i + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(range - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Top-`rank` factor from a thin representation Q M Q^T with orthonormal Q.
LowRankFactor factor_from_core(const Matrix& q, const Matrix& core, Index rank, Index n) {
  const Index keep = std::min(rank, core.rows());
  const LowRankFactor small = truncated_eigen_factor(core, keep);
  Matrix out = Matrix::Zero(n, rank);
  out.leftCols(keep) = q * small.matrix();
  return LowRankFactor(std::move(out));
}

}  // namespace

Matrix sample_gaussian_members(const Vector& mean, const Matrix& sqrt_cov, Index size, std::uint64_t seed) {
  Rng rng(seed, 0x6d656d);
  Matrix out = sqrt_cov * rng.normal_matrix(sqrt_cov.cols(), size);
  out.colwise() += mean;
  return out;
}

Matrix generate_on_model_data(const TransitionModel& transitions, const Matrix& init_sqrt, const Vector& init_mean,
                              ObservationSequence& observations, std::uint64_t seed) {
  return generate_on_model_data(
      transitions, LinearOperator::dense(init_sqrt), init_mean,
      [&transitions](double dt) { return LinearOperator::dense(transitions.dense_noise_sqrt(dt)); }, observations,
      seed);
}

Matrix generate_on_model_data(const TransitionModel& transitions, const LinearOperator& init_sqrt,
                              const Vector& init_mean, const std::function<LinearOperator(double)>& noise_sqrt,
                              ObservationSequence& observations, std::uint64_t seed) {
  require_increasing_times(observations);
  const Index n = transitions.dim();
  Rng state_rng(seed, 0x747275);
  Rng obs_rng(seed, 0x6f6273);
  Matrix truth(n, static_cast<Index>(observations.size()));
  TransitionCache cache(transitions);
  std::optional<double> noise_dt;
  LinearOperator noise;
  Vector x = init_mean + init_sqrt.apply(state_rng.normal_vector(init_sqrt.in_dim()));
  for (std::size_t l = 0; l < observations.size(); ++l) {
    if (l > 0) {
      const double dt = observations[l].time - observations[l - 1].time;
      x = cache.phi(dt).apply(x);
      if (!transitions.is_noise_free()) {
        if (!noise_dt || std::abs(*noise_dt - dt) > 1e-14 * std::max(1.0, dt)) {
          noise = noise_sqrt(dt);
          noise_dt = dt;
        }
        x += noise.apply(state_rng.normal_vector(noise.in_dim()));
      }
    }
    truth.col(static_cast<Index>(l)) = x;
    Observation& obs = observations[l];
    if (obs.model) {
      obs.value = obs.model->c.apply(x) + obs.model->noise_sqrt.apply(obs_rng.normal_vector(obs.model->dim()));
    }
  }
  return truth;
}

// ---------------------------------------------------------------- advection

Problem build_advection(const AdvectionScenario& sc) {
  require(sc.n > 0 && sc.obs_count > 0 && sc.obs_count <= sc.n, "build_advection: invalid sizes");
  require(sc.obs_every > 0 && sc.steps >= 0 && sc.noise_std > 0.0, "build_advection: invalid schedule");
  const double cells = sc.velocity * sc.dt / sc.dx;
  require(std::abs(cells - std::round(cells)) < 1e-12, "build_advection: velocity * dt / dx must be an integer");
  const Index shift = static_cast<Index>(std::llround(cells));
  const Index n = sc.n;
  const Index p = 2 * sc.harmonics + 1;

  // Column 0 is constant; columns 2k-1, 2k hold sin/cos of harmonic k.
  Matrix basis(n, p);
  for (Index i = 0; i < n; ++i) {
    basis(i, 0) = 1.0;
    for (Index k = 1; k <= sc.harmonics; ++k) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / sc.wave_period * static_cast<double>(i);
      basis(i, 2 * k - 1) = std::sin(theta);
      basis(i, 2 * k) = std::cos(theta);
    }
  }
  const Matrix gram = basis.transpose() * basis / static_cast<double>(n);
  const Vector basis_mean = basis.colwise().mean().transpose();

  // a sin(theta + phi) = a cos(phi) sin(theta) + a sin(phi) cos(theta), then
  // divide by the member's standard deviation over the grid.
  auto draw = [basis_mean, gram, p, harmonics = sc.harmonics](Rng& rng) {
    Vector c = Vector::Zero(p);
    const double a0 = rng.uniform();
    const double phi0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    c(0) = a0 * std::sin(phi0);
    for (Index k = 1; k <= harmonics; ++k) {
      const double a = rng.uniform();
      const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
      c(2 * k - 1) = a * std::cos(phi);
      c(2 * k) = a * std::sin(phi);
    }
    const double mean = basis_mean.dot(c);
    const double var = c.dot(gram * c) - mean * mean;
    return Vector(c / std::sqrt(std::max(var, 1e-300)));
  };

  const Index members = sc.init_members > 0 ? sc.init_members : n;
  Rng ens_rng(sc.seed, 1);
  Matrix coeffs(p, members);
  for (Index j = 0; j < members; ++j) coeffs.col(j) = draw(ens_rng);
  const Vector coeff_mean = coeffs.rowwise().mean();
  const Matrix centered = coeffs.colwise() - coeff_mean;
  const Matrix coeff_cov = centered * centered.transpose() / static_cast<double>(members - 1);

  Rng truth_rng(sc.seed, 2);
  const Vector psi0 = basis * draw(truth_rng);

  Problem prob;
  prob.name = "advection";
  const double velocity = sc.velocity;
  const double dx = sc.dx;
  prob.transitions = std::make_shared<TransitionModel>(TransitionModel::noise_free(n, [n, velocity, dx](double dt) {
    const double c = velocity * dt / dx;
    require(std::abs(c - std::round(c)) < 1e-9, "advection: step must move an integer number of cells");
    return LinearOperator::circular_shift(n, static_cast<Index>(std::llround(c)));
  }));

  std::vector<Index> idx(static_cast<std::size_t>(sc.obs_count));
  for (Index k = 0; k < sc.obs_count; ++k) idx[static_cast<std::size_t>(k)] = (k * n) / sc.obs_count;
  auto obs_model = std::make_shared<const ObservationModel>(
      ObservationModel::with_isotropic_noise(LinearOperator::selection(n, idx), sc.noise_std));

  Rng noise_rng(sc.seed, 3);
  prob.truth.resize(n, sc.steps + 1);
  for (Index l = 0; l <= sc.steps; ++l) {
    const Index s = ((shift * l) % n + n) % n;
    for (Index i = 0; i < n; ++i) prob.truth(i, l) = psi0((i - s + n) % n);
    Observation obs;
    obs.time = static_cast<double>(l) * sc.dt;
    if (l > 0 && l % sc.obs_every == 0) {
      obs.model = obs_model;
      obs.value = obs_model->c.apply(prob.truth.col(l)) + sc.noise_std * noise_rng.normal_vector(sc.obs_count);
    }
    prob.observations.push_back(std::move(obs));
  }

  prob.init_mean = basis * coeff_mean;
  Eigen::HouseholderQR<Matrix> qr(basis);
  const Matrix q = qr.householderQ() * Matrix::Identity(n, p);
  const Matrix rb = q.transpose() * basis;
  const Matrix core = symmetrize(rb * coeff_cov * rb.transpose());
  prob.init_factor = [q, core, n](Index rank) { return factor_from_core(q, core, rank, n); };
  prob.init_covariance = [basis, coeff_cov]() { return Matrix(symmetrize(basis * coeff_cov * basis.transpose())); };
  const std::uint64_t seed = sc.seed;
  prob.init_ensemble = [basis, coeffs, draw, seed, members](Index size, std::uint64_t member_seed) mutable {
    Matrix c(coeffs.rows(), size);
    if (member_seed == 0 && size <= members) {
      c = coeffs.leftCols(size);
    } else {
      Rng rng(mix_seed(seed, member_seed), 4);
      for (Index j = 0; j < size; ++j) c.col(j) = draw(rng);
    }
    return Matrix(basis * c);
  };
  return prob;
}

// ------------------------------------------------------------------ matern

Matrix uniform_grid(double lo, double hi, double spacing, int dim) {
  require(hi > lo && spacing > 0.0 && (dim == 1 || dim == 2), "uniform_grid: invalid arguments");
  const Index count = static_cast<Index>(std::llround((hi - lo) / spacing)) + 1;
  if (dim == 1) {
    Matrix pts(count, 1);
    for (Index i = 0; i < count; ++i) pts(i, 0) = lo + spacing * static_cast<double>(i);
    return pts;
  }
  Matrix pts(count * count, 2);
  for (Index i = 0; i < count; ++i) {
    for (Index j = 0; j < count; ++j) {
      pts(i * count + j, 0) = lo + spacing * static_cast<double>(i);
      pts(i * count + j, 1) = lo + spacing * static_cast<double>(j);
    }
  }
  return pts;
}

MaternTemporal matern_temporal(int smoothness, double ell, double sigma) {
  require(ell > 0.0 && sigma > 0.0, "matern_temporal: lengthscale and scale must be positive");
  const double s2 = sigma * sigma;
  MaternTemporal out;
  double q = 0.0;
  switch (smoothness) {
    case 1: {
      const double lam = 1.0 / ell;
      out.drift = Matrix::Constant(1, 1, -lam);
      q = 2.0 * s2 * lam;
      out.stationary_cov = Matrix::Constant(1, 1, s2);
      break;
    }
    case 3: {
      const double lam = std::sqrt(3.0) / ell;
      out.drift.resize(2, 2);
      out.drift << 0.0, 1.0, -lam * lam, -2.0 * lam;
      q = 4.0 * lam * lam * lam * s2;
      out.stationary_cov = Matrix::Zero(2, 2);
      out.stationary_cov(0, 0) = s2;
      out.stationary_cov(1, 1) = lam * lam * s2;
      break;
    }
    case 5: {
      const double lam = std::sqrt(5.0) / ell;
      out.drift.resize(3, 3);
      out.drift << 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -lam * lam * lam, -3.0 * lam * lam, -3.0 * lam;
      q = 16.0 / 3.0 * s2 * std::pow(lam, 5);
      const double kappa = lam * lam * s2 / 3.0;
      out.stationary_cov.resize(3, 3);
      out.stationary_cov << s2, 0.0, -kappa, 0.0, kappa, 0.0, -kappa, 0.0, std::pow(lam, 4) * s2;
      break;
    }
    default:
      throw std::invalid_argument("matern_temporal: smoothness must be 1, 3 or 5 (twice nu)");
  }
  const Index d = out.drift.rows();
  out.diffusion_gram = Matrix::Zero(d, d);
  out.diffusion_gram(d - 1, d - 1) = q;
  return out;
}

Matrix matern_gram(const Matrix& points, int smoothness, double ell, double sigma) {
  require(ell > 0.0 && sigma > 0.0, "matern_gram: lengthscale and scale must be positive");
  const Index n = points.rows();
  const double s2 = sigma * sigma;
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      double v = 0.0;
      switch (smoothness) {
        case 1:
          v = std::exp(-d / ell);
          break;
        case 3: {
          const double a = std::sqrt(3.0) * d / ell;
          v = (1.0 + a) * std::exp(-a);
          break;
        }
        case 5: {
          const double a = std::sqrt(5.0) * d / ell;
          v = (1.0 + a + a * a / 3.0) * std::exp(-a);
          break;
        }
        default:
          throw std::invalid_argument("matern_gram: smoothness must be 1, 3 or 5 (twice nu)");
      }
      k(i, j) = k(j, i) = s2 * v;
    }
  }
  return k;
}

MaternModel build_matern_model(const MaternScenario& sc) {
  require(sc.points.rows() > 0, "build_matern_model: empty spatial grid");
  require(sc.dt > 0.0 && sc.noise_std > 0.0, "build_matern_model: dt and noise must be positive");
  MaternModel out;
  out.temporal = matern_temporal(sc.smoothness, sc.ell_t, sc.sigma_t);
  Matrix gram = matern_gram(sc.points, sc.smoothness, sc.ell_x, sc.sigma_x);
  const Index nx = gram.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.eigenvalues().minCoeff() < 0.0) {
    out.jitter = 1e-10 * gram.trace() / static_cast<double>(nx);
    gram.diagonal().array() += out.jitter;
    eig.compute(gram);
  }
  out.spatial_eigenvalues = eig.eigenvalues().cwiseMax(0.0);
  out.spatial_eigenvectors = eig.eigenvectors();
  out.spatial_sqrt = out.spatial_eigenvectors * out.spatial_eigenvalues.cwiseSqrt().asDiagonal() *
                     out.spatial_eigenvectors.transpose();
  out.spatial_gram = std::make_shared<const Matrix>(std::move(gram));

  const MaternTemporal temporal = out.temporal;
  const Index d = temporal.drift.rows();
  LtiSdeModel sde;
  sde.drift = LinearOperator::kron_identity(temporal.drift, nx);
  sde.diffusion_gram = LinearOperator::kron(temporal.diffusion_gram, out.spatial_gram);
  sde.wiener_dim = nx;

  auto phi = [temporal, nx](double dt) {
    return LinearOperator::kron_identity(matrix_exponential(temporal.drift * dt), nx);
  };
  auto noise_t = [temporal](double dt) {
    const Matrix e = matrix_exponential(temporal.drift * dt);
    return Matrix(symmetrize(temporal.stationary_cov - e * temporal.stationary_cov * e.transpose()));
  };
  const std::shared_ptr<const Matrix> kx = out.spatial_gram;
  const Matrix kx_sqrt = out.spatial_sqrt;
  auto dense_noise = [noise_t, kx](double dt) { return kron_dense(noise_t(dt), *kx); };
  auto dense_sqrt = [noise_t, kx_sqrt](double dt) { return kron_dense(psd_sqrt(noise_t(dt)), kx_sqrt); };

  if (d * nx <= 512) {
    (void)discretize_transition(sde, sc.dt, phi(sc.dt), 512);
  }
  out.transitions = std::make_shared<TransitionModel>(
      TransitionModel::from_sde(std::move(sde), phi, dense_noise, dense_sqrt));
  return out;
}

LowRankFactor MaternModel::stationary_factor(Index rank) const {
  const Index d = order();
  const Index nx = spatial_dim();
  require(rank >= 1 && rank <= d * nx, "stationary_factor: rank out of range");
  Eigen::SelfAdjointEigenSolver<Matrix> te(temporal.stationary_cov);
  const Vector tv = te.eigenvalues().cwiseMax(0.0);
  std::vector<std::pair<double, std::pair<Index, Index>>> prods;
  prods.reserve(static_cast<std::size_t>(d * nx));
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < nx; ++j) prods.push_back({tv(i) * spatial_eigenvalues(j), {i, j}});
  }
  std::stable_sort(prods.begin(), prods.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  Matrix out(d * nx, rank);
  for (Index k = 0; k < rank; ++k) {
    const auto& [val, ij] = prods[static_cast<std::size_t>(k)];
    const double s = std::sqrt(std::max(val, 0.0));
    for (Index a = 0; a < d; ++a) {
      out.block(a * nx, k, nx, 1) = s * te.eigenvectors()(a, ij.first) * spatial_eigenvectors.col(ij.second);
    }
  }
  return LowRankFactor(std::move(out));
}

Matrix MaternModel::stationary_covariance() const { return kron_dense(temporal.stationary_cov, *spatial_gram); }

Matrix MaternModel::stationary_sqrt() const { return kron_dense(psd_sqrt(temporal.stationary_cov), spatial_sqrt); }

double matern_spectrum_fraction(const MaternModel& model, Index rank) {
  Eigen::SelfAdjointEigenSolver<Matrix> te(model.temporal.stationary_cov);
  std::vector<double> prods;
  for (Index i = 0; i < model.order(); ++i) {
    for (Index j = 0; j < model.spatial_dim(); ++j) {
      prods.push_back(std::max(te.eigenvalues()(i), 0.0) * model.spatial_eigenvalues(j));
    }
  }
  std::sort(prods.begin(), prods.end(), std::greater<>());
  const double total = std::accumulate(prods.begin(), prods.end(), 0.0);
  const double top = std::accumulate(prods.begin(), prods.begin() + std::min<std::size_t>(prods.size(), rank), 0.0);
  return total > 0.0 ? top / total : 1.0;
}

Problem build_matern(const MaternScenario& sc) {
  require(sc.steps >= 1, "build_matern: need at least one time point");
  const MaternModel model = build_matern_model(sc);
  const Index nx = model.spatial_dim();
  const Index n = model.dim();

  Problem prob;
  prob.name = "matern";
  prob.transitions = model.transitions;
  Rng rng(sc.seed, 0x6d61);

  std::vector<bool> observed(static_cast<std::size_t>(sc.steps), sc.observation == MaternObservation::full);
  if (sc.observation == MaternObservation::random) {
    require(sc.obs_times <= sc.steps && sc.obs_count >= 1 && sc.obs_count <= nx,
            "build_matern: invalid random observation counts");
    for (Index t : distinct_indices(sc.steps, sc.obs_times, rng)) observed[static_cast<std::size_t>(t)] = true;
  }
  std::shared_ptr<const ObservationModel> full_model;
  if (sc.observation == MaternObservation::full) {
    std::vector<Index> idx(static_cast<std::size_t>(nx));
    std::iota(idx.begin(), idx.end(), Index{0});
    full_model = std::make_shared<const ObservationModel>(
        ObservationModel::with_isotropic_noise(LinearOperator::selection(n, idx), sc.noise_std));
  }
  for (Index l = 0; l < sc.steps; ++l) {
    Observation obs;
    obs.time = sc.t0 + sc.dt * static_cast<double>(l);
    if (observed[static_cast<std::size_t>(l)]) {
      obs.model = full_model ? full_model
                             : std::make_shared<const ObservationModel>(ObservationModel::with_isotropic_noise(
                                   LinearOperator::selection(n, distinct_indices(nx, sc.obs_count, rng)),
                                   sc.noise_std));
    }
    prob.observations.push_back(std::move(obs));
  }

  const MaternTemporal temporal = model.temporal;
  const Matrix kx_sqrt = model.spatial_sqrt;
  auto kx_sqrt_ptr = std::make_shared<const Matrix>(kx_sqrt);
  const LinearOperator init_sqrt = LinearOperator::kron(psd_sqrt(temporal.stationary_cov), kx_sqrt_ptr);
  auto noise_sqrt = [temporal, kx_sqrt_ptr](double dt) {
    const Matrix e = matrix_exponential(temporal.drift * dt);
    const Matrix qt = symmetrize(temporal.stationary_cov - e * temporal.stationary_cov * e.transpose());
    return LinearOperator::kron(psd_sqrt(qt), kx_sqrt_ptr);
  };
  prob.init_mean = Vector::Zero(n);
  prob.truth = generate_on_model_data(*prob.transitions, init_sqrt, prob.init_mean, noise_sqrt, prob.observations,
                                      mix_seed(sc.seed, 0x7472));

  prob.init_factor = [model](Index rank) { return model.stationary_factor(rank); };
  prob.init_covariance = [model]() { return model.stationary_covariance(); };
  const std::uint64_t seed = sc.seed;
  prob.init_ensemble = [init_sqrt, n, seed](Index size, std::uint64_t member_seed) {
    Rng r(mix_seed(seed, member_seed), 0x656e);
    return Matrix(init_sqrt.apply_mat(r.normal_matrix(init_sqrt.in_dim(), size)));
  };
  (void)n;
  return prob;
}

// -------------------------------------------------------------- random lti

Problem build_random_lti(const RandomLtiScenario& sc) {
  const Index n = sc.n;
  const Index m = sc.obs_dim;
  require(n >= 1 && m >= 1 && sc.steps >= 1, "build_random_lti: invalid sizes");
  Rng rng(sc.seed, 0x6c7469);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const Matrix a = 0.8 * scale * rng.normal_matrix(n, n) - 1.2 * Matrix::Identity(n, n);
  const Matrix w = rng.normal_matrix(n, n);
  const Matrix g = w * w.transpose() / static_cast<double>(n) + 0.05 * Matrix::Identity(n, n);
  const Matrix v = rng.normal_matrix(n, n);
  const Matrix sigma0 = v * v.transpose() / static_cast<double>(n) + 0.1 * Matrix::Identity(n, n);
  const Matrix c = scale * rng.normal_matrix(m, n);

  LtiSdeModel sde;
  sde.drift = LinearOperator::dense(a);
  sde.diffusion_gram = LinearOperator::dense(g);
  sde.wiener_dim = n;

  Problem prob;
  prob.name = "random_lti";
  prob.transitions = std::make_shared<TransitionModel>(TransitionModel::from_sde(std::move(sde)));
  auto obs_model = std::make_shared<const ObservationModel>(
      ObservationModel::with_isotropic_noise(LinearOperator::dense(c), sc.noise_std));
  for (Index l = 0; l < sc.steps; ++l) {
    Observation obs;
    obs.time = sc.dt * static_cast<double>(l);
    obs.model = obs_model;
    prob.observations.push_back(std::move(obs));
  }
  prob.init_mean = 0.5 * rng.normal_vector(n);
  const Matrix init_sqrt = Eigen::LLT<Matrix>(sigma0).matrixL();
  prob.truth = generate_on_model_data(*prob.transitions, init_sqrt, prob.init_mean, prob.observations,
                                      mix_seed(sc.seed, 0x7472));
  prob.init_factor = [sigma0](Index rank) { return truncated_eigen_factor(sigma0, rank); };
  prob.init_covariance = [sigma0]() { return sigma0; };
  const Vector mean = prob.init_mean;
  prob.init_ensemble = [mean, init_sqrt](Index size, std::uint64_t seed) {
    return sample_gaussian_members(mean, init_sqrt, size, seed);
  };
  return prob;
}

// ----------------------------------------------------------- rank collapse

Problem build_rank_collapse(const RankCollapseScenario& sc) {
  const Index n = sc.n;
  const Index k = sc.true_rank;
  require(k >= 1 && k < n && sc.obs_dim >= 1 && sc.obs_dim <= n, "build_rank_collapse: invalid sizes");
  Rng rng(sc.seed, 0x72616e);
  auto basis = std::make_shared<const Matrix>(random_orthonormal(n, k, mix_seed(sc.seed, 0x6261)));
  const double ks = 1.0 / std::sqrt(static_cast<double>(k));
  const Matrix as = 0.6 * ks * rng.normal_matrix(k, k) - 0.8 * Matrix::Identity(k, k);
  const Matrix w = rng.normal_matrix(k, k);
  const Matrix gs = w * w.transpose() * ks * ks + 0.05 * Matrix::Identity(k, k);
  const Matrix v = rng.normal_matrix(k, k);
  const Matrix s0 = v * v.transpose() * ks * ks + 0.1 * Matrix::Identity(k, k);
  const double decay = sc.complement_decay;

  auto subspace_map = [basis](const Matrix& small, double outside) {
    return [basis, small, outside](const Matrix& x) {
      const Matrix coords = basis->transpose() * x;
      Matrix out = (*basis) * (small * coords);
      if (outside != 0.0) out += outside * (x - (*basis) * coords);
      return out;
    };
  };
  auto subspace_op = [&](const Matrix& small, double outside) {
    return LinearOperator(n, n, subspace_map(small, outside), subspace_map(small.transpose(), outside),
                          CostClass::linear);
  };

  LtiSdeModel sde;
  sde.drift = subspace_op(as, -decay);
  sde.diffusion_gram = subspace_op(gs, 0.0);
  sde.wiener_dim = k;

  auto phi = [subspace_map, as, decay, n](double dt) {
    const Matrix e = matrix_exponential(as * dt);
    return LinearOperator(n, n, subspace_map(e, std::exp(-decay * dt)),
                          subspace_map(Matrix(e.transpose()), std::exp(-decay * dt)), CostClass::linear);
  };
  auto noise_s = [as, gs, k](double dt) { return lyapunov_flow(as, gs, Matrix::Zero(k, k), dt); };
  auto dense_noise = [basis, noise_s](double dt) {
    return Matrix(symmetrize((*basis) * noise_s(dt) * basis->transpose()));
  };
  auto dense_sqrt = [basis, noise_s](double dt) {
    return Matrix((*basis) * psd_sqrt(noise_s(dt)) * basis->transpose());
  };

  Problem prob;
  prob.name = "rank_collapse";
  prob.transitions =
      std::make_shared<TransitionModel>(TransitionModel::from_sde(std::move(sde), phi, dense_noise, dense_sqrt));
  auto obs_model = std::make_shared<const ObservationModel>(ObservationModel::with_isotropic_noise(
      LinearOperator::selection(n, distinct_indices(n, sc.obs_dim, rng)), sc.noise_std));
  for (Index l = 0; l < sc.steps; ++l) {
    Observation obs;
    obs.time = sc.dt * static_cast<double>(l);
    obs.model = obs_model;
    prob.observations.push_back(std::move(obs));
  }
  prob.init_mean = (*basis) * rng.normal_vector(k);
  const Matrix s0_sqrt = psd_sqrt(s0);
  const LinearOperator init_sqrt = LinearOperator::dense((*basis) * s0_sqrt);
  auto noise_sqrt = [basis, noise_s](double dt) { return LinearOperator::dense((*basis) * psd_sqrt(noise_s(dt))); };
  prob.truth = generate_on_model_data(*prob.transitions, init_sqrt, prob.init_mean, noise_sqrt, prob.observations,
                                      mix_seed(sc.seed, 0x7472));
  prob.init_factor = [basis, s0, n](Index rank) { return factor_from_core(*basis, s0, rank, n); };
  prob.init_covariance = [basis, s0]() { return Matrix(symmetrize((*basis) * s0 * basis->transpose())); };
  const Vector mean = prob.init_mean;
  const Matrix member_sqrt = (*basis) * s0_sqrt;
  prob.init_ensemble = [mean, member_sqrt](Index size, std::uint64_t seed) {
    return sample_gaussian_members(mean, member_sqrt, size, seed);
  };
  return prob;
}

}  // namespace rrkf
