#include "rrkf/dlra.hpp"

#include "rrkf/random.hpp"

#include <sstream>

namespace rrkf {

namespace {

Matrix rk4_k_step(const KStepField& field, const Matrix& k0, double h, Index substeps) {
  const double step = h / static_cast<double>(substeps);
  Matrix k = k0;
  for (Index s = 0; s < substeps; ++s) {
    const Matrix k1 = field(k);
    const Matrix k2 = field(k + 0.5 * step * k1);
    const Matrix k3 = field(k + 0.5 * step * k2);
    const Matrix k4 = field(k + step * k3);
    k += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return k;
}

// vec(K') = (I_r kron A + C^T kron I_n) vec(K) + vec(G), solved exactly
// through exp of the augmented generator [[L, vec G], [0, 0]].
Matrix exponential_k_step(const KStepField& field, const LtiSdeModel& model, const Matrix& k0, double h,
                          Index cap) {
  const Index n = k0.rows();
  const Index r = k0.cols();
  if (n * r > cap) {
    std::ostringstream msg;
    msg << "exponential K-step: n*r = " << n * r << " exceeds cap " << cap;
    throw CapacityError(msg.str());
  }
  const Matrix a = model.drift.to_dense();
  const Matrix& coupling = field.coupling();
  const Index size = n * r;
  Matrix gen = Matrix::Zero(size + 1, size + 1);
  for (Index j = 0; j < r; ++j) {
    gen.block(j * n, j * n, n, n) += a;
    for (Index i = 0; i < r; ++i) {
      // (C^T kron I)_{(j,i) block} = C(i, j) I
      gen.block(j * n, i * n, n, n).diagonal().array() += coupling(i, j);
    }
  }
  gen.block(0, size, size, 1) = Eigen::Map<const Vector>(field.inhomogeneity().data(), size);
  gen *= h;
  const Matrix e = matrix_exponential(gen);
  Vector vk0 = Eigen::Map<const Vector>(k0.data(), size);
  Vector vk = e.topLeftCorner(size, size) * vk0 + e.block(0, size, size, 1);
  return Eigen::Map<const Matrix>(vk.data(), n, r);
}

void check_state(const DlraState& state, Index n) {
  const Index r = state.u.cols();
  require(state.u.rows() == n, "bug_step: basis has wrong row dimension");
  require(state.d.rows() == r && state.d.cols() == r, "bug_step: core must be r x r");
  const double ortho = (state.u.transpose() * state.u - Matrix::Identity(r, r)).norm();
  require(ortho <= 1e-10 * std::max<Index>(r, 1), "bug_step: basis is not orthonormal");
  const double asym = (state.d - state.d.transpose()).norm();
  require(asym <= 1e-10 * std::max(state.d.norm(), 1.0), "bug_step: core is not symmetric");
}

}  // namespace

Matrix integrate_k_step(const KStepField& field, const LtiSdeModel& model, const Matrix& k0, double h,
                        const DlraConfig& config) {
  if (config.k_step == KStepMethod::exponential) {
    return exponential_k_step(field, model, k0, h, config.exponential_cap);
  }
  require(config.rk4_substeps >= 1, "integrate_k_step: rk4_substeps must be positive");
  return rk4_k_step(field, k0, h, config.rk4_substeps);
}

DlraState bug_step(const DlraState& state, const LtiSdeModel& model, double h, const DlraConfig& config,
                   std::uint64_t seed, BugStepInfo* info) {
  require(h > 0.0, "bug_step: step size must be positive");
  check_state(state, model.dim());
  const Matrix& u0 = state.u;

  // K-step
  const KStepField field(model, u0);
  const Matrix k = integrate_k_step(field, model, u0 * state.d, h, config);
  if (!k.allFinite()) {
    std::ostringstream msg;
    msg << "bug_step: non-finite K at t = " << state.t << ", h = " << h;
    throw NumericalError(msg.str());
  }
  OrthonormalBasis basis = orthonormalize(k, seed);
  const Matrix& uh = basis.q;
  const Matrix m = uh.transpose() * u0;

  // S-step
  const ProjectedLyapunov projected = project_lyapunov(model, uh);
  const Matrix d0 = m * state.d * m.transpose();
  Matrix dh = lyapunov_flow(projected.drift, projected.forcing, d0, h);
  if (!dh.allFinite()) throw NumericalError("bug_step: non-finite S-step result");

  if (info) {
    info->basis_completed = basis.completed;
    info->k_rank = basis.input_rank;
  }
  return DlraState{uh, symmetrize(dh), state.t + h};
}

ProcessNoiseFactor process_noise_factor(const LtiSdeModel& model, const Matrix* basis_prev, Index rank,
                                        double dt, const DlraConfig& config, std::uint64_t seed) {
  require(dt > 0.0, "process_noise_factor: dt must be positive");
  require(config.substeps >= 1, "process_noise_factor: substeps must be positive");
  const Index n = model.dim();
  ProcessNoiseFactor out;

  Matrix u0;
  if (basis_prev != nullptr) {
    require(basis_prev->rows() == n && basis_prev->cols() == rank,
            "process_noise_factor: previous basis has wrong shape");
    u0 = *basis_prev;
  } else {
    u0 = random_orthonormal(n, rank, mix_seed(seed, 0x62617369));
  }

  if (model.diffusion_gram.is_zero() || model.diffusion_gram.apply_mat(u0).norm() == 0.0) {
    // With D0 = 0 and B B^T U0 = 0 the K-step stays at zero, and so does D.
    out.factor = LowRankFactor::zero(n, rank);
    out.basis = std::move(u0);
    return out;
  }

  DlraState state{std::move(u0), Matrix::Zero(rank, rank), 0.0};
  const double h = dt / static_cast<double>(config.substeps);
  for (Index s = 0; s < config.substeps; ++s) {
    BugStepInfo info;
    state = bug_step(state, model, h, config, mix_seed(seed, static_cast<std::uint64_t>(s)), &info);
    out.basis_completed = out.basis_completed || info.basis_completed;
  }

  double clamped = 0.0;
  const Matrix root = psd_sqrt(state.d, &clamped);
  out.clamped_mass = clamped;
  const double trace = state.d.trace();
  out.clamp_warning = clamped > 1e-6 * std::max(std::abs(trace), 1e-300) && clamped > 0.0;
  out.factor = LowRankFactor(state.u * root);
  out.basis = std::move(state.u);
  return out;
}

}  // namespace rrkf
