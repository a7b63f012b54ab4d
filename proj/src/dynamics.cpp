#include "nmor/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "nmor/error.hpp"

namespace nmor {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// -i [H, .] in column-stacked form.
CMatrix commutator_superop(const CMatrix& h) {
  const CMatrix id = CMatrix::Identity(h.rows(), h.cols());
  return Complex(0.0, -1.0) * (kron(id, h) - kron(h.transpose(), id));
}

// D[C] rho = C rho C^+ - {C^+ C, rho}/2
CMatrix dissipator(const CMatrix& c) {
  const CMatrix id = CMatrix::Identity(c.rows(), c.cols());
  const CMatrix cdc = c.adjoint() * c;
  return kron(c.conjugate(), c) - 0.5 * kron(id, cdc) - 0.5 * kron(cdc.transpose(), id);
}

CMatrix unit(int dim, int i, int j) {
  CMatrix m = CMatrix::Zero(dim, dim);
  m(i, j) = 1.0;
  return m;
}

CVector trace_functional(int dim) {
  CVector t = CVector::Zero(dim * dim);
  for (int i = 0; i < dim; ++i) t(vec_index(i, i, dim)) = 1.0;
  return t;
}

struct DriveSet {
  const FieldDrive* probe = nullptr;
  const FieldDrive* wm = nullptr;
};

DriveSet sort_drives(const LevelScheme& scheme, std::span<const FieldDrive> drives) {
  DriveSet set;
  for (const auto& d : drives) {
    d.validate();
    const FieldDrive*& slot = d.role == DriveRole::probe ? set.probe : set.wm;
    if (slot) throw ValidationError("duplicate " + std::string(to_string(d.role)) + " drive", "drives");
    slot = &d;
  }
  if (!set.probe) throw ValidationError("exactly one probe drive is required", "drives");
  if (scheme.kind() == SchemeKind::single_lambda && set.wm)
    throw ValidationError("single_lambda scheme has no WM branches", "drives");
  if (scheme.kind() == SchemeKind::wave_mixing && !set.wm)
    throw ValidationError("wave_mixing scheme needs a WM drive (use zero Rabi to disable)", "drives");
  return set;
}

}  // namespace

// ---------------------------------------------------------------------------
// DensityMatrix

bool InvariantReport::satisfies(const InvariantTolerances& tol) const {
  return hermiticity_error < tol.hermiticity && trace_error < tol.trace &&
         min_eigenvalue >= tol.min_eigenvalue;
}

InvariantReport InvariantReport::worst(const InvariantReport& other) const {
  return {std::max(hermiticity_error, other.hermiticity_error),
          std::max(trace_error, other.trace_error), std::min(min_eigenvalue, other.min_eigenvalue)};
}

DensityMatrix::DensityMatrix(CMatrix rho) : rho_(std::move(rho)) {
  if (rho_.rows() != rho_.cols() || rho_.rows() == 0)
    throw ValidationError("density matrix must be square and non-empty");
}

DensityMatrix DensityMatrix::from_vec(const CVector& v, int dim) {
  if (v.size() != dim * dim) throw ValidationError("vec length does not match dimension");
  CMatrix m(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) m(i, j) = v(vec_index(i, j, dim));
  return DensityMatrix(std::move(m));
}

DensityMatrix DensityMatrix::diagonal(std::span<const double> populations) {
  const int n = static_cast<int>(populations.size());
  CMatrix m = CMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = populations[i];
  return DensityMatrix(std::move(m));
}

CVector DensityMatrix::vec() const {
  const int n = dim();
  CVector v(n * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) v(vec_index(i, j, n)) = rho_(i, j);
  return v;
}

InvariantReport DensityMatrix::invariants() const {
  InvariantReport r;
  r.hermiticity_error = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
  r.trace_error = std::abs(rho_.trace() - Complex(1.0, 0.0));
  const CMatrix herm = 0.5 * (rho_ + rho_.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  r.min_eigenvalue = es.eigenvalues().minCoeff();
  return r;
}

void DensityMatrix::require_valid(const InvariantTolerances& tol) const {
  const InvariantReport r = invariants();
  if (r.satisfies(tol)) return;
  std::ostringstream os;
  os << "density matrix invariant violated:";
  if (!(r.hermiticity_error < tol.hermiticity)) os << " hermiticity error " << r.hermiticity_error;
  if (!(r.trace_error < tol.trace)) os << " trace error " << r.trace_error;
  if (!(r.min_eigenvalue >= tol.min_eigenvalue)) os << " min eigenvalue " << r.min_eigenvalue;
  throw NumericalError(os.str());
}

DensityMatrix DensityMatrix::relabeled(int a, int b) const {
  Eigen::PermutationMatrix<Eigen::Dynamic> p(dim());
  p.setIdentity();
  std::swap(p.indices()(a), p.indices()(b));
  return DensityMatrix(p * rho_ * p.transpose());
}

// ---------------------------------------------------------------------------
// Liouvillian

LiouvillianModel::LiouvillianModel(const LevelScheme& scheme, std::span<const FieldDrive> drives)
    : dim_(scheme.n_states()), drives_(drives.begin(), drives.end()) {
  const DriveSet set = sort_drives(scheme, drives);
  const int n = dim_;

  CMatrix h = CMatrix::Zero(n, n);
  h(kExcitedProbe, kExcitedProbe) = -set.probe->detuning_hz;
  if (set.wm) h(kExcitedWm, kExcitedWm) = -set.wm->detuning_hz;
  for (const auto& c : scheme.branches()) {
    const bool is_probe = c.branch == Branch::probe_plus || c.branch == Branch::probe_minus;
    const FieldDrive& d = is_probe ? *set.probe : *set.wm;
    const bool plus = c.branch == Branch::probe_plus || c.branch == Branch::wm_plus;
    const double rabi = (plus ? d.rabi_plus_hz : d.rabi_minus_hz) * c.relative_dipole;
    h(c.upper, c.lower) += 0.5 * rabi;
    h(c.lower, c.upper) += 0.5 * rabi;
  }

  CMatrix hz = CMatrix::Zero(n, n);
  hz(kGround1, kGround1) = 0.5;
  hz(kGround3, kGround3) = -0.5;

  const double decay = scheme.excited_decay_hz();
  const double g0 = scheme.ground_decoherence_hz();
  const double trapped = scheme.trapped_fraction();

  CMatrix relax = CMatrix::Zero(n * n, n * n);
  for (int e : scheme.excited_states()) {
    relax += dissipator(std::sqrt(0.5 * decay) * unit(n, kGround1, e));
    relax += dissipator(std::sqrt(0.5 * decay) * unit(n, kGround3, e));
  }
  // Pure dephasing: rho_13 decays at g0.
  CMatrix z = unit(n, kGround1, kGround1) - unit(n, kGround3, kGround3);
  relax += dissipator(std::sqrt(0.5 * g0) * z);
  // Reset toward sigma: g0 (sigma tr(rho) - rho).
  CVector sigma = CVector::Zero(n * n);
  sigma(vec_index(kGround1, kGround1, n)) = 0.5 * (1.0 - trapped);
  sigma(vec_index(kGround3, kGround3, n)) = 0.5 * (1.0 - trapped);
  if (n > kReservoir) sigma(vec_index(kReservoir, kReservoir, n)) = trapped;
  relax += g0 * (sigma * trace_functional(n).transpose() - CMatrix::Identity(n * n, n * n));

  constant_ = kTwoPi * (commutator_superop(h) + relax);
  zeeman_ = kTwoPi * commutator_superop(hz);

  slowest_rate_hz_ = g0 > 0.0 ? std::min(g0, decay > 0.0 ? decay : g0) : decay;
}

Liouvillian LiouvillianModel::at(double delta_b_hz) const {
  return Liouvillian{matrix_at(delta_b_hz), dim_, delta_b_hz, drives_};
}

Liouvillian build_liouvillian(const LevelScheme& scheme, std::span<const FieldDrive> drives,
                              double delta_b_hz) {
  return LiouvillianModel(scheme, drives).at(delta_b_hz);
}

// ---------------------------------------------------------------------------
// Steady state

namespace {

CVector solve_bordered(CMatrix a, int dim) {
  const int n2 = dim * dim;
  a.row(0) = trace_functional(dim).transpose();
  CVector rhs = CVector::Zero(n2);
  rhs(0) = 1.0;
  Eigen::FullPivLU<CMatrix> lu(a);
  if (!lu.isInvertible())
    throw NumericalError("steady state is not unique: null space dimension " +
                         std::to_string(n2 - static_cast<int>(lu.rank()) + 1));
  return lu.solve(rhs);
}

}  // namespace

DensityMatrix steady_state(const CMatrix& L, int dim) {
  if (L.rows() != dim * dim || L.cols() != dim * dim)
    throw ValidationError("Liouvillian size does not match dimension");
  return DensityMatrix::from_vec(solve_bordered(L, dim), dim);
}

DensityMatrix steady_state(const Liouvillian& L) { return steady_state(L.matrix, L.dim); }

// ---------------------------------------------------------------------------
// Time evolution

std::string_view to_string(Integrator integrator) {
  return integrator == Integrator::quasi_static ? "quasi_static" : "magnus4";
}

Integrator select_integrator(const LiouvillianModel& model, const EvolveOptions& options) {
  switch (options.choice) {
    case IntegratorChoice::magnus4: return Integrator::magnus4;
    case IntegratorChoice::quasi_static: return Integrator::quasi_static;
    case IntegratorChoice::automatic: break;
  }
  const double gamma_response = kTwoPi * model.slowest_rate_hz();
  if (gamma_response > 0.0 && options.field_timescale_s > 100.0 / gamma_response)
    return Integrator::quasi_static;
  return Integrator::magnus4;
}

namespace {

using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

// Real coordinates for Hermitian matrices: the diagonal entries plus
// (Re rho_ij, Im rho_ij) for i < j. Propagating in these coordinates keeps
// every state exactly Hermitian.
class HermitianFrame {
 public:
  explicit HermitianFrame(int dim) : dim_(dim) {
    const int n2 = dim * dim;
    to_vec_ = CMatrix::Zero(n2, n2);
    from_vec_ = CMatrix::Zero(n2, n2);
    trace_ = RVector::Zero(n2);
    int r = 0;
    for (int i = 0; i < dim; ++i) {
      to_vec_(vec_index(i, i, dim), r) = 1.0;
      from_vec_(r, vec_index(i, i, dim)) = 1.0;
      trace_(r) = 1.0;
      ++r;
    }
    const Complex I(0.0, 1.0);
    for (int i = 0; i < dim; ++i) {
      for (int j = i + 1; j < dim; ++j) {
        const auto ij = vec_index(i, j, dim), ji = vec_index(j, i, dim);
        to_vec_(ij, r) = 1.0;
        to_vec_(ji, r) = 1.0;
        from_vec_(r, ij) = 0.5;
        from_vec_(r, ji) = 0.5;
        ++r;
        to_vec_(ij, r) = I;
        to_vec_(ji, r) = -I;
        from_vec_(r, ij) = -0.5 * I;
        from_vec_(r, ji) = 0.5 * I;
        ++r;
      }
    }
  }

  RMatrix superop(const CMatrix& L) const { return (from_vec_ * L * to_vec_).real(); }
  RVector coords(const CVector& v) const { return (from_vec_ * v).real(); }
  DensityMatrix density(const RVector& r) const {
    return DensityMatrix::from_vec(to_vec_ * r.cast<Complex>(), dim_);
  }
  const RVector& trace() const noexcept { return trace_; }

  RVector steady_state(RMatrix a) const {
    const Eigen::Index n2 = a.rows();
    a.row(0) = trace_.transpose();
    RVector rhs = RVector::Zero(n2);
    rhs(0) = 1.0;
    Eigen::FullPivLU<RMatrix> lu(a);
    if (!lu.isInvertible())
      throw NumericalError("steady state is not unique: null space dimension " +
                           std::to_string(n2 - static_cast<int>(lu.rank()) + 1));
    return lu.solve(rhs);
  }

 private:
  int dim_;
  CMatrix to_vec_;
  CMatrix from_vec_;
  RVector trace_;
};

class Stepper {
 public:
  Stepper(const LiouvillianModel& model, const FieldFunction& delta_b, const EvolveOptions& opt)
      : delta_b_(delta_b), opt_(opt), frame_(model.dim()) {
    constant_ = frame_.superop(model.matrix_at(0.0));
    zeeman_ = frame_.superop(model.matrix_at(1.0)) - constant_;
  }

  const HermitianFrame& frame() const noexcept { return frame_; }

  // Advances r over [t0, t1]; when `map` is non-null also returns the
  // affine propagator of the interval (exact for trace-one inputs).
  RVector advance(const RVector& r, double t0, double t1, RMatrix* map) {
    int n = next_substeps_;
    RVector coarse = run(r, t0, t1, n, nullptr);
    for (;;) {
      RMatrix fine_map;
      RVector fine = run(r, t0, t1, 2 * n, map ? &fine_map : nullptr);
      const double err = (fine - coarse).cwiseAbs().maxCoeff();
      const double tol = opt_.atol + opt_.rtol * fine.cwiseAbs().maxCoeff();
      if (err <= tol) {
        max_used_ = std::max(max_used_, 2 * n);
        next_substeps_ = (err < tol / 64.0 && n > 1) ? n / 2 : n;
        if (map) *map = std::move(fine_map);
        return fine;
      }
      n *= 2;
      if (2 * n > opt_.max_substeps) {
        std::ostringstream os;
        os << "step size underflow: interval [" << t0 << ", " << t1 << "] s needs more than "
           << opt_.max_substeps << " substeps (error " << err << ", tolerance " << tol << ")";
        throw NumericalError(os.str());
      }
      coarse = std::move(fine);
    }
  }

  int max_used() const noexcept { return max_used_; }

 private:
  // Fourth-order commutator-free Magnus step. Because L is affine in
  // delta_B, each of its two exponentials is a half step of the physical
  // Liouvillian at an effective field built from the two Gauss points.
  RVector run(RVector r, double t0, double t1, int n, RMatrix* map) const {
    constexpr double kGauss = 0.28867513459481287;  // sqrt(3)/6
    constexpr double kA1 = 0.25 + kGauss;
    constexpr double kA2 = 0.25 - kGauss;
    const double h = (t1 - t0) / n;
    const Eigen::Index n2 = constant_.rows();
    if (map) map->setIdentity(n2, n2);
    for (int s = 0; s < n; ++s) {
      const double ts = t0 + s * h;
      const double d1 = delta_b_(ts + (0.5 - kGauss) * h);
      const double d2 = delta_b_(ts + (0.5 + kGauss) * h);
      for (const double field : {2.0 * (kA1 * d1 + kA2 * d2), 2.0 * (kA2 * d1 + kA1 * d2)}) {
        const RMatrix L = constant_ + field * zeeman_;
        const RVector ss = frame_.steady_state(L);
        const RMatrix e = (L * (0.5 * h)).exp();
        r = ss + e * (r - ss);
        if (map) {
          RMatrix m = e;
          m.noalias() += (ss - e * ss) * frame_.trace().transpose();
          *map = m * (*map);
        }
      }
    }
    return r;
  }

  const FieldFunction& delta_b_;
  const EvolveOptions& opt_;
  HermitianFrame frame_;
  RMatrix constant_;
  RMatrix zeeman_;
  int next_substeps_ = 1;
  int max_used_ = 0;
};

void check_grid(std::span<const double> t_grid) {
  if (t_grid.empty()) throw ValidationError("time grid is empty", "t_grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1]))
      throw ValidationError("time grid must be strictly increasing", "t_grid");
}

void record(Trajectory& traj, double t, DensityMatrix rho, const InvariantTolerances& tol) {
  const InvariantReport r = rho.invariants();
  if (!r.satisfies(tol)) {
    try {
      rho.require_valid(tol);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << e.what() << " at t = " << t << " s";
      throw NumericalError(os.str());
    }
  }
  traj.worst = traj.states.empty() ? r : traj.worst.worst(r);
  traj.times.push_back(t);
  traj.states.push_back(std::move(rho));
}

}  // namespace

Trajectory evolve(const LiouvillianModel& model, const FieldFunction& delta_b,
                  const DensityMatrix& rho0, std::span<const double> t_grid,
                  const EvolveOptions& options) {
  check_grid(t_grid);
  if (rho0.dim() != model.dim())
    throw ValidationError("initial state dimension does not match the scheme", "rho0");
  rho0.require_valid(options.tolerances);

  Trajectory traj;
  traj.integrator = select_integrator(model, options);
  traj.times.reserve(t_grid.size());
  traj.states.reserve(t_grid.size());

  if (traj.integrator == Integrator::quasi_static) {
    for (double t : t_grid)
      record(traj, t, steady_state(model.matrix_at(delta_b(t)), model.dim()), options.tolerances);
    return traj;
  }

  Stepper stepper(model, delta_b, options);
  const HermitianFrame& frame = stepper.frame();
  RVector r = frame.coords(rho0.vec());
  record(traj, t_grid[0], rho0, options.tolerances);
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    r = stepper.advance(r, t_grid[k - 1], t_grid[k], nullptr);
    record(traj, t_grid[k], frame.density(r), options.tolerances);
  }
  traj.max_substeps_used = stepper.max_used();
  return traj;
}

Trajectory periodic_orbit(const LiouvillianModel& model, const FieldFunction& delta_b,
                          double period_s, int samples, const EvolveOptions& options) {
  if (!(period_s > 0.0)) throw ValidationError("period must be > 0", "period_s");
  if (samples < 1) throw ValidationError("need at least one sample per period", "samples");

  const int dim = model.dim();
  const double dt = period_s / samples;
  Trajectory traj;
  traj.integrator = select_integrator(model, options);
  traj.times.reserve(samples);
  traj.states.reserve(samples);

  if (traj.integrator == Integrator::quasi_static) {
    for (int k = 0; k < samples; ++k) {
      const double t = k * dt;
      record(traj, t, steady_state(model.matrix_at(delta_b(t)), dim), options.tolerances);
    }
    return traj;
  }

  // One pass from the instantaneous steady state fixes the substep counts
  // and collects the per-interval propagators.
  Stepper stepper(model, delta_b, options);
  const HermitianFrame& frame = stepper.frame();
  std::vector<RMatrix> maps(samples);
  RVector probe = frame.coords(steady_state(model.matrix_at(delta_b(0.0)), dim).vec());
  const Eigen::Index n2 = dim * dim;
  RMatrix monodromy = RMatrix::Identity(n2, n2);
  for (int k = 0; k < samples; ++k) {
    probe = stepper.advance(probe, k * dt, (k + 1) * dt, &maps[k]);
    monodromy = maps[k] * monodromy;
  }
  traj.max_substeps_used = stepper.max_used();

  RVector r = frame.steady_state(monodromy - RMatrix::Identity(n2, n2));
  for (int k = 0; k < samples; ++k) {
    record(traj, k * dt, frame.density(r), options.tolerances);
    r = maps[k] * r;
  }
  return traj;
}

}  // namespace nmor
