#pragma once

// Rotating-frame Lindblad dynamics for a LevelScheme.
//
// Vectorization is column-stacking: vec(rho)[i + j*dim] = rho(i, j), so that
// vec(A X B) = (B^T kron A) vec(X).

#include <complex>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nmor/medium.hpp"

namespace nmor {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline int vec_index(int row, int col, int dim) { return row + col * dim; }

struct InvariantTolerances {
  double hermiticity = 1e-12;
  double trace = 1e-10;
  double min_eigenvalue = -1e-9;
};

struct InvariantReport {
  double hermiticity_error = 0.0;  // max |rho - rho^dagger|
  double trace_error = 0.0;        // |tr rho - 1|
  double min_eigenvalue = 1.0;

  bool satisfies(const InvariantTolerances& tol = {}) const;
  // Elementwise worst case of two reports.
  InvariantReport worst(const InvariantReport& other) const;
};

class DensityMatrix {
 public:
  explicit DensityMatrix(CMatrix rho);

  static DensityMatrix from_vec(const CVector& v, int dim);
  // Diagonal state with the given populations.
  static DensityMatrix diagonal(std::span<const double> populations);

  int dim() const noexcept { return static_cast<int>(rho_.rows()); }
  const CMatrix& matrix() const noexcept { return rho_; }
  Complex operator()(int i, int j) const { return rho_(i, j); }
  CVector vec() const;

  InvariantReport invariants() const;
  // Throws NumericalError naming the violated invariant.
  void require_valid(const InvariantTolerances& tol = {}) const;

  // Swap the labels of states a and b.
  DensityMatrix relabeled(int a, int b) const;

 private:
  CMatrix rho_;
};

struct Liouvillian {
  CMatrix matrix;  // dim^2 x dim^2
  int dim = 0;
  double delta_b_hz = 0.0;
  std::vector<FieldDrive> drives;
};

// L(delta_B) = constant + delta_B * zeeman. The Zeeman shift is the only
// time-dependent input, so the split lets time stepping avoid rebuilding
// the relaxation terms.
class LiouvillianModel {
 public:
  LiouvillianModel(const LevelScheme& scheme, std::span<const FieldDrive> drives);

  Liouvillian at(double delta_b_hz) const;
  CMatrix matrix_at(double delta_b_hz) const { return constant_ + delta_b_hz * zeeman_; }

  int dim() const noexcept { return dim_; }
  const CMatrix& constant_part() const noexcept { return constant_; }
  const CMatrix& zeeman_part() const noexcept { return zeeman_; }
  const std::vector<FieldDrive>& drives() const noexcept { return drives_; }
  // Smallest nonzero relaxation rate in the model (Hz).
  double slowest_rate_hz() const noexcept { return slowest_rate_hz_; }

 private:
  int dim_ = 0;
  CMatrix constant_;
  CMatrix zeeman_;
  std::vector<FieldDrive> drives_;
  double slowest_rate_hz_ = 0.0;
};

// Hamiltonian: ground shifts +delta_B/2 (|1>), -delta_B/2 (|3>); each excited
// state sits at minus the detuning of the field addressing it; couplings
// Omega/2 per branch. Relaxation: excited decay Gamma split evenly into |1>,|3>;
// pure dephasing of rho_13 at gamma_0; and a reset at gamma_0 toward the
// unpolarized mixture (with the reservoir holding the trapped fraction).
// Throws ValidationError if the drives do not match the scheme's branches.
Liouvillian build_liouvillian(const LevelScheme& scheme, std::span<const FieldDrive> drives,
                              double delta_b_hz);

// Solves L vec(rho) = 0 with tr(rho) = 1 via the bordered linear system.
// Throws NumericalError when the null space is not one-dimensional.
DensityMatrix steady_state(const Liouvillian& L);
DensityMatrix steady_state(const CMatrix& L, int dim);

// delta_B(t) in Hz.
using FieldFunction = std::function<double(double)>;

enum class Integrator { magnus4, quasi_static };
enum class IntegratorChoice { automatic, magnus4, quasi_static };

std::string_view to_string(Integrator integrator);

struct EvolveOptions {
  double rtol = 1e-8;
  double atol = 1e-14;
  int max_substeps = 4096;  // per sample interval
  IntegratorChoice choice = IntegratorChoice::automatic;
  // Shortest time over which the field changes appreciably. The automatic
  // choice picks the quasi-static path when this exceeds 100 / gamma_response
  // (gamma_response = 2 pi * slowest relaxation rate).
  double field_timescale_s = 0.0;
  InvariantTolerances tolerances{};
};

struct Trajectory {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  Integrator integrator = Integrator::magnus4;
  int max_substeps_used = 0;
  InvariantReport worst;
};

Integrator select_integrator(const LiouvillianModel& model, const EvolveOptions& options);

// Integrates d vec(rho)/dt = L(delta_B(t)) vec(rho) on t_grid.
//
// Magnus path: fourth-order commutator-free Magnus steps. Since L is affine
// in delta_B, a step of length h is two half steps of the physical
// Liouvillian at effective fields taken from the two Gauss points, each
// applied as rho -> rho_ss + exp(L h/2) (rho - rho_ss). Each grid interval
// is split with step doubling until successive refinements agree to
// atol + rtol * max|rho|. Quasi-static path: the steady state at every grid
// time (rho0 is only checked for validity).
//
// Every output sample is checked against options.tolerances; a violation
// or exhausting max_substeps raises NumericalError.
Trajectory evolve(const LiouvillianModel& model, const FieldFunction& delta_b,
                  const DensityMatrix& rho0, std::span<const double> t_grid,
                  const EvolveOptions& options = {});

// Periodic steady state of a drive with period `period_s`, sampled at
// `samples` equally spaced times t_k = k * period / samples. Built from the
// one-period propagator's trace-one fixed point, so no settling periods are
// needed.
Trajectory periodic_orbit(const LiouvillianModel& model, const FieldFunction& delta_b,
                          double period_s, int samples, const EvolveOptions& options = {});

}  // namespace nmor
