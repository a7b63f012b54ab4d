#pragma once

// Atomic level schemes for the single-beam Lambda magnetometer and the
// wave-mixing double-Lambda surrogate, plus the field -> Zeeman calibration.
//
// State labels (0-based indices):
//   0  |1>   ground sublevel, shifted by +delta_B/2
//   1  |2>   excited state addressed by the probe
//   2  |3>   ground sublevel, shifted by -delta_B/2
//   3  |2'>  excited state addressed by the wave-mixing field (WM scheme)
//   4  |R>   inert reservoir for the non-accessed hyperfine manifold (WM scheme)
//
// All frequencies and rates are ordinary frequencies in Hz; the dynamics
// layer multiplies by 2*pi.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nmor {

inline constexpr int kGround1 = 0;
inline constexpr int kExcitedProbe = 1;
inline constexpr int kGround3 = 2;
inline constexpr int kExcitedWm = 3;
inline constexpr int kReservoir = 4;

enum class SchemeKind { single_lambda, wave_mixing };
enum class DriveRole { probe, wm };
enum class Branch { probe_plus, probe_minus, wm_plus, wm_minus };

std::string_view to_string(SchemeKind kind);
std::string_view to_string(DriveRole role);
std::string_view to_string(Branch branch);
SchemeKind scheme_kind_from_string(std::string_view name);
DriveRole drive_role_from_string(std::string_view name);

struct FieldDrive {
  DriveRole role = DriveRole::probe;
  double rabi_plus_hz = 0.0;   // Omega^(+)/2pi
  double rabi_minus_hz = 0.0;  // Omega^(-)/2pi
  double detuning_hz = 0.0;    // one-photon detuning delta/2pi
  // Recorded beam intensity in uW/cm^2. Never enters the dynamics.
  std::optional<double> intensity_uw_cm2;

  void validate() const;
};

struct ZeemanCalibration {
  // Ground-state splitting per unit field. 6 Hz/nT reproduces the
  // 500 nT <-> 3 kHz shield-limit anchor; the textbook 87Rb F=2 value is
  // about 7 Hz/nT.
  double gamma_hz_per_nt = 6.0;

  void validate() const;
};

// delta_B = gamma * B. Odd and linear in the field.
double zeeman_shift(double b_field_nt, const ZeemanCalibration& cal);

// Population relaxation and decoherence parameters shared by both schemes.
struct Rates {
  double excited_decay_hz = 5.7e6;    // Gamma/2pi, 87Rb D1 natural linewidth
  double ground_decoherence_hz = 10.0;  // gamma_0
  // Fraction of the atoms parked in the reservoir state (WM scheme only).
  double trapped_fraction = 0.0;
};

struct SchemeParams {
  Rates rates;
  FieldDrive probe;
  std::optional<FieldDrive> wm;
  // Coupling weights for probe+, probe-, wm+, wm- (in Branch order).
  std::array<double, 4> relative_dipoles{1.0, 1.0, 1.0, 1.0};
};

struct BranchCoupling {
  Branch branch;
  int lower;
  int upper;
  double relative_dipole;
};

class LevelScheme {
 public:
  SchemeKind kind() const noexcept { return kind_; }
  int n_states() const noexcept { return n_states_; }
  double excited_decay_hz() const noexcept { return rates_.excited_decay_hz; }
  double ground_decoherence_hz() const noexcept { return rates_.ground_decoherence_hz; }
  double trapped_fraction() const noexcept { return rates_.trapped_fraction; }
  const Rates& rates() const noexcept { return rates_; }
  const std::vector<BranchCoupling>& branches() const noexcept { return branches_; }
  const BranchCoupling& branch(Branch b) const;
  bool has_branch(Branch b) const noexcept;
  std::vector<int> excited_states() const;
  // Non-fatal physical-sanity notes (e.g. gamma_0 not much smaller than Gamma).
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  friend LevelScheme make_scheme(SchemeKind kind, const SchemeParams& params);

 private:
  LevelScheme() = default;

  SchemeKind kind_ = SchemeKind::single_lambda;
  int n_states_ = 3;
  Rates rates_;
  std::vector<BranchCoupling> branches_;
  std::vector<std::string> warnings_;
};

// Builds a validated scheme. single_lambda: 3 states, probe branches only.
// wave_mixing: 5 states, probe and WM branches sharing |1>,|3>.
// Throws ValidationError for negative rates, a WM drive on the single-Lambda
// kind, a missing WM drive on the wave-mixing kind or invalid drives.
LevelScheme make_scheme(SchemeKind kind, const SchemeParams& params);

// Converts a beam intensity to a per-branch Rabi frequency with
// Omega = Gamma * sqrt(I / (2 I_sat)). Only used to translate quoted
// intensities into preset drives; the default saturation intensity is the
// 87Rb D1 isotropic value.
double rabi_from_intensity(double intensity_uw_cm2, double excited_decay_hz = 5.7e6,
                           double saturation_mw_cm2 = 4.484);

}  // namespace nmor
