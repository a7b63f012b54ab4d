#pragma once

// Density matrix -> circular susceptibilities -> Faraday rotation ->
// balanced-polarimeter voltage, in the thin-medium (single pass) limit.

#include <complex>
#include <numbers>
#include <utility>

#include "nmor/dynamics.hpp"
#include "nmor/medium.hpp"

namespace nmor {

struct OpticalResponse {
  Complex chi_plus;
  Complex chi_minus;
  double rotation_angle = 0.0;  // rad
  double ellipticity = 0.0;     // rad
  double transmission_plus = 1.0;
  double transmission_minus = 1.0;

  double mean_transmission() const { return 0.5 * (transmission_plus + transmission_minus); }
};

struct PolarimeterConfig {
  double cell_length_m = 0.05;
  double wavelength_m = 794.978851e-9;  // 87Rb D1
  double input_intensity = 1.0;         // arbitrary units
  double detector_gain = 1.0;           // V per intensity unit
  double analyzer_angle_rad = std::numbers::pi / 4.0;

  void validate() const;
};

// Small probe Rabi frequency to use when a branch would otherwise be dark.
inline constexpr double kPerturbativeProbeRabiHz = 1e3;

// chi_+- = scale * rho_(lower, upper) / (Omega_+-/2) on the probe branches.
// rho_(lower, upper) = conj(rho_(upper, lower)) is the element whose imaginary
// part is positive for absorption under dRho/dt = -i[H, rho]. `scale` lumps
// atom density and dipole factors and carries units of Hz.
std::pair<Complex, Complex> susceptibilities(const DensityMatrix& rho, const LevelScheme& scheme,
                                             const FieldDrive& probe, double scale);

// rotation = (pi L / lambda) Re(chi_- - chi_+) / 2,
// ellipticity = (pi L / lambda) Im(chi_- - chi_+) / 2,
// T_+- = exp(-(2 pi L / lambda) Im chi_+-) clamped to [0, 1].
OpticalResponse faraday(Complex chi_plus, Complex chi_minus, const PolarimeterConfig& cfg);

// V = gain * I0 * T_mean * sin(2 (rotation - tilt)) with tilt = analyzer - pi/4,
// i.e. cos(2 (analyzer - rotation)) written so the null at the default
// 45 degree analyzer is exact.
double balanced_signal(const OpticalResponse& resp, const PolarimeterConfig& cfg);

// Full chain for one state.
double detector_voltage(const DensityMatrix& rho, const LevelScheme& scheme,
                        const FieldDrive& probe, double scale, const PolarimeterConfig& cfg);

}  // namespace nmor
