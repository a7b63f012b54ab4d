#include "nmor/optics.hpp"

#include <algorithm>
#include <cmath>

#include "nmor/error.hpp"

namespace nmor {

void PolarimeterConfig::validate() const {
  if (!(cell_length_m > 0.0)) throw ValidationError("must be > 0", "polarimeter.cell_length_m");
  if (!(wavelength_m > 0.0)) throw ValidationError("must be > 0", "polarimeter.wavelength_m");
  if (!(detector_gain > 0.0)) throw ValidationError("must be > 0", "polarimeter.detector_gain");
  if (!(input_intensity >= 0.0))
    throw ValidationError("must be >= 0", "polarimeter.input_intensity");
  if (!std::isfinite(analyzer_angle_rad))
    throw ValidationError("must be finite", "polarimeter.analyzer_angle_rad");
}

std::pair<Complex, Complex> susceptibilities(const DensityMatrix& rho, const LevelScheme& scheme,
                                             const FieldDrive& probe, double scale) {
  if (rho.dim() != scheme.n_states())
    throw ValidationError("density matrix dimension does not match the scheme");
  const auto& bp = scheme.branch(Branch::probe_plus);
  const auto& bm = scheme.branch(Branch::probe_minus);
  const double rabi_p = probe.rabi_plus_hz * bp.relative_dipole;
  const double rabi_m = probe.rabi_minus_hz * bm.relative_dipole;
  if (!(rabi_p > 0.0) || !(rabi_m > 0.0))
    throw ValidationError("probe Rabi frequency is zero on a branch; use a perturbative probe "
                          "(e.g. 1 kHz) instead of a dark branch",
                          "probe");
  const Complex chi_p = scale * rho(bp.lower, bp.upper) / (0.5 * rabi_p);
  const Complex chi_m = scale * rho(bm.lower, bm.upper) / (0.5 * rabi_m);
  return {chi_p, chi_m};
}

OpticalResponse faraday(Complex chi_plus, Complex chi_minus, const PolarimeterConfig& cfg) {
  const double k = std::numbers::pi * cfg.cell_length_m / cfg.wavelength_m;
  const Complex diff = chi_minus - chi_plus;
  OpticalResponse r;
  r.chi_plus = chi_plus;
  r.chi_minus = chi_minus;
  r.rotation_angle = k * diff.real() / 2.0;
  r.ellipticity = k * diff.imag() / 2.0;
  r.transmission_plus = std::clamp(std::exp(-2.0 * k * chi_plus.imag()), 0.0, 1.0);
  r.transmission_minus = std::clamp(std::exp(-2.0 * k * chi_minus.imag()), 0.0, 1.0);
  return r;
}

double balanced_signal(const OpticalResponse& resp, const PolarimeterConfig& cfg) {
  // cos(2(analyzer - phi)) written as sin(2(phi - tilt)) with the tilt from
  // 45 degrees, so the balanced null is exact at the default analyzer.
  const double tilt = cfg.analyzer_angle_rad - std::numbers::pi / 4.0;
  return cfg.detector_gain * cfg.input_intensity * resp.mean_transmission() *
         std::sin(2.0 * (resp.rotation_angle - tilt));
}

double detector_voltage(const DensityMatrix& rho, const LevelScheme& scheme,
                        const FieldDrive& probe, double scale, const PolarimeterConfig& cfg) {
  const auto [cp, cm] = susceptibilities(rho, scheme, probe, scale);
  return balanced_signal(faraday(cp, cm, cfg), cfg);
}

}  // namespace nmor
