#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace nmor {

enum class WaveformKind { constant, sine, square, gaussian_train };

std::string_view to_string(WaveformKind kind);
WaveformKind waveform_kind_from_string(std::string_view name);

// Geomagnetic magnitude used as the static offset of shield-less scenarios.
inline constexpr double kEarthFieldNt = 50000.0;

struct MagneticWaveformSpec {
  WaveformKind kind = WaveformKind::constant;
  double amplitude_nt = 0.0;
  double frequency_hz = 0.0;  // sine/square frequency, or train repetition rate
  double fwhm_s = 0.0;        // gaussian_train only
  double offset_nt = 0.0;     // static offset (Earth field in shield-less mode)
  double duration_s = 0.0;
  double sample_rate_hz = 0.0;

  // Throws ValidationError naming the violated constraint.
  void validate() const;

  // Field at time t (nT). Trains put pulse k at (k + 1/2) / rate and sum
  // every pulse, so the value is exactly periodic.
  double value_at(double t_seconds) const;

  std::size_t sample_count() const;
  // Repetition period in seconds (for constant: one sample interval).
  double period_s() const;
  // Shortest time over which the field changes (0 for square edges,
  // +inf for constant).
  double shortest_timescale_s() const;
};

// duration * sample_rate samples of B(t) in nT, t_k = k / sample_rate.
std::vector<double> synthesize(const MagneticWaveformSpec& spec);

// Gaussian area factor: integral of a unit-peak pulse = fwhm * sqrt(pi / (4 ln 2)).
double gaussian_pulse_area(double amplitude, double fwhm_s);

}  // namespace nmor
