#include "nmor/waveforms.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nmor/error.hpp"

namespace nmor {

std::string_view to_string(WaveformKind kind) {
  switch (kind) {
    case WaveformKind::constant: return "constant";
    case WaveformKind::sine: return "sine";
    case WaveformKind::square: return "square";
    case WaveformKind::gaussian_train: return "gaussian_train";
  }
  return "unknown";
}

WaveformKind waveform_kind_from_string(std::string_view name) {
  if (name == "constant") return WaveformKind::constant;
  if (name == "sine") return WaveformKind::sine;
  if (name == "square") return WaveformKind::square;
  if (name == "gaussian_train") return WaveformKind::gaussian_train;
  throw ValidationError("unknown waveform kind '" + std::string(name) +
                            "' (expected constant | sine | square | gaussian_train)",
                        "waveform.kind");
}

void MagneticWaveformSpec::validate() const {
  if (!std::isfinite(amplitude_nt)) throw ValidationError("must be finite", "waveform.amplitude_nt");
  if (!std::isfinite(offset_nt)) throw ValidationError("must be finite", "waveform.offset_nt");
  if (!(duration_s > 0.0)) throw ValidationError("duration must be > 0", "waveform.duration_s");
  if (!(sample_rate_hz > 0.0))
    throw ValidationError("sample rate must be > 0", "waveform.sample_rate_hz");
  if (kind == WaveformKind::constant) return;
  if (!(frequency_hz > 0.0))
    throw ValidationError("frequency/rate must be > 0 for " + std::string(to_string(kind)),
                          "waveform.frequency_hz");
  if (sample_rate_hz < 20.0 * frequency_hz)
    throw ValidationError("sample_rate >= 20 x frequency_or_rate violated",
                          "waveform.sample_rate_hz");
  if (kind == WaveformKind::gaussian_train) {
    if (!(fwhm_s > 0.0)) throw ValidationError("fwhm must be > 0", "waveform.fwhm_s");
    if (sample_rate_hz < 20.0 / fwhm_s)
      throw ValidationError("sample_rate >= 20 / fwhm violated", "waveform.sample_rate_hz");
  }
}

double MagneticWaveformSpec::value_at(double t) const {
  switch (kind) {
    case WaveformKind::constant: return amplitude_nt + offset_nt;
    case WaveformKind::sine:
      return amplitude_nt * std::sin(2.0 * std::numbers::pi * frequency_hz * t) + offset_nt;
    case WaveformKind::square: {
      const double phase = frequency_hz * t - std::floor(frequency_hz * t);
      return (phase < 0.5 ? amplitude_nt : 0.0) + offset_nt;
    }
    case WaveformKind::gaussian_train: {
      const double period = 1.0 / frequency_hz;
      // Distance to the nearest pulse centre; neighbours decay as
      // exp(-4 ln2 (k period / fwhm)^2) and are summed until negligible.
      const double centred = t - 0.5 * period;
      const double k0 = std::round(centred / period);
      const double a = 4.0 * std::numbers::ln2 / (fwhm_s * fwhm_s);
      double sum = 0.0;
      for (int k = 0;; ++k) {
        const double d1 = centred - (k0 + k) * period;
        double term = std::exp(-a * d1 * d1);
        if (k > 0) {
          const double d2 = centred - (k0 - k) * period;
          term += std::exp(-a * d2 * d2);
        }
        sum += term;
        if (k > 0 && term < 1e-300) break;
        if (k > 0 && term < 1e-18 * sum) break;
      }
      return amplitude_nt * sum + offset_nt;
    }
  }
  return 0.0;
}

std::size_t MagneticWaveformSpec::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

double MagneticWaveformSpec::period_s() const {
  if (kind == WaveformKind::constant) return 1.0 / sample_rate_hz;
  return 1.0 / frequency_hz;
}

double MagneticWaveformSpec::shortest_timescale_s() const {
  switch (kind) {
    case WaveformKind::constant: return std::numeric_limits<double>::infinity();
    case WaveformKind::sine: return 1.0 / frequency_hz;
    case WaveformKind::square: return 0.0;
    case WaveformKind::gaussian_train: return fwhm_s;
  }
  return 0.0;
}

std::vector<double> synthesize(const MagneticWaveformSpec& spec) {
  spec.validate();
  const std::size_t n = spec.sample_count();
  std::vector<double> b(n);
  for (std::size_t k = 0; k < n; ++k) b[k] = spec.value_at(static_cast<double>(k) / spec.sample_rate_hz);
  return b;
}

double gaussian_pulse_area(double amplitude, double fwhm_s) {
  return amplitude * fwhm_s * std::sqrt(std::numbers::pi / (4.0 * std::numbers::ln2));
}

}  // namespace nmor
