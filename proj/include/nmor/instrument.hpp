#pragma once

// Measurement electronics: noise injection, oscilloscope scan averaging and
// a flat-top spectrum analyzer.

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nmor {

// Counter-based seeding: every (seed, stage, index) triple names an
// independent random stream, so scans can be generated in any order.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t index);
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stage, std::uint64_t index);

struct TraceMetadata {
  std::string scenario_id;
  std::uint64_t seed = 0;
  int averaging_count = 1;
  double acquisition_time_s = 0.0;  // wall-equivalent time to record it
};

struct Trace {
  double sample_rate_hz = 0.0;
  std::vector<double> samples;  // volts
  TraceMetadata metadata;

  double duration_s() const { return samples.size() / sample_rate_hz; }
  void validate() const;
};

struct NoiseSpec {
  double white_psd_v2_per_hz = 0.0;  // one-sided detector floor
  double scope_noise_rms_v = 0.0;    // oscilloscope path only
  std::uint64_t seed = 0;

  void validate() const;
};

enum class SignalPath { scope, analyzer };

// Adds white Gaussian noise with variance white_psd * fs / 2 and, on the
// scope path, an independent Gaussian of RMS scope_noise_rms. `stream`
// selects the random stream for this trace (e.g. the scan index).
Trace add_noise(const Trace& trace, const NoiseSpec& spec, SignalPath path,
                std::uint64_t stream = 0);

// Pointwise mean of n equal-length traces. acquisition_time_s = n * duration.
Trace average_scans(std::span<const Trace> traces, int n);

// HFT90D flat-top window (Heinzel, Ruediger, Schilling 2002): five cosine
// coefficients 1, 1.942604, 1.340318, 0.440811, 0.043097 with alternating
// signs, DFT-even (periodic) form. Maximum amplitude scalloping 0.0039 dB.
inline constexpr std::array<double, 5> kFlatTopCoefficients{1.0, 1.942604, 1.340318, 0.440811,
                                                           0.043097};
std::vector<double> flat_top_window(std::size_t n);
// Equivalent noise bandwidth of the window in bins (3.8832 for HFT90D).
double flat_top_enbw_bins();

struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> psd;  // V^2/Hz, one-sided
  double rbw_hz = 0.0;      // equivalent noise bandwidth actually realised
  std::string window = "hft90d";
  int n_rms_averages = 1;
  int n_segments = 1;

  double bin_width_hz() const { return freq_hz.size() > 1 ? freq_hz[1] - freq_hz[0] : 0.0; }
  // sqrt(psd), V/sqrt(Hz)
  std::vector<double> amplitude_density() const;
};

// Welch estimate with the flat-top window. The segment length is the
// smallest that realises `rbw_hz` (N = ceil(ENBW_bins * fs / rbw)); segments
// overlap by half. A tone of amplitude A reads A^2/2 as peak * rbw.
// Throws ValidationError when the trace is shorter than one segment.
Spectrum psd(const Trace& trace, double rbw_hz);

// Per-bin root mean square of the PSD values, sqrt(mean(p_i^2)). For noise
// this sits above the plain mean by the spread of the inputs, so spectra with
// several Welch segments each keep the bias small. All spectra must share
// bins, RBW and window.
Spectrum rms_average_spectra(std::span<const Spectrum> spectra);

// Largest PSD value over bins in [f0 - tol, f0 + tol].
double peak_power(const Spectrum& spectrum, double f0_hz, double tol_hz);

}  // namespace nmor
