#include "nmor/instrument.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

#include <fftw3.h>

#include "nmor/error.hpp"

namespace nmor {

// ---------------------------------------------------------------------------
// Random streams

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stage, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stage) ^ index);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stage, std::uint64_t index) {
  return std::mt19937_64(stream_seed(seed, stage, index));
}

// ---------------------------------------------------------------------------
// Traces and noise

void Trace::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ValidationError("sample rate must be > 0", "trace");
  for (double v : samples)
    if (!std::isfinite(v)) throw ValidationError("trace contains non-finite samples", "trace");
}

void NoiseSpec::validate() const {
  if (!(white_psd_v2_per_hz >= 0.0)) throw ValidationError("must be >= 0", "noise.white_psd_v2_per_hz");
  if (!(scope_noise_rms_v >= 0.0)) throw ValidationError("must be >= 0", "noise.scope_noise_rms_v");
}

namespace {
constexpr std::uint64_t kStageWhite = 0x57;
constexpr std::uint64_t kStageScope = 0x5c;
}  // namespace

Trace add_noise(const Trace& trace, const NoiseSpec& spec, SignalPath path, std::uint64_t stream) {
  trace.validate();
  spec.validate();
  Trace out = trace;
  const double sigma_white = std::sqrt(spec.white_psd_v2_per_hz * trace.sample_rate_hz / 2.0);
  if (sigma_white > 0.0) {
    auto rng = make_stream(spec.seed, kStageWhite, stream);
    std::normal_distribution<double> normal(0.0, sigma_white);
    for (double& v : out.samples) v += normal(rng);
  }
  if (path == SignalPath::scope && spec.scope_noise_rms_v > 0.0) {
    auto rng = make_stream(spec.seed, kStageScope, stream);
    std::normal_distribution<double> normal(0.0, spec.scope_noise_rms_v);
    for (double& v : out.samples) v += normal(rng);
  }
  out.metadata.seed = spec.seed;
  return out;
}

Trace average_scans(std::span<const Trace> traces, int n) {
  if (n < 1 || static_cast<std::size_t>(n) != traces.size())
    throw ValidationError("scan count must equal the number of traces", "n_scans");
  const Trace& first = traces.front();
  for (const auto& t : traces) {
    if (t.samples.size() != first.samples.size())
      throw ValidationError("scan traces have mismatched lengths", "traces");
    if (t.sample_rate_hz != first.sample_rate_hz)
      throw ValidationError("scan traces have mismatched sample rates", "traces");
  }
  Trace out;
  out.sample_rate_hz = first.sample_rate_hz;
  out.samples.assign(first.samples.size(), 0.0);
  for (const auto& t : traces)
    for (std::size_t k = 0; k < t.samples.size(); ++k) out.samples[k] += t.samples[k];
  for (double& v : out.samples) v /= n;
  out.metadata = first.metadata;
  out.metadata.averaging_count = n;
  out.metadata.acquisition_time_s = n * first.duration_s();
  return out;
}

// ---------------------------------------------------------------------------
// Flat-top window and PSD

std::vector<double> flat_top_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    double v = 0.0;
    for (std::size_t k = 0; k < kFlatTopCoefficients.size(); ++k)
      v += (k % 2 ? -1.0 : 1.0) * kFlatTopCoefficients[k] * std::cos(k * z);
    w[i] = v;
  }
  return w;
}

double flat_top_enbw_bins() {
  // Closed form for a cosine-sum window: N sum w^2 / (sum w)^2 with
  // sum w = N a0 and sum w^2 = N (a0^2 + sum_{k>0} a_k^2 / 2).
  const auto& a = kFlatTopCoefficients;
  double s2 = a[0] * a[0];
  for (std::size_t k = 1; k < a.size(); ++k) s2 += 0.5 * a[k] * a[k];
  return s2 / (a[0] * a[0]);
}

namespace {

// FFTW's planner is not thread-safe; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void execute() { fftw_execute(plan_); }
  double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

 private:
  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace

std::vector<double> Spectrum::amplitude_density() const {
  std::vector<double> a(psd.size());
  std::transform(psd.begin(), psd.end(), a.begin(), [](double p) { return std::sqrt(p); });
  return a;
}

Spectrum psd(const Trace& trace, double rbw_hz) {
  trace.validate();
  if (!(rbw_hz > 0.0)) throw ValidationError("rbw must be > 0", "instrument.rbw_hz");
  const double fs = trace.sample_rate_hz;
  const double enbw = flat_top_enbw_bins();
  const auto seg = static_cast<std::size_t>(std::ceil(enbw * fs / rbw_hz));
  if (trace.samples.size() < seg)
    throw ValidationError("trace too short for rbw: need " + std::to_string(seg) +
                              " samples (" + std::to_string(seg / fs) + " s), have " +
                              std::to_string(trace.samples.size()),
                          "instrument.rbw_hz");

  const std::vector<double> w = flat_top_window(seg);
  const double sum_w2 = std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
  const std::size_t hop = std::max<std::size_t>(1, seg / 2);
  const std::size_t n_seg = 1 + (trace.samples.size() - seg) / hop;
  const std::size_t n_bins = seg / 2 + 1;

  RealFft fft(seg);
  std::vector<double> acc(n_bins, 0.0);
  for (std::size_t s = 0; s < n_seg; ++s) {
    const double* x = trace.samples.data() + s * hop;
    double* in = fft.input();
    for (std::size_t i = 0; i < seg; ++i) in[i] = x[i] * w[i];
    fft.execute();
    for (std::size_t k = 0; k < n_bins; ++k) acc[k] += fft.power(k);
  }

  Spectrum out;
  out.freq_hz.resize(n_bins);
  out.psd.resize(n_bins);
  const double scale = 1.0 / (fs * sum_w2 * static_cast<double>(n_seg));
  for (std::size_t k = 0; k < n_bins; ++k) {
    const bool edge = k == 0 || (seg % 2 == 0 && k == seg / 2);
    out.freq_hz[k] = k * fs / static_cast<double>(seg);
    out.psd[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
  }
  out.rbw_hz = enbw * fs / static_cast<double>(seg);
  out.n_segments = static_cast<int>(n_seg);
  return out;
}

Spectrum rms_average_spectra(std::span<const Spectrum> spectra) {
  if (spectra.empty()) throw ValidationError("no spectra to average", "spectra");
  const Spectrum& first = spectra.front();
  for (const auto& s : spectra) {
    if (s.freq_hz != first.freq_hz) throw ValidationError("spectra have mismatched bins", "spectra");
    if (s.rbw_hz != first.rbw_hz || s.window != first.window)
      throw ValidationError("spectra have mismatched rbw or window", "spectra");
  }
  Spectrum out = first;
  const double n = static_cast<double>(spectra.size());
  for (std::size_t k = 0; k < out.psd.size(); ++k) {
    double sum = 0.0;
    for (const auto& s : spectra) sum += s.psd[k] * s.psd[k];
    out.psd[k] = std::sqrt(sum / n);
  }
  int total = 0;
  for (const auto& s : spectra) total += s.n_rms_averages;
  out.n_rms_averages = total;
  return out;
}

double peak_power(const Spectrum& spectrum, double f0_hz, double tol_hz) {
  if (spectrum.freq_hz.empty()) throw ValidationError("empty spectrum", "spectrum");
  if (f0_hz < spectrum.freq_hz.front() || f0_hz > spectrum.freq_hz.back())
    throw ValidationError("f0 outside the spectrum range", "f0_hz");
  double best = -1.0;
  for (std::size_t k = 0; k < spectrum.freq_hz.size(); ++k)
    if (std::abs(spectrum.freq_hz[k] - f0_hz) <= tol_hz) best = std::max(best, spectrum.psd[k]);
  if (best < 0.0) throw ValidationError("no bins within tolerance of f0", "tol_hz");
  return best;
}

}  // namespace nmor
