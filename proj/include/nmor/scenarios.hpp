#pragma once

// Configuration-driven runs of the whole chain:
// scheme -> waveform -> dynamics -> optics -> instrument -> analysis.
//
// A scenario is a JSON document. Every key is validated; errors name the
// offending key path (e.g. "arms[1].probe.rabi_plus_hz"). A run writes its
// tables plus manifest.json, which embeds the fully resolved scenario and can
// be fed back to `run` to reproduce the outputs byte for byte.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nmor/analysis.hpp"
#include "nmor/dynamics.hpp"
#include "nmor/instrument.hpp"
#include "nmor/io.hpp"
#include "nmor/medium.hpp"
#include "nmor/optics.hpp"
#include "nmor/waveforms.hpp"

namespace nmor {

enum class AnalysisMode { time_domain, spectrum, resonance };

std::string_view to_string(AnalysisMode mode);
AnalysisMode analysis_mode_from_string(std::string_view name);

// One simulated configuration (a trace in the figures), e.g. "WM on".
struct ArmSpec {
  std::string label;
  SchemeKind kind = SchemeKind::single_lambda;
  FieldDrive probe;
  std::optional<FieldDrive> wm;
  std::optional<double> trapped_fraction;  // overrides medium.trapped_fraction
  double noise_scale = 1.0;                // multiplies noise.white_psd_v2_per_hz
  std::optional<int> n_scans;              // overrides instrument.n_scans
};

struct MediumSettings {
  Rates rates;
  ZeemanCalibration zeeman;
};

struct InstrumentSettings {
  SignalPath path = SignalPath::analyzer;
  int n_scans = 1;         // scans averaged before time-domain analysis
  int n_rms_averages = 1;  // spectra RMS-averaged by the analyzer
  double rbw_hz = 0.725;
  double span_hz = 25000.0;  // spectra are written up to min(span, Nyquist)
};

struct AnalysisSettings {
  AnalysisMode mode = AnalysisMode::time_domain;
  // Waveform amplitudes to run; empty means the waveform's own amplitude.
  std::vector<double> amplitudes_nt;
  // spectrum mode; tone_hz = 0 means the waveform frequency
  double tone_hz = 0.0;
  double tone_tol_hz = 2.0;
  // time_domain mode
  TimeWindow signal_window;
  TimeWindow noise_window;
  // resonance mode
  double scan_half_width_hz = 2000.0;
  int scan_points = 201;
  std::vector<double> probe_rabi_sweep_hz;  // linewidth vs probe Rabi frequency (first arm)
  // Arms whose ratio is reported as the enhancement (numerator / denominator).
  std::optional<std::pair<std::string, std::string>> enhancement;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  MediumSettings medium;
  double susceptibility_scale_hz = 1.0;
  PolarimeterConfig polarimeter;
  std::vector<ArmSpec> arms;
  std::optional<MagneticWaveformSpec> waveform;  // required unless resonance mode
  NoiseSpec noise;                               // noise.seed follows `seed`
  InstrumentSettings instrument;
  AnalysisSettings analysis;
  EvolveOptions evolve;
  Json notes = Json::object();  // free-form provenance (quoted intensities, mappings)

  void validate() const;
};

// Parses and validates. Missing optional keys take the defaults above; the
// seed is mandatory.
Scenario scenario_from_json(const Json& config);
Json to_json(const Scenario& scenario);

// Reads a scenario file or a run manifest (its "scenario" member).
Json load_config(const std::filesystem::path& file);

struct RunOptions {
  std::filesystem::path out_dir = "out";
  OutputFormat format = OutputFormat::csv;
  bool write_files = true;
};

struct PeakPoint {
  double amplitude_nt = 0.0;
  double peak_psd = 0.0;  // V^2/Hz at the tone
};

struct ArmResult {
  std::string label;
  std::string integrator;
  int max_substeps = 0;
  InvariantReport worst;
  std::vector<std::string> warnings;

  // time_domain
  std::vector<SnrResult> snr;  // one per amplitude
  std::vector<double> noiseless_peak_v;  // peak of the noise-free trace, per amplitude
  std::vector<double> noiseless_mean_v;  // mean noise-free signal, per amplitude
  int averaging_count = 1;
  double acquisition_time_s = 0.0;

  // spectrum
  std::vector<PeakPoint> peaks;
  std::optional<FitResult> fit;

  // resonance
  std::optional<LineShape> lineshape;
  double linewidth_hz = 0.0;
  double zero_crossing_hz = 0.0;
  std::vector<std::pair<double, double>> linewidth_vs_rabi;  // (Omega/2pi, width)
};

struct RunResult {
  std::vector<ArmResult> arms;
  // Per amplitude (or a single entry in resonance/time-domain runs).
  std::vector<std::pair<double, Enhancement>> enhancement;
  std::vector<std::string> files;
  Json manifest;

  const ArmResult& arm(std::string_view label) const;
};

// Runs the scenario. Results are computed first; files are written only
// afterwards, so a failed run leaves just a manifest with status "failed".
RunResult run(const Scenario& scenario, const RunOptions& options);

// Named scenarios: fig2, fig3, fig4, s2, s3, pumped. Throws ValidationError
// for an unknown name.
Scenario preset(std::string_view name);
std::vector<std::string> preset_names();

// Calibration constants shared by the presets.
// Susceptibility scale making the fig2 single-Lambda scan peak at 2 mV.
extern const double kPresetSusceptibilityScaleHz;
// Scope noise giving the fig2 single-Lambda 128-scan average an SNR of about 2.
extern const double kPresetScopeNoiseRmsV;
// Detector floor of the analyzer path.
inline constexpr double kPresetWhitePsd = 1e-11;

// Replaces the value at a dotted key path ("arms.0.probe.rabi_plus_hz").
// Throws ValidationError if the path does not exist.
Json with_override(Json config, std::string_view dotted_path, const Json& value);

struct SweepPoint {
  Json value;
  std::string directory;
  RunResult result;
};

// Runs the config once per value of `param`, each into its own
// subdirectory of options.out_dir, and writes a sweep summary table.
std::vector<SweepPoint> sweep(const Json& config, std::string_view param,
                              const std::vector<Json>& values, const RunOptions& options);

}  // namespace nmor
