#include <algorithm>

#include "nmor/error.hpp"
#include "nmor/scenarios.hpp"

namespace nmor {

// Frozen by tools/calibrate (see README): the fig2 single-Lambda noiseless
// scan peaks at 2 mV, and its 128-scan average has peak / noise RMS = 2.
const double kPresetSusceptibilityScaleHz = 4.12961e5;
const double kPresetScopeNoiseRmsV = 1.13115e-2;

namespace {

constexpr double kProbeDetuningHz = -5e9;
constexpr double kWmDetuningHz = -2e9;

FieldDrive drive_from_intensity(DriveRole role, double intensity_uw_cm2, double detuning_hz) {
  const double rabi = rabi_from_intensity(intensity_uw_cm2);
  return FieldDrive{role, rabi, rabi, detuning_hz, intensity_uw_cm2};
}

ArmSpec single_arm(std::string label, double probe_uw) {
  ArmSpec a;
  a.label = std::move(label);
  a.kind = SchemeKind::single_lambda;
  a.probe = drive_from_intensity(DriveRole::probe, probe_uw, kProbeDetuningHz);
  return a;
}

ArmSpec wm_arm(std::string label, double probe_uw, double wm_uw) {
  ArmSpec a;
  a.label = std::move(label);
  a.kind = SchemeKind::wave_mixing;
  a.probe = drive_from_intensity(DriveRole::probe, probe_uw, kProbeDetuningHz);
  a.wm = drive_from_intensity(DriveRole::wm, wm_uw, kWmDetuningHz);
  return a;
}

Scenario base(std::string name) {
  Scenario s;
  s.name = std::move(name);
  s.seed = 20240311;
  s.medium.rates.ground_decoherence_hz = 10.0;
  s.susceptibility_scale_hz = kPresetSusceptibilityScaleHz;
  s.noise.white_psd_v2_per_hz = kPresetWhitePsd;
  s.noise.seed = s.seed;
  s.notes["intensity_to_rabi"] =
      "Omega/2pi = (Gamma/2pi) * sqrt(I / (2 I_sat)), Gamma/2pi = 5.7 MHz, "
      "I_sat = 4.484 mW/cm^2; applied to both circular components";
  s.notes["susceptibility_scale"] =
      "single constant shared by all presets; fig2 single-Lambda noiseless scan peak = 2 mV";
  return s;
}

void describe_arms(Scenario& s) {
  Json arms = Json::array();
  for (const auto& a : s.arms) {
    Json j = {{"label", a.label}, {"probe_uw_cm2", a.probe.intensity_uw_cm2.value_or(0.0)},
              {"probe_rabi_hz", a.probe.rabi_plus_hz}};
    if (a.wm) {
      j["wm_uw_cm2"] = a.wm->intensity_uw_cm2.value_or(0.0);
      j["wm_rabi_hz"] = a.wm->rabi_plus_hz;
    }
    arms.push_back(std::move(j));
  }
  s.notes["drive_mapping"] = std::move(arms);
}

Scenario fig2() {
  Scenario s = base("fig2");
  s.arms = {single_arm("single_lambda", 284.0), wm_arm("wave_mixing", 284.0, 80.0)};
  s.arms[0].n_scans = 128;
  s.arms[1].n_scans = 1;
  s.waveform = MagneticWaveformSpec{WaveformKind::sine, 500.0, 40.0, 0.0, 0.0, 0.025, 10000.0};
  s.noise.scope_noise_rms_v = kPresetScopeNoiseRmsV;
  s.instrument.path = SignalPath::scope;
  s.analysis.mode = AnalysisMode::time_domain;
  s.analysis.signal_window = {0.010, 0.016};
  s.analysis.noise_window = {0.004, 0.0085};
  s.analysis.enhancement = std::pair{std::string("wave_mixing"), std::string("single_lambda")};
  s.notes["assumptions"] = {
      "field swept sinusoidally over +-500 nT (the shield limit) at 40 Hz, one period per 25 ms scan",
      "single-Lambda trace averaged over 128 scans (3.2 s), WM trace is a single scan",
      "scope noise calibrated so the averaged single-Lambda trace has noiseless peak / noise RMS = 2"};
  describe_arms(s);
  return s;
}

Scenario fig3() {
  Scenario s = base("fig3");
  s.arms = {single_arm("single_lambda", 1500.0), wm_arm("wave_mixing", 1500.0, 60.0),
            wm_arm("wave_mixing_100", 1500.0, 100.0)};
  s.waveform =
      MagneticWaveformSpec{WaveformKind::gaussian_train, 1.0, 40.0, 0.002, 0.0, 10.0, 10000.0};
  s.instrument.path = SignalPath::analyzer;
  s.instrument.rbw_hz = 0.725;
  s.instrument.n_rms_averages = 15;
  s.analysis.mode = AnalysisMode::spectrum;
  s.analysis.amplitudes_nt = {0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
  s.analysis.tone_hz = 40.0;
  s.analysis.tone_tol_hz = 2.0;
  s.analysis.enhancement = std::pair{std::string("wave_mixing"), std::string("single_lambda")};
  s.notes["assumptions"] = {
      "10 s traces at 10 kHz; the 725 mHz flat-top RBW needs 5.4 s segments",
      "peak PSD read at the 40 Hz repetition line"};
  describe_arms(s);
  return s;
}

Scenario fig4() {
  Scenario s = base("fig4");
  s.arms = {wm_arm("wave_mixing", 320.0, 80.0), single_arm("single_lambda", 320.0)};
  s.waveform = MagneticWaveformSpec{WaveformKind::square, 5.0, 20.0, 0.0, kEarthFieldNt, 0.225,
                                    10000.0};
  s.noise.scope_noise_rms_v = kPresetScopeNoiseRmsV;
  s.instrument.path = SignalPath::scope;
  s.instrument.n_scans = 64;
  s.analysis.mode = AnalysisMode::time_domain;
  s.analysis.signal_window = {0.045, 0.065};
  s.analysis.noise_window = {0.030, 0.045};
  s.analysis.enhancement = std::pair{std::string("wave_mixing"), std::string("single_lambda")};
  s.notes["assumptions"] = {
      "square pulses at 20 Hz with 50% duty (rate and duty not stated)",
      "Earth field represented by a static 50000 nT offset",
      "64 scans of 225 ms"};
  describe_arms(s);
  return s;
}

Scenario s2() {
  Scenario s = base("s2");
  s.arms = {single_arm("weak_probe", 17.0), wm_arm("wave_mixing", 17.0, 15.0),
            single_arm("strong_probe", 2600.0)};
  s.arms[2].noise_scale = 2600.0 / 17.0;
  s.waveform = MagneticWaveformSpec{WaveformKind::constant, 10.0, 0.0, 0.0, 0.0, 10.0, 10000.0};
  s.instrument.path = SignalPath::analyzer;
  s.instrument.n_rms_averages = 15;
  s.analysis.mode = AnalysisMode::spectrum;
  s.analysis.tone_hz = 40.0;
  s.analysis.tone_tol_hz = 2.0;
  s.notes["assumptions"] = {
      "constant 10 nT field; the PSD is read in the 40 Hz region",
      "optical noise PSD scales with probe intensity: strong probe noise_scale = 2600/17"};
  describe_arms(s);
  return s;
}

Scenario s3() {
  Scenario s = base("s3");
  const auto probe = [](std::string label, double rabi) {
    ArmSpec a;
    a.label = std::move(label);
    a.kind = SchemeKind::single_lambda;
    a.probe = FieldDrive{DriveRole::probe, rabi, rabi, 0.0, std::nullopt};
    return a;
  };
  s.arms = {probe("weak_probe", 100e3), probe("strong_probe", 1e6)};
  s.waveform.reset();
  s.analysis.mode = AnalysisMode::resonance;
  s.analysis.scan_half_width_hz = 2000.0;
  s.analysis.scan_points = 201;
  for (int k = 0; k < 10; ++k) s.analysis.probe_rabi_sweep_hz.push_back(100e3 + k * 100e3);
  // optically thin: on resonance the preset scale would absorb the probe completely
  s.susceptibility_scale_hz = 1.0;
  s.notes["assumptions"] = {"resonant probe (delta_p = 0)", "optically thin medium (scale 1 Hz)",
                            "linewidth = separation of the dispersive extrema"};
  s.notes.erase("susceptibility_scale");
  return s;
}

Scenario pumped() {
  Scenario s = fig3();
  s.name = "pumped";
  s.arms = {wm_arm("unpumped", 1500.0, 60.0), wm_arm("pumped", 1500.0, 60.0)};
  s.arms[0].trapped_fraction = 3.0 / 8.0;
  s.arms[1].trapped_fraction = 0.0;
  s.analysis.amplitudes_nt.clear();
  s.analysis.enhancement = std::pair{std::string("pumped"), std::string("unpumped")};
  s.notes["assumptions"] = {
      "without optical pumping the F=1 manifold (3 of 8 ground sublevels) is inert: "
      "trapped fraction 3/8",
      "with pumping every atom takes part: trapped fraction 0"};
  describe_arms(s);
  return s;
}

}  // namespace

std::vector<std::string> preset_names() { return {"fig2", "fig3", "fig4", "s2", "s3", "pumped"}; }

Scenario preset(std::string_view name) {
  if (name == "fig2") return fig2();
  if (name == "fig3") return fig3();
  if (name == "fig4") return fig4();
  if (name == "s2") return s2();
  if (name == "s3") return s3();
  if (name == "pumped") return pumped();
  throw ValidationError("unknown preset '" + std::string(name) +
                            "' (fig2|fig3|fig4|s2|s3|pumped)",
                        "preset");
}

}  // namespace nmor
