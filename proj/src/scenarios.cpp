#include "nmor/scenarios.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <numeric>
#include <set>
#include <sstream>

#include "nmor/error.hpp"

namespace nmor {

std::string_view to_string(AnalysisMode mode) {
  switch (mode) {
    case AnalysisMode::time_domain: return "time_domain";
    case AnalysisMode::spectrum: return "spectrum";
    case AnalysisMode::resonance: return "resonance";
  }
  return "?";
}

AnalysisMode analysis_mode_from_string(std::string_view name) {
  if (name == "time_domain") return AnalysisMode::time_domain;
  if (name == "spectrum") return AnalysisMode::spectrum;
  if (name == "resonance") return AnalysisMode::resonance;
  throw ValidationError("unknown analysis mode '" + std::string(name) +
                        "' (time_domain|spectrum|resonance)");
}

namespace {

std::string_view to_string(SignalPath p) { return p == SignalPath::scope ? "scope" : "analyzer"; }

SignalPath signal_path_from_string(std::string_view name) {
  if (name == "scope") return SignalPath::scope;
  if (name == "analyzer") return SignalPath::analyzer;
  throw ValidationError("unknown signal path '" + std::string(name) + "' (scope|analyzer)");
}

std::string_view to_string(IntegratorChoice c) {
  switch (c) {
    case IntegratorChoice::automatic: return "automatic";
    case IntegratorChoice::magnus4: return "magnus4";
    case IntegratorChoice::quasi_static: return "quasi_static";
  }
  return "?";
}

IntegratorChoice integrator_choice_from_string(std::string_view name) {
  if (name == "automatic") return IntegratorChoice::automatic;
  if (name == "magnus4") return IntegratorChoice::magnus4;
  if (name == "quasi_static") return IntegratorChoice::quasi_static;
  throw ValidationError("unknown integrator '" + std::string(name) +
                        "' (automatic|magnus4|quasi_static)");
}

// ---------------------------------------------------------------------------
// Strict JSON reading with key paths

class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError("expected an object", where());
  }

  std::string key(std::string_view k) const {
    return path_.empty() ? std::string(k) : path_ + "." + std::string(k);
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }

  const Json& at(const std::string& k) {
    if (!has(k)) throw ValidationError("required key is missing", key(k));
    return j_.at(k);
  }

  double number(const std::string& k) {
    const Json& v = at(k);
    if (!v.is_number()) throw ValidationError("expected a number", key(k));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ValidationError("expected a finite number", key(k));
    return d;
  }
  double number(const std::string& k, double def) { return has(k) ? number(k) : def; }
  std::optional<double> optional_number(const std::string& k) {
    return has(k) ? std::optional<double>(number(k)) : std::nullopt;
  }

  long long integer(const std::string& k, long long def) {
    if (!has(k)) return def;
    const Json& v = j_.at(k);
    if (!v.is_number_integer()) throw ValidationError("expected an integer", key(k));
    return v.get<long long>();
  }

  std::string string(const std::string& k) {
    const Json& v = at(k);
    if (!v.is_string()) throw ValidationError("expected a string", key(k));
    return v.get<std::string>();
  }
  std::string string(const std::string& k, std::string def) { return has(k) ? string(k) : def; }

  std::vector<double> numbers(const std::string& k) {
    if (!has(k)) return {};
    const Json& v = j_.at(k);
    if (!v.is_array()) throw ValidationError("expected an array of numbers", key(k));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        throw ValidationError("expected a number", key(k) + "[" + std::to_string(i) + "]");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  TimeWindow window(const std::string& k) {
    if (!has(k)) return {};
    const auto v = numbers(k);
    if (v.size() != 2) throw ValidationError("expected [begin_s, end_s]", key(k));
    return {v[0], v[1]};
  }

  // Converts enum names, re-raising with the key path attached.
  template <class F>
  auto parse(const std::string& k, F&& from_string) {
    const std::string s = string(k);
    try {
      return from_string(s);
    } catch (const ValidationError& e) {
      throw ValidationError(e.detail(), key(k));
    }
  }
  template <class F, class T>
  T parse(const std::string& k, F&& from_string, T def) {
    return has(k) ? parse(k, from_string) : def;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("unknown key", key(k));
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

FieldDrive read_drive(Reader r, DriveRole role) {
  FieldDrive d;
  d.role = role;
  d.rabi_plus_hz = r.number("rabi_plus_hz");
  d.rabi_minus_hz = r.number("rabi_minus_hz", d.rabi_plus_hz);
  d.detuning_hz = r.number("detuning_hz", 0.0);
  d.intensity_uw_cm2 = r.optional_number("intensity_uw_cm2");
  r.finish();
  return d;
}

Json drive_json(const FieldDrive& d) {
  Json j = Json::object();
  j["rabi_plus_hz"] = d.rabi_plus_hz;
  j["rabi_minus_hz"] = d.rabi_minus_hz;
  j["detuning_hz"] = d.detuning_hz;
  if (d.intensity_uw_cm2) j["intensity_uw_cm2"] = *d.intensity_uw_cm2;
  return j;
}

std::string arm_path(std::size_t i) { return "arms[" + std::to_string(i) + "]"; }

bool safe_label(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

// ---------------------------------------------------------------------------
// Arms

struct ArmModel {
  LevelScheme scheme;
  std::vector<FieldDrive> drives;
};

ArmModel build_arm(const Scenario& s, const ArmSpec& a, std::size_t index) {
  SchemeParams p;
  p.rates = s.medium.rates;
  if (a.kind == SchemeKind::single_lambda) p.rates.trapped_fraction = 0.0;
  if (a.trapped_fraction) p.rates.trapped_fraction = *a.trapped_fraction;
  p.probe = a.probe;
  p.probe.role = DriveRole::probe;
  p.wm = a.wm;
  if (p.wm) p.wm->role = DriveRole::wm;
  try {
    ArmModel m{make_scheme(a.kind, p), {p.probe}};
    if (p.wm) m.drives.push_back(*p.wm);
    return m;
  } catch (const ValidationError& e) {
    throw ValidationError(e.detail(), arm_path(index) + (e.path().empty() ? "" : "." + e.path()));
  }
}

int samples_per_period(const MagneticWaveformSpec& w) {
  if (w.kind == WaveformKind::constant) return 1;
  const double p = w.period_s() * w.sample_rate_hz;
  const double r = std::round(p);
  if (r < 1.0 || std::abs(p - r) > 1e-6 * std::max(1.0, p))
    throw ValidationError("the waveform period must span a whole number of samples",
                          "waveform.sample_rate_hz");
  return static_cast<int>(r);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scenario <-> JSON

void Scenario::validate() const {
  if (name.empty()) throw ValidationError("must not be empty", "name");
  if (arms.empty()) throw ValidationError("at least one arm is required", "arms");
  std::set<std::string> labels;
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const auto& a = arms[i];
    if (!safe_label(a.label))
      throw ValidationError("labels may only hold letters, digits, '_' and '-'",
                            arm_path(i) + ".label");
    if (!labels.insert(a.label).second)
      throw ValidationError("duplicate label '" + a.label + "'", arm_path(i) + ".label");
    if (!(a.noise_scale >= 0.0)) throw ValidationError("must be >= 0", arm_path(i) + ".noise_scale");
    if (a.n_scans && *a.n_scans < 1) throw ValidationError("must be >= 1", arm_path(i) + ".n_scans");
    build_arm(*this, a, i);
  }
  try {
    medium.zeeman.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(e.detail(), "medium.gamma_hz_per_nt");
  }
  if (!(susceptibility_scale_hz > 0.0))
    throw ValidationError("must be > 0", "optics.susceptibility_scale_hz");
  try {
    polarimeter.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(e.detail(), "optics" + (e.path().empty() ? "" : "." + e.path()));
  }
  noise.validate();
  if (instrument.n_scans < 1) throw ValidationError("must be >= 1", "instrument.n_scans");
  if (instrument.n_rms_averages < 1)
    throw ValidationError("must be >= 1", "instrument.n_rms_averages");
  if (!(instrument.rbw_hz > 0.0)) throw ValidationError("must be > 0", "instrument.rbw_hz");
  if (!(instrument.span_hz > 0.0)) throw ValidationError("must be > 0", "instrument.span_hz");
  if (!(evolve.rtol > 0.0)) throw ValidationError("must be > 0", "evolve.rtol");
  if (!(evolve.atol >= 0.0)) throw ValidationError("must be >= 0", "evolve.atol");
  if (evolve.max_substeps < 2) throw ValidationError("must be >= 2", "evolve.max_substeps");

  if (analysis.mode == AnalysisMode::resonance) {
    if (analysis.scan_points < 5) throw ValidationError("must be >= 5", "analysis.scan_points");
    if (!(analysis.scan_half_width_hz > 0.0))
      throw ValidationError("must be > 0", "analysis.scan_half_width_hz");
    for (std::size_t i = 0; i < analysis.probe_rabi_sweep_hz.size(); ++i)
      if (!(analysis.probe_rabi_sweep_hz[i] > 0.0))
        throw ValidationError("must be > 0",
                              "analysis.probe_rabi_sweep_hz[" + std::to_string(i) + "]");
  } else {
    if (!waveform) throw ValidationError("required for time_domain and spectrum runs", "waveform");
    waveform->validate();
    samples_per_period(*waveform);
    if (analysis.mode == AnalysisMode::spectrum) {
      const double tone = analysis.tone_hz > 0.0 ? analysis.tone_hz : waveform->frequency_hz;
      if (!(tone > 0.0 && tone < 0.5 * waveform->sample_rate_hz))
        throw ValidationError("tone must lie inside (0, Nyquist)", "analysis.tone_hz");
      if (!(analysis.tone_tol_hz >= 0.0))
        throw ValidationError("must be >= 0", "analysis.tone_tol_hz");
    }
    if (analysis.mode == AnalysisMode::time_domain) {
      for (const auto& [w, key] : {std::pair{analysis.signal_window, "analysis.signal_window_s"},
                                   std::pair{analysis.noise_window, "analysis.noise_window_s"}}) {
        if (!(w.end_s > w.begin_s)) throw ValidationError("end must exceed begin", key);
        if (w.begin_s < 0.0 || w.end_s > waveform->duration_s)
          throw ValidationError("window lies outside the scan", key);
      }
    }
  }
  if (analysis.enhancement) {
    const auto& [num, den] = *analysis.enhancement;
    if (!labels.count(num)) throw ValidationError("no arm labelled '" + num + "'", "analysis.enhancement.numerator");
    if (!labels.count(den)) throw ValidationError("no arm labelled '" + den + "'", "analysis.enhancement.denominator");
  }
}

Scenario scenario_from_json(const Json& config) {
  Reader root(config, "");
  Scenario s;
  s.name = root.string("name");
  {
    const Json& seed = root.at("seed");
    if (!seed.is_number_integer() || (seed.is_number_integer() && !seed.is_number_unsigned() &&
                                      seed.get<long long>() < 0))
      throw ValidationError("expected a non-negative integer", "seed");
    s.seed = seed.get<std::uint64_t>();
  }

  if (root.has("medium")) {
    Reader r(root.at("medium"), "medium");
    s.medium.rates.excited_decay_hz = r.number("excited_decay_hz", s.medium.rates.excited_decay_hz);
    s.medium.rates.ground_decoherence_hz =
        r.number("ground_decoherence_hz", s.medium.rates.ground_decoherence_hz);
    s.medium.rates.trapped_fraction = r.number("trapped_fraction", 0.0);
    s.medium.zeeman.gamma_hz_per_nt = r.number("gamma_hz_per_nt", s.medium.zeeman.gamma_hz_per_nt);
    r.finish();
  }

  if (root.has("optics")) {
    Reader r(root.at("optics"), "optics");
    s.susceptibility_scale_hz = r.number("susceptibility_scale_hz", s.susceptibility_scale_hz);
    auto& p = s.polarimeter;
    p.cell_length_m = r.number("cell_length_m", p.cell_length_m);
    p.wavelength_m = r.number("wavelength_m", p.wavelength_m);
    p.input_intensity = r.number("input_intensity", p.input_intensity);
    p.detector_gain = r.number("detector_gain", p.detector_gain);
    p.analyzer_angle_rad = r.number("analyzer_angle_rad", p.analyzer_angle_rad);
    r.finish();
  }

  {
    const Json& arms = root.at("arms");
    if (!arms.is_array()) throw ValidationError("expected an array", "arms");
    for (std::size_t i = 0; i < arms.size(); ++i) {
      Reader r(arms[i], arm_path(i));
      ArmSpec a;
      a.label = r.string("label");
      a.kind = r.parse("scheme", scheme_kind_from_string);
      a.probe = read_drive(Reader(r.at("probe"), r.key("probe")), DriveRole::probe);
      if (r.has("wm")) a.wm = read_drive(Reader(r.at("wm"), r.key("wm")), DriveRole::wm);
      a.trapped_fraction = r.optional_number("trapped_fraction");
      a.noise_scale = r.number("noise_scale", 1.0);
      if (r.has("n_scans")) a.n_scans = static_cast<int>(r.integer("n_scans", 1));
      r.finish();
      s.arms.push_back(std::move(a));
    }
  }

  if (root.has("waveform")) {
    Reader r(root.at("waveform"), "waveform");
    MagneticWaveformSpec w;
    w.kind = r.parse("kind", waveform_kind_from_string);
    w.amplitude_nt = r.number("amplitude_nt", 0.0);
    w.frequency_hz = r.number("frequency_hz", 0.0);
    w.fwhm_s = r.number("fwhm_s", 0.0);
    w.offset_nt = r.number("offset_nt", 0.0);
    w.duration_s = r.number("duration_s");
    w.sample_rate_hz = r.number("sample_rate_hz");
    r.finish();
    s.waveform = w;
  }

  if (root.has("noise")) {
    Reader r(root.at("noise"), "noise");
    s.noise.white_psd_v2_per_hz = r.number("white_psd_v2_per_hz", 0.0);
    s.noise.scope_noise_rms_v = r.number("scope_noise_rms_v", 0.0);
    r.finish();
  }
  s.noise.seed = s.seed;

  if (root.has("instrument")) {
    Reader r(root.at("instrument"), "instrument");
    auto& in = s.instrument;
    in.path = r.parse("path", signal_path_from_string, in.path);
    in.n_scans = static_cast<int>(r.integer("n_scans", in.n_scans));
    in.n_rms_averages = static_cast<int>(r.integer("n_rms_averages", in.n_rms_averages));
    in.rbw_hz = r.number("rbw_hz", in.rbw_hz);
    in.span_hz = r.number("span_hz", in.span_hz);
    r.finish();
  }

  if (root.has("analysis")) {
    Reader r(root.at("analysis"), "analysis");
    auto& an = s.analysis;
    an.mode = r.parse("mode", analysis_mode_from_string, an.mode);
    an.amplitudes_nt = r.numbers("amplitudes_nt");
    an.tone_hz = r.number("tone_hz", an.tone_hz);
    an.tone_tol_hz = r.number("tone_tol_hz", an.tone_tol_hz);
    an.signal_window = r.window("signal_window_s");
    an.noise_window = r.window("noise_window_s");
    an.scan_half_width_hz = r.number("scan_half_width_hz", an.scan_half_width_hz);
    an.scan_points = static_cast<int>(r.integer("scan_points", an.scan_points));
    an.probe_rabi_sweep_hz = r.numbers("probe_rabi_sweep_hz");
    if (r.has("enhancement")) {
      Reader e(r.at("enhancement"), r.key("enhancement"));
      an.enhancement = std::pair{e.string("numerator"), e.string("denominator")};
      e.finish();
    }
    r.finish();
  }

  if (root.has("evolve")) {
    Reader r(root.at("evolve"), "evolve");
    auto& ev = s.evolve;
    ev.rtol = r.number("rtol", ev.rtol);
    ev.atol = r.number("atol", ev.atol);
    ev.max_substeps = static_cast<int>(r.integer("max_substeps", ev.max_substeps));
    ev.choice = r.parse("integrator", integrator_choice_from_string, ev.choice);
    r.finish();
  }

  if (root.has("notes")) {
    s.notes = root.at("notes");
    if (!s.notes.is_object()) throw ValidationError("expected an object", "notes");
  }
  root.finish();
  s.validate();
  return s;
}

Json to_json(const Scenario& s) {
  Json j = Json::object();
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["medium"] = {{"excited_decay_hz", s.medium.rates.excited_decay_hz},
                 {"ground_decoherence_hz", s.medium.rates.ground_decoherence_hz},
                 {"trapped_fraction", s.medium.rates.trapped_fraction},
                 {"gamma_hz_per_nt", s.medium.zeeman.gamma_hz_per_nt}};
  j["optics"] = {{"susceptibility_scale_hz", s.susceptibility_scale_hz},
                 {"cell_length_m", s.polarimeter.cell_length_m},
                 {"wavelength_m", s.polarimeter.wavelength_m},
                 {"input_intensity", s.polarimeter.input_intensity},
                 {"detector_gain", s.polarimeter.detector_gain},
                 {"analyzer_angle_rad", s.polarimeter.analyzer_angle_rad}};
  Json arms = Json::array();
  for (const auto& a : s.arms) {
    Json arm = Json::object();
    arm["label"] = a.label;
    arm["scheme"] = std::string(to_string(a.kind));
    arm["probe"] = drive_json(a.probe);
    if (a.wm) arm["wm"] = drive_json(*a.wm);
    if (a.trapped_fraction) arm["trapped_fraction"] = *a.trapped_fraction;
    arm["noise_scale"] = a.noise_scale;
    if (a.n_scans) arm["n_scans"] = *a.n_scans;
    arms.push_back(std::move(arm));
  }
  j["arms"] = std::move(arms);
  if (s.waveform) {
    const auto& w = *s.waveform;
    j["waveform"] = {{"kind", std::string(to_string(w.kind))},
                     {"amplitude_nt", w.amplitude_nt},
                     {"frequency_hz", w.frequency_hz},
                     {"fwhm_s", w.fwhm_s},
                     {"offset_nt", w.offset_nt},
                     {"duration_s", w.duration_s},
                     {"sample_rate_hz", w.sample_rate_hz}};
  }
  j["noise"] = {{"white_psd_v2_per_hz", s.noise.white_psd_v2_per_hz},
                {"scope_noise_rms_v", s.noise.scope_noise_rms_v}};
  j["instrument"] = {{"path", std::string(to_string(s.instrument.path))},
                     {"n_scans", s.instrument.n_scans},
                     {"n_rms_averages", s.instrument.n_rms_averages},
                     {"rbw_hz", s.instrument.rbw_hz},
                     {"span_hz", s.instrument.span_hz}};
  const auto& an = s.analysis;
  Json analysis = Json::object();
  analysis["mode"] = std::string(to_string(an.mode));
  analysis["amplitudes_nt"] = an.amplitudes_nt;
  analysis["tone_hz"] = an.tone_hz;
  analysis["tone_tol_hz"] = an.tone_tol_hz;
  if (an.signal_window.end_s > an.signal_window.begin_s)
    analysis["signal_window_s"] = {an.signal_window.begin_s, an.signal_window.end_s};
  if (an.noise_window.end_s > an.noise_window.begin_s)
    analysis["noise_window_s"] = {an.noise_window.begin_s, an.noise_window.end_s};
  analysis["scan_half_width_hz"] = an.scan_half_width_hz;
  analysis["scan_points"] = an.scan_points;
  analysis["probe_rabi_sweep_hz"] = an.probe_rabi_sweep_hz;
  if (an.enhancement)
    analysis["enhancement"] = {{"numerator", an.enhancement->first},
                               {"denominator", an.enhancement->second}};
  j["analysis"] = std::move(analysis);
  j["evolve"] = {{"rtol", s.evolve.rtol},
                 {"atol", s.evolve.atol},
                 {"max_substeps", s.evolve.max_substeps},
                 {"integrator", std::string(to_string(s.evolve.choice))}};
  j["notes"] = s.notes;
  return j;
}

Json load_config(const std::filesystem::path& file) {
  const std::string text = read_text(file);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("not valid JSON: ") + e.what(), "config");
  }
  if (j.is_object() && j.contains("manifest_version")) {
    if (!j.contains("scenario")) throw ValidationError("manifest has no scenario", "scenario");
    return j.at("scenario");
  }
  return j;
}

const ArmResult& RunResult::arm(std::string_view label) const {
  for (const auto& a : arms)
    if (a.label == label) return a;
  throw std::out_of_range("no arm labelled " + std::string(label));
}

// ---------------------------------------------------------------------------
// Running

namespace {

template <class F>
auto parallel_map(std::size_t n, F f) -> std::vector<decltype(f(std::size_t{}))> {
  std::vector<std::future<decltype(f(std::size_t{}))>> futures;
  futures.reserve(n);
  for (std::size_t i = 0; i < n; ++i) futures.push_back(std::async(std::launch::async, f, i));
  std::vector<decltype(f(std::size_t{}))> out;
  out.reserve(n);
  for (auto& fut : futures) out.push_back(fut.get());
  return out;
}

struct Noiseless {
  std::vector<double> period_v;
  std::string integrator;
  int substeps = 0;
  InvariantReport worst;
};

Noiseless noiseless_signal(const Scenario& s, const ArmModel& arm, const MagneticWaveformSpec& w) {
  const LiouvillianModel model(arm.scheme, arm.drives);
  const FieldDrive& probe = arm.drives.front();
  const auto volts = [&](const DensityMatrix& rho) {
    return detector_voltage(rho, arm.scheme, probe, s.susceptibility_scale_hz, s.polarimeter);
  };
  Noiseless out;
  if (w.kind == WaveformKind::constant) {
    const DensityMatrix rho =
        steady_state(model.matrix_at(zeeman_shift(w.value_at(0.0), s.medium.zeeman)), model.dim());
    out.worst = rho.invariants();
    rho.require_valid(s.evolve.tolerances);
    out.period_v = {volts(rho)};
    out.integrator = "steady_state";
    return out;
  }
  EvolveOptions opt = s.evolve;
  opt.field_timescale_s = w.shortest_timescale_s();
  const auto cal = s.medium.zeeman;
  const Trajectory traj = periodic_orbit(
      model, [&w, cal](double t) { return zeeman_shift(w.value_at(t), cal); }, w.period_s(),
      samples_per_period(w), opt);
  for (const auto& rho : traj.states) out.period_v.push_back(volts(rho));
  out.integrator = std::string(to_string(traj.integrator));
  out.substeps = traj.max_substeps_used;
  out.worst = traj.worst;
  return out;
}

Trace tile(const Scenario& s, const MagneticWaveformSpec& w, const std::vector<double>& period) {
  Trace t;
  t.sample_rate_hz = w.sample_rate_hz;
  t.samples.resize(w.sample_count());
  for (std::size_t k = 0; k < t.samples.size(); ++k) t.samples[k] = period[k % period.size()];
  t.metadata.scenario_id = s.name;
  t.metadata.seed = s.seed;
  t.metadata.acquisition_time_s = t.duration_s();
  return t;
}

std::uint64_t stream_index(std::size_t arm, std::size_t amplitude, std::size_t k) {
  return (static_cast<std::uint64_t>(arm) << 40) ^ (static_cast<std::uint64_t>(amplitude) << 24) ^
         static_cast<std::uint64_t>(k);
}

// Everything computed for one (arm, amplitude) pair.
struct Job {
  Noiseless noiseless;
  Trace noiseless_trace;
  Trace trace;  // averaged scan (time domain) or first analyzer trace (spectrum)
  std::optional<SnrResult> snr;
  double noiseless_peak_v = 0.0;
  std::optional<Spectrum> spectrum;
  double peak_psd = 0.0;
};

Job run_job(const Scenario& s, const ArmModel& arm, std::size_t arm_index, double amplitude,
            std::size_t amp_index) {
  MagneticWaveformSpec w = *s.waveform;
  w.amplitude_nt = amplitude;
  Job job;
  job.noiseless = noiseless_signal(s, arm, w);
  job.noiseless_trace = tile(s, w, job.noiseless.period_v);

  NoiseSpec noise = s.noise;
  noise.white_psd_v2_per_hz *= s.arms[arm_index].noise_scale;
  noise.seed = s.seed;
  const auto& an = s.analysis;

  if (an.mode == AnalysisMode::time_domain) {
    const int n = s.arms[arm_index].n_scans.value_or(s.instrument.n_scans);
    std::vector<Trace> scans;
    scans.reserve(n);
    for (int k = 0; k < n; ++k)
      scans.push_back(add_noise(job.noiseless_trace, noise, s.instrument.path,
                                stream_index(arm_index, amp_index, k)));
    job.trace = average_scans(scans, n);
    job.snr = snr_time(job.trace, an.signal_window, an.noise_window);
    job.noiseless_peak_v =
        snr_time(job.noiseless_trace, an.signal_window, an.noise_window).peak_amplitude;
  } else {
    const int n = s.instrument.n_rms_averages;
    std::vector<Spectrum> spectra;
    spectra.reserve(n);
    for (int k = 0; k < n; ++k) {
      Trace t = add_noise(job.noiseless_trace, noise, s.instrument.path,
                          stream_index(arm_index, amp_index, k));
      spectra.push_back(psd(t, s.instrument.rbw_hz));
      if (k == 0) job.trace = std::move(t);
    }
    job.spectrum = rms_average_spectra(spectra);
    const double tone = an.tone_hz > 0.0 ? an.tone_hz : w.frequency_hz;
    job.peak_psd = peak_power(*job.spectrum, tone, an.tone_tol_hz);
  }
  return job;
}

Table trace_table(const Trace& t) {
  Table tab{{"t_seconds", "volts"}, {}};
  tab.rows.reserve(t.samples.size());
  for (std::size_t k = 0; k < t.samples.size(); ++k)
    tab.rows.push_back({static_cast<double>(k) / t.sample_rate_hz, t.samples[k]});
  return tab;
}

Table spectrum_table(const Spectrum& sp, double max_hz) {
  Table tab{{"freq_hz", "psd_v2_per_hz"}, {}};
  for (std::size_t k = 0; k < sp.freq_hz.size() && sp.freq_hz[k] <= max_hz; ++k)
    tab.rows.push_back({sp.freq_hz[k], sp.psd[k]});
  return tab;
}

Json invariants_json(const InvariantReport& r) {
  return {{"hermiticity_error", r.hermiticity_error},
          {"trace_error", r.trace_error},
          {"min_eigenvalue", r.min_eigenvalue}};
}

Json fit_json(const FitResult& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared}};
}

struct Computed {
  RunResult result;
  std::vector<std::vector<Job>> jobs;  // [arm][amplitude]
  std::vector<double> amplitudes;
  std::optional<Spectrum> first_spectrum;
};

Computed compute(const Scenario& s) {
  Computed c;
  std::vector<ArmModel> models;
  for (std::size_t i = 0; i < s.arms.size(); ++i) models.push_back(build_arm(s, s.arms[i], i));
  const auto& an = s.analysis;

  if (an.mode == AnalysisMode::resonance) {
    const DetectionChain chain{s.susceptibility_scale_hz, s.polarimeter};
    const auto scan = [&](const ArmModel& m) {
      std::vector<double> grid(an.scan_points);
      for (int k = 0; k < an.scan_points; ++k)
        grid[k] = -an.scan_half_width_hz +
                  2.0 * an.scan_half_width_hz * k / static_cast<double>(an.scan_points - 1);
      return resonance_scan(m.scheme, m.drives, grid, chain);
    };
    struct Task {
      std::size_t arm;
      std::optional<double> rabi;
    };
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < models.size(); ++i) {
      tasks.push_back({i, std::nullopt});
      if (i == 0)
        for (double r : an.probe_rabi_sweep_hz) tasks.push_back({i, r});
    }
    const auto shapes = parallel_map(tasks.size(), [&](std::size_t t) {
      ArmModel m = models[tasks[t].arm];
      if (tasks[t].rabi) {
        m.drives.front().rabi_plus_hz = *tasks[t].rabi;
        m.drives.front().rabi_minus_hz = *tasks[t].rabi;
      }
      return scan(m);
    });
    for (std::size_t i = 0; i < models.size(); ++i) {
      ArmResult a;
      a.label = s.arms[i].label;
      a.integrator = "steady_state";
      a.warnings = models[i].scheme.warnings();
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (tasks[t].arm != i) continue;
        if (!tasks[t].rabi) {
          a.lineshape = shapes[t];
          a.linewidth_hz = linewidth(shapes[t]);
          a.zero_crossing_hz = zero_crossing(shapes[t]);
        } else {
          a.linewidth_vs_rabi.emplace_back(*tasks[t].rabi, linewidth(shapes[t]));
        }
      }
      c.result.arms.push_back(std::move(a));
    }
    if (an.enhancement) {
      const auto peak = [&](const std::string& label) {
        const auto& v = c.result.arm(label).lineshape->signal_v;
        double p = 0.0;
        for (double x : v) p = std::max(p, std::abs(x));
        return p * p;
      };
      c.result.enhancement.emplace_back(
          0.0, enhancement(peak(an.enhancement->first), peak(an.enhancement->second)));
    }
    return c;
  }

  c.amplitudes = an.amplitudes_nt.empty() ? std::vector<double>{s.waveform->amplitude_nt}
                                          : an.amplitudes_nt;
  const std::size_t na = c.amplitudes.size();
  auto flat = parallel_map(models.size() * na, [&](std::size_t t) {
    const std::size_t i = t / na, j = t % na;
    return run_job(s, models[i], i, c.amplitudes[j], j);
  });
  c.jobs.resize(models.size());
  for (std::size_t t = 0; t < flat.size(); ++t) c.jobs[t / na].push_back(std::move(flat[t]));

  for (std::size_t i = 0; i < models.size(); ++i) {
    ArmResult a;
    a.label = s.arms[i].label;
    a.warnings = models[i].scheme.warnings();
    a.integrator = c.jobs[i].front().noiseless.integrator;
    a.worst = c.jobs[i].front().noiseless.worst;
    for (const auto& job : c.jobs[i]) {
      a.max_substeps = std::max(a.max_substeps, job.noiseless.substeps);
      a.worst = a.worst.worst(job.noiseless.worst);
    }
    for (std::size_t j = 0; j < na; ++j) {
      const Job& job = c.jobs[i][j];
      const auto& pv = job.noiseless.period_v;
      a.noiseless_mean_v.push_back(std::accumulate(pv.begin(), pv.end(), 0.0) /
                                   static_cast<double>(pv.size()));
      if (an.mode == AnalysisMode::time_domain) {
        a.snr.push_back(*job.snr);
        a.noiseless_peak_v.push_back(job.noiseless_peak_v);
        a.averaging_count = job.trace.metadata.averaging_count;
        a.acquisition_time_s = job.trace.metadata.acquisition_time_s;
      } else {
        a.peaks.push_back({c.amplitudes[j], job.peak_psd});
        a.averaging_count = job.spectrum->n_rms_averages;
        a.acquisition_time_s = job.spectrum->n_rms_averages * s.waveform->duration_s;
      }
    }
    if (an.mode == AnalysisMode::spectrum && a.peaks.size() >= 3) {
      std::vector<std::pair<double, double>> pts;
      for (const auto& p : a.peaks) pts.emplace_back(p.amplitude_nt, p.peak_psd);
      a.fit = loglog_fit(pts);
    }
    c.result.arms.push_back(std::move(a));
  }

  if (an.enhancement) {
    const auto& num = c.result.arm(an.enhancement->first);
    const auto& den = c.result.arm(an.enhancement->second);
    for (std::size_t j = 0; j < na; ++j) {
      const double pn = an.mode == AnalysisMode::spectrum
                            ? num.peaks[j].peak_psd
                            : num.noiseless_peak_v[j] * num.noiseless_peak_v[j];
      const double pd = an.mode == AnalysisMode::spectrum
                            ? den.peaks[j].peak_psd
                            : den.noiseless_peak_v[j] * den.noiseless_peak_v[j];
      c.result.enhancement.emplace_back(c.amplitudes[j], enhancement(pn, pd));
    }
  }
  return c;
}

Json results_json(const Scenario& s, const Computed& c) {
  Json arms = Json::array();
  for (std::size_t i = 0; i < c.result.arms.size(); ++i) {
    const auto& a = c.result.arms[i];
    Json j = Json::object();
    j["label"] = a.label;
    j["integrator"] = a.integrator;
    j["max_substeps"] = a.max_substeps;
    j["invariants"] = invariants_json(a.worst);
    j["warnings"] = a.warnings;
    if (s.analysis.mode == AnalysisMode::resonance) {
      j["linewidth_hz"] = a.linewidth_hz;
      j["zero_crossing_hz"] = a.zero_crossing_hz;
      Json sweep = Json::array();
      for (const auto& [r, w] : a.linewidth_vs_rabi) sweep.push_back({{"probe_rabi_hz", r}, {"linewidth_hz", w}});
      j["linewidth_vs_probe_rabi"] = std::move(sweep);
    } else {
      j["averaging_count"] = a.averaging_count;
      j["acquisition_time_s"] = a.acquisition_time_s;
      j["samples_per_period"] = c.jobs[i].front().noiseless.period_v.size();
      Json per = Json::array();
      for (std::size_t k = 0; k < c.amplitudes.size(); ++k) {
        Json p = {{"amplitude_nt", c.amplitudes[k]}, {"noiseless_mean_v", a.noiseless_mean_v[k]}};
        if (s.analysis.mode == AnalysisMode::time_domain) {
          const auto& r = a.snr[k];
          p["snr"] = r.snr;
          p["peak_v"] = r.peak_amplitude;
          p["baseline_v"] = r.baseline;
          p["noise_rms_v"] = r.noise_rms;
          p["detected"] = r.detected;
          p["noiseless_peak_v"] = a.noiseless_peak_v[k];
        } else {
          p["peak_psd_v2_per_hz"] = a.peaks[k].peak_psd;
          const auto& sp = *c.jobs[i][k].spectrum;
          p["rbw_hz"] = sp.rbw_hz;
          p["n_segments"] = sp.n_segments;
        }
        per.push_back(std::move(p));
      }
      j["amplitudes"] = std::move(per);
      if (a.fit) j["fit"] = fit_json(*a.fit);
    }
    arms.push_back(std::move(j));
  }
  Json out = {{"arms", std::move(arms)}};
  if (!c.result.enhancement.empty()) {
    Json e = Json::array();
    for (const auto& [amp, en] : c.result.enhancement)
      e.push_back({{"amplitude_nt", amp}, {"psd_ratio", en.psd_ratio}, {"amplitude_ratio", en.amplitude_ratio}});
    out["enhancement"] = std::move(e);
  }
  return out;
}

std::vector<std::string> write_outputs(const Scenario& s, const Computed& c,
                                       const RunOptions& opt) {
  std::vector<std::string> files;
  const auto& dir = opt.out_dir;
  const auto put = [&](const std::string& stem, const Table& t) {
    files.push_back(write_table(dir, stem, opt.format, t));
  };
  const auto& an = s.analysis;
  const bool sweep = c.amplitudes.size() > 1;
  const auto stem = [&](const std::string& label, std::size_t j, const char* what) {
    return label + (sweep ? "_a" + std::to_string(j) : "") + "_" + what;
  };

  if (an.mode == AnalysisMode::resonance) {
    Table widths{{"label", "probe_rabi_hz", "linewidth_hz"}, {}};
    for (std::size_t i = 0; i < c.result.arms.size(); ++i) {
      const auto& a = c.result.arms[i];
      Table t{{"delta_b_hz", "volts"}, {}};
      for (std::size_t k = 0; k < a.lineshape->delta_b_hz.size(); ++k)
        t.rows.push_back({a.lineshape->delta_b_hz[k], a.lineshape->signal_v[k]});
      put(a.label + "_lineshape", t);
      widths.rows.push_back({a.label, s.arms[i].probe.rabi_plus_hz, a.linewidth_hz});
      for (const auto& [r, w] : a.linewidth_vs_rabi) widths.rows.push_back({a.label, r, w});
    }
    put("linewidths", widths);
  } else {
    const auto& w = *s.waveform;
    Table wave{{"t_seconds", "b_nT"}, {}};
    const auto b = synthesize(w);
    for (std::size_t k = 0; k < b.size(); ++k)
      wave.rows.push_back({static_cast<double>(k) / w.sample_rate_hz, b[k]});
    put("waveform", wave);

    Table summary = an.mode == AnalysisMode::time_domain
                        ? Table{{"label", "amplitude_nt", "snr", "peak_v", "baseline_v", "noise_rms_v",
                                 "detected", "noiseless_peak_v", "averaging_count",
                                 "acquisition_time_s"},
                                {}}
                        : Table{{"label", "amplitude_nt", "peak_psd_v2_per_hz"}, {}};
    const double max_hz = std::min(s.instrument.span_hz, 0.5 * w.sample_rate_hz);
    for (std::size_t i = 0; i < c.result.arms.size(); ++i) {
      const auto& a = c.result.arms[i];
      for (std::size_t j = 0; j < c.amplitudes.size(); ++j) {
        const Job& job = c.jobs[i][j];
        if (an.mode == AnalysisMode::time_domain) {
          put(stem(a.label, j, "trace"), trace_table(job.trace));
          put(stem(a.label, j, "noiseless"), trace_table(job.noiseless_trace));
          const auto& r = a.snr[j];
          summary.rows.push_back({a.label, c.amplitudes[j], r.snr, r.peak_amplitude, r.baseline,
                                  r.noise_rms, static_cast<std::int64_t>(r.detected),
                                  a.noiseless_peak_v[j],
                                  static_cast<std::int64_t>(a.averaging_count),
                                  a.acquisition_time_s});
        } else {
          put(stem(a.label, j, "spectrum"), spectrum_table(*job.spectrum, max_hz));
          summary.rows.push_back({a.label, c.amplitudes[j], a.peaks[j].peak_psd});
        }
      }
    }
    put(an.mode == AnalysisMode::time_domain ? "snr" : "peaks", summary);

    Table fits{{"label", "slope", "intercept", "r_squared"}, {}};
    for (const auto& a : c.result.arms)
      if (a.fit) fits.rows.push_back({a.label, a.fit->slope, a.fit->intercept, a.fit->r_squared});
    if (!fits.rows.empty()) put("fits", fits);
  }

  if (!c.result.enhancement.empty()) {
    Table e{{"amplitude_nt", "psd_ratio", "amplitude_ratio"}, {}};
    for (const auto& [amp, en] : c.result.enhancement)
      e.rows.push_back({amp, en.psd_ratio, en.amplitude_ratio});
    put("enhancement", e);
  }
  return files;
}

Json base_manifest(const Scenario& s) {
  Json m = Json::object();
  m["manifest_version"] = 1;
  m["generator"] = "nmor";
  m["version"] = std::string(library_version());
  m["scenario"] = to_json(s);
  m["random_streams"] =
      "splitmix64 keyed by (seed, stage, arm << 40 ^ amplitude << 24 ^ scan); std::mt19937_64";
  return m;
}

Json error_json(const std::exception& e) {
  if (const auto* v = dynamic_cast<const ValidationError*>(&e))
    return {{"type", "validation"}, {"path", v->path()}, {"message", v->detail()}};
  if (dynamic_cast<const NumericalError*>(&e)) return {{"type", "numerical"}, {"message", e.what()}};
  return {{"type", "runtime"}, {"message", e.what()}};
}

}  // namespace

RunResult run(const Scenario& scenario, const RunOptions& options) {
  scenario.validate();
  Json manifest = base_manifest(scenario);
  Computed c;
  try {
    c = compute(scenario);
  } catch (const std::exception& e) {
    if (options.write_files) {
      std::filesystem::create_directories(options.out_dir);
      manifest["status"] = "failed";
      manifest["error"] = error_json(e);
      manifest["files"] = Json::array();
      write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    }
    throw;
  }
  manifest["status"] = "ok";
  manifest["results"] = results_json(scenario, c);
  if (options.write_files) {
    std::filesystem::create_directories(options.out_dir);
    c.result.files = write_outputs(scenario, c, options);
  }
  manifest["files"] = c.result.files;
  if (options.write_files)
    write_text(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
  c.result.manifest = std::move(manifest);
  return std::move(c.result);
}

// ---------------------------------------------------------------------------
// Sweeps

Json with_override(Json config, std::string_view dotted_path, const Json& value) {
  if (dotted_path.empty()) throw ValidationError("empty parameter path", "param");
  Json* node = &config;
  std::string walked;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t dot = dotted_path.find('.', pos);
    const std::string part(dotted_path.substr(pos, dot == std::string_view::npos ? dotted_path.npos : dot - pos));
    walked += (walked.empty() ? "" : ".") + part;
    if (node->is_object()) {
      if (!node->contains(part)) throw ValidationError("no such key", walked);
      node = &(*node)[part];
    } else if (node->is_array()) {
      std::size_t idx = 0;
      const auto res = std::from_chars(part.data(), part.data() + part.size(), idx);
      if (res.ec != std::errc() || res.ptr != part.data() + part.size() || idx >= node->size())
        throw ValidationError("no such array element", walked);
      node = &(*node)[idx];
    } else {
      throw ValidationError("cannot descend into a scalar", walked);
    }
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  *node = value;
  return config;
}

std::vector<SweepPoint> sweep(const Json& config, std::string_view param,
                              const std::vector<Json>& values, const RunOptions& options) {
  if (values.empty()) throw ValidationError("no sweep values", "values");
  const Json resolved = to_json(scenario_from_json(config));
  std::vector<Scenario> scenarios;
  for (const auto& v : values) scenarios.push_back(scenario_from_json(with_override(resolved, param, v)));

  std::vector<SweepPoint> points(values.size());
  const auto results = parallel_map(values.size(), [&](std::size_t i) {
    RunOptions o = options;
    o.out_dir = options.out_dir / ("point_" + std::to_string(i));
    return run(scenarios[i], o);
  });

  const Scenario& base = scenarios.front();
  std::vector<std::string> cols{"point", "value", "directory"};
  for (const auto& a : base.arms) {
    switch (base.analysis.mode) {
      case AnalysisMode::time_domain: cols.push_back(a.label + "_snr"); break;
      case AnalysisMode::spectrum: cols.push_back(a.label + "_peak_psd_v2_per_hz"); break;
      case AnalysisMode::resonance: cols.push_back(a.label + "_linewidth_hz"); break;
    }
  }
  Table table{cols, {}};
  Json listing = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    points[i].value = values[i];
    points[i].directory = "point_" + std::to_string(i);
    points[i].result = results[i];
    std::vector<Cell> row{static_cast<std::int64_t>(i), values[i].dump(), points[i].directory};
    for (const auto& a : results[i].arms) {
      switch (base.analysis.mode) {
        case AnalysisMode::time_domain: row.push_back(a.snr.front().snr); break;
        case AnalysisMode::spectrum: row.push_back(a.peaks.front().peak_psd); break;
        case AnalysisMode::resonance: row.push_back(a.linewidth_hz); break;
      }
    }
    table.add(std::move(row));
    listing.push_back({{"value", values[i]}, {"directory", points[i].directory}});
  }
  if (options.write_files) {
    const std::string file = write_table(options.out_dir, "sweep", options.format, table);
    Json m = {{"manifest_version", 1},
              {"generator", "nmor"},
              {"version", std::string(library_version())},
              {"param", std::string(param)},
              {"base_scenario", resolved},
              {"points", std::move(listing)},
              {"files", {file}}};
    write_text(options.out_dir / "sweep_manifest.json", m.dump(2) + "\n");
  }
  return points;
}

}  // namespace nmor
