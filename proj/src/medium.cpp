#include "nmor/medium.hpp"

#include <cmath>
#include <string>

#include "nmor/error.hpp"

namespace nmor {

std::string_view to_string(SchemeKind kind) {
  return kind == SchemeKind::single_lambda ? "single_lambda" : "wave_mixing";
}

std::string_view to_string(DriveRole role) { return role == DriveRole::probe ? "probe" : "wm"; }

std::string_view to_string(Branch branch) {
  switch (branch) {
    case Branch::probe_plus: return "probe_plus";
    case Branch::probe_minus: return "probe_minus";
    case Branch::wm_plus: return "wm_plus";
    case Branch::wm_minus: return "wm_minus";
  }
  return "unknown";
}

SchemeKind scheme_kind_from_string(std::string_view name) {
  if (name == "single_lambda") return SchemeKind::single_lambda;
  if (name == "wave_mixing") return SchemeKind::wave_mixing;
  throw ValidationError("unknown scheme kind '" + std::string(name) +
                        "' (expected single_lambda | wave_mixing)");
}

DriveRole drive_role_from_string(std::string_view name) {
  if (name == "probe") return DriveRole::probe;
  if (name == "wm") return DriveRole::wm;
  throw ValidationError("unknown drive role '" + std::string(name) + "' (expected probe | wm)");
}

void FieldDrive::validate() const {
  const std::string who{to_string(role)};
  if (!(rabi_plus_hz >= 0.0) || !std::isfinite(rabi_plus_hz))
    throw ValidationError("must be finite and >= 0", who + ".rabi_plus_hz");
  if (!(rabi_minus_hz >= 0.0) || !std::isfinite(rabi_minus_hz))
    throw ValidationError("must be finite and >= 0", who + ".rabi_minus_hz");
  if (!std::isfinite(detuning_hz)) throw ValidationError("must be finite", who + ".detuning_hz");
}

void ZeemanCalibration::validate() const {
  if (!(gamma_hz_per_nt > 0.0) || !std::isfinite(gamma_hz_per_nt))
    throw ValidationError("gamma_hz_per_nt must be > 0", "gamma_hz_per_nt");
}

double zeeman_shift(double b_field_nt, const ZeemanCalibration& cal) {
  return cal.gamma_hz_per_nt * b_field_nt;
}

const BranchCoupling& LevelScheme::branch(Branch b) const {
  for (const auto& c : branches_)
    if (c.branch == b) return c;
  throw ValidationError("scheme has no " + std::string(to_string(b)) + " branch");
}

bool LevelScheme::has_branch(Branch b) const noexcept {
  for (const auto& c : branches_)
    if (c.branch == b) return true;
  return false;
}

std::vector<int> LevelScheme::excited_states() const {
  if (kind_ == SchemeKind::single_lambda) return {kExcitedProbe};
  return {kExcitedProbe, kExcitedWm};
}

namespace {

void check_rate(double value, const char* name) {
  if (!std::isfinite(value) || value < 0.0)
    throw ValidationError("rate must be finite and >= 0", std::string("rates.") + name);
}

}  // namespace

LevelScheme make_scheme(SchemeKind kind, const SchemeParams& params) {
  const Rates& r = params.rates;
  check_rate(r.excited_decay_hz, "excited_decay_hz");
  check_rate(r.ground_decoherence_hz, "ground_decoherence_hz");
  if (!(r.trapped_fraction >= 0.0 && r.trapped_fraction < 1.0))
    throw ValidationError("trapped_fraction must lie in [0, 1)", "rates.trapped_fraction");
  for (double d : params.relative_dipoles)
    if (!std::isfinite(d) || d < 0.0)
      throw ValidationError("relative dipoles must be finite and >= 0", "relative_dipoles");

  params.probe.validate();
  if (params.probe.role != DriveRole::probe)
    throw ValidationError("probe drive must have role 'probe'", "probe");

  LevelScheme s;
  s.kind_ = kind;
  s.rates_ = r;
  const auto& w = params.relative_dipoles;
  s.branches_.push_back({Branch::probe_plus, kGround1, kExcitedProbe, w[0]});
  s.branches_.push_back({Branch::probe_minus, kGround3, kExcitedProbe, w[1]});

  if (kind == SchemeKind::single_lambda) {
    if (params.wm) throw ValidationError("single_lambda scheme does not accept a WM drive", "wm");
    if (r.trapped_fraction != 0.0)
      throw ValidationError("the reservoir exists only in the wave_mixing scheme",
                            "rates.trapped_fraction");
    s.n_states_ = 3;
  } else {
    if (!params.wm) throw ValidationError("wave_mixing scheme requires a WM drive", "wm");
    params.wm->validate();
    if (params.wm->role != DriveRole::wm)
      throw ValidationError("WM drive must have role 'wm'", "wm");
    s.n_states_ = 5;
    s.branches_.push_back({Branch::wm_plus, kGround1, kExcitedWm, w[2]});
    s.branches_.push_back({Branch::wm_minus, kGround3, kExcitedWm, w[3]});
  }

  if (r.excited_decay_hz > 0.0 && r.ground_decoherence_hz > 1e-3 * r.excited_decay_hz)
    s.warnings_.push_back("ground_decoherence_hz is not much smaller than excited_decay_hz");
  if (r.ground_decoherence_hz == 0.0)
    s.warnings_.push_back("ground_decoherence_hz = 0: steady state may be degenerate");
  return s;
}

double rabi_from_intensity(double intensity_uw_cm2, double excited_decay_hz,
                           double saturation_mw_cm2) {
  if (!(intensity_uw_cm2 >= 0.0)) throw ValidationError("intensity must be >= 0");
  const double i_mw = intensity_uw_cm2 * 1e-3;
  return excited_decay_hz * std::sqrt(i_mw / (2.0 * saturation_mw_cm2));
}

}  // namespace nmor
