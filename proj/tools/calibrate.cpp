// Recomputes the preset calibration constants from the model:
// the susceptibility scale that puts the noiseless fig2 single-Lambda scan
// peak at 2 mV, and the scope noise giving its 128-scan average
// peak / noise RMS = 2.

#include <cmath>
#include <cstdio>

#include "nmor/scenarios.hpp"

int main() {
  using namespace nmor;
  constexpr double kTargetPeakV = 2e-3;
  constexpr double kTargetSnr = 2.0;

  Scenario s = preset("fig2");
  s.susceptibility_scale_hz = 1.0;
  s.noise.white_psd_v2_per_hz = 0.0;
  s.noise.scope_noise_rms_v = 0.0;
  RunOptions opt;
  opt.write_files = false;
  const double raw = run(s, opt).arm("single_lambda").noiseless_peak_v.front();
  const double scale = kTargetPeakV / raw;

  const int n = *s.arms.front().n_scans;
  const double sigma_total = kTargetPeakV / kTargetSnr * std::sqrt(static_cast<double>(n));
  const double sigma_white2 = kPresetWhitePsd * s.waveform->sample_rate_hz / 2.0;
  const double scope = std::sqrt(sigma_total * sigma_total - sigma_white2);

  std::printf("kPresetSusceptibilityScaleHz = %.6e\n", scale);
  std::printf("kPresetScopeNoiseRmsV = %.6e\n", scope);
  return 0;
}
