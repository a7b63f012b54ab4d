#pragma once

// Headline quantities: time-domain SNR, log-log linearity, enhancement
// ratios and magnetic-resonance linewidths.

#include <span>
#include <utility>
#include <vector>

#include "nmor/instrument.hpp"
#include "nmor/medium.hpp"
#include "nmor/optics.hpp"

namespace nmor {

struct TimeWindow {
  double begin_s = 0.0;
  double end_s = 0.0;
};

struct SnrResult {
  double snr = 0.0;
  double peak_amplitude = 0.0;  // max |x - baseline| in the signal window
  double baseline = 0.0;        // mean of the noise window
  double noise_rms = 0.0;       // RMS of the linearly detrended noise window
  bool detected = false;        // snr >= kDetectionThreshold
};

inline constexpr double kDetectionThreshold = 3.0;

// (peak - baseline) / noise RMS. Windows must be disjoint, inside the trace
// and hold at least two samples each.
SnrResult snr_time(const Trace& trace, TimeWindow signal_window, TimeWindow noise_window);

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;  // log10 units
  double r_squared = 0.0;
};

// Least-squares line through (log10 amplitude, log10 psd).
FitResult loglog_fit(std::span<const std::pair<double, double>> points);

struct Enhancement {
  double psd_ratio = 1.0;
  double amplitude_ratio = 1.0;  // sqrt(psd_ratio)
};

Enhancement enhancement(double peak_wm, double peak_single);

// Everything needed to turn a steady state into a detector voltage.
struct DetectionChain {
  double susceptibility_scale_hz = 1.0;
  PolarimeterConfig polarimeter;
};

struct LineShape {
  std::vector<double> delta_b_hz;
  std::vector<double> signal_v;
  std::vector<FieldDrive> drives;
};

struct ScanOptions {
  int max_widenings = 16;  // each doubles the grid about its centre
  bool zoom = true;        // re-grid around the extrema once they are bracketed
};

// Steady-state V(delta_B) on the grid. The grid is widened until both
// extrema of the dispersive curve are interior, then (with zoom) rebuilt to
// span the extrema with the same number of points.
LineShape resonance_scan(const LevelScheme& scheme, std::span<const FieldDrive> drives,
                         std::vector<double> delta_b_grid, const DetectionChain& chain,
                         const ScanOptions& options = {});

// Separation of the dispersive extrema, each refined by a parabola through
// its neighbours. Throws NumericalError if an extremum sits on the grid edge.
double linewidth(const LineShape& ls);

// delta_B where the curve crosses zero between its extrema (linear interpolation).
double zero_crossing(const LineShape& ls);

// Pearson correlation of two curves sampled on the same grid.
double shape_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace nmor
