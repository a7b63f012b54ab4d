#include "nmor/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nmor/dynamics.hpp"
#include "nmor/error.hpp"

namespace nmor {

namespace {

std::pair<std::size_t, std::size_t> window_indices(const Trace& trace, TimeWindow w,
                                                   const char* name) {
  if (!(w.end_s > w.begin_s)) throw ValidationError("window end must exceed begin", name);
  if (w.begin_s < 0.0 || w.end_s > trace.duration_s() + 1e-12)
    throw ValidationError("window lies outside the trace", name);
  const auto b = static_cast<std::size_t>(std::ceil(w.begin_s * trace.sample_rate_hz - 1e-9));
  const auto e = std::min(trace.samples.size(),
                          static_cast<std::size_t>(std::floor(w.end_s * trace.sample_rate_hz + 1e-9)));
  if (e < b + 2) throw ValidationError("window holds fewer than two samples", name);
  return {b, e};
}

}  // namespace

SnrResult snr_time(const Trace& trace, TimeWindow signal_window, TimeWindow noise_window) {
  trace.validate();
  const auto [sb, se] = window_indices(trace, signal_window, "signal_window");
  const auto [nb, ne] = window_indices(trace, noise_window, "noise_window");
  if (sb < ne && nb < se) throw ValidationError("signal and noise windows overlap", "noise_window");

  const auto& x = trace.samples;
  const double n = static_cast<double>(ne - nb);
  SnrResult r;
  r.baseline = std::accumulate(x.begin() + nb, x.begin() + ne, 0.0) / n;

  // Linear detrend so slow signal tails in the noise window do not count as noise.
  const double tc = 0.5 * (nb + ne - 1);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = nb; k < ne; ++k) {
    const double dt = k - tc;
    sxx += dt * dt;
    sxy += dt * (x[k] - r.baseline);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double ss = 0.0;
  for (std::size_t k = nb; k < ne; ++k) {
    const double res = x[k] - r.baseline - slope * (k - tc);
    ss += res * res;
  }
  r.noise_rms = std::sqrt(ss / n);

  for (std::size_t k = sb; k < se; ++k)
    r.peak_amplitude = std::max(r.peak_amplitude, std::abs(x[k] - r.baseline));
  r.snr = r.noise_rms > 0.0 ? r.peak_amplitude / r.noise_rms : INFINITY;
  r.detected = r.snr >= kDetectionThreshold;
  return r;
}

FitResult loglog_fit(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw ValidationError("log-log fit needs at least 3 points", "points");
  std::vector<double> lx, ly;
  for (const auto& [a, p] : points) {
    if (!(a > 0.0) || !(p > 0.0))
      throw ValidationError("log-log fit needs strictly positive values", "points");
    lx.push_back(std::log10(a));
    ly.push_back(std::log10(p));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0) throw ValidationError("log-log fit needs distinct amplitudes", "points");
  FitResult f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return f;
}

Enhancement enhancement(double peak_wm, double peak_single) {
  if (!(peak_wm > 0.0) || !(peak_single > 0.0))
    throw ValidationError("enhancement needs positive peak PSDs");
  const double ratio = peak_wm / peak_single;
  return {ratio, std::sqrt(ratio)};
}

// ---------------------------------------------------------------------------
// Resonance scans

namespace {

const FieldDrive& probe_of(std::span<const FieldDrive> drives) {
  for (const auto& d : drives)
    if (d.role == DriveRole::probe) return d;
  throw ValidationError("no probe drive", "drives");
}

std::vector<double> evaluate(const LiouvillianModel& model, const LevelScheme& scheme,
                             const FieldDrive& probe, std::span<const double> grid,
                             const DetectionChain& chain) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const DensityMatrix rho = steady_state(model.matrix_at(grid[i]), model.dim());
    v[i] = detector_voltage(rho, scheme, probe, chain.susceptibility_scale_hz, chain.polarimeter);
  }
  return v;
}

std::pair<std::size_t, std::size_t> extrema(std::span<const double> v) {
  const auto mx = std::max_element(v.begin(), v.end()) - v.begin();
  const auto mn = std::min_element(v.begin(), v.end()) - v.begin();
  return {static_cast<std::size_t>(mx), static_cast<std::size_t>(mn)};
}

bool interior(std::size_t i, std::size_t n) { return i > 0 && i + 1 < n; }

double refine(std::span<const double> x, std::span<const double> y, std::size_t i) {
  const double x0 = x[i - 1], x1 = x[i], x2 = x[i + 1];
  const double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
  const double d1 = (y1 - y0) / (x1 - x0);
  const double d2 = (y2 - y1) / (x2 - x1);
  const double curv = (d2 - d1) / (x2 - x0);
  if (curv == 0.0) return x1;
  const double xv = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
  return std::clamp(xv, x0, x2);
}

}  // namespace

LineShape resonance_scan(const LevelScheme& scheme, std::span<const FieldDrive> drives,
                         std::vector<double> grid, const DetectionChain& chain,
                         const ScanOptions& options) {
  if (grid.size() < 5) throw ValidationError("scan grid needs at least 5 points", "delta_b_grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw ValidationError("scan grid must be strictly increasing", "delta_b_grid");

  const LiouvillianModel model(scheme, drives);
  const FieldDrive& probe = probe_of(drives);
  std::vector<double> v = evaluate(model, scheme, probe, grid, chain);

  for (int w = 0;; ++w) {
    const auto [imax, imin] = extrema(v);
    if (interior(imax, grid.size()) && interior(imin, grid.size())) break;
    if (w >= options.max_widenings)
      throw NumericalError("resonance extrema not bracketed after " +
                           std::to_string(options.max_widenings) + " grid widenings");
    const double centre = 0.5 * (grid.front() + grid.back());
    for (double& g : grid) g = centre + 2.0 * (g - centre);
    v = evaluate(model, scheme, probe, grid, chain);
  }

  if (options.zoom) {
    const auto [imax, imin] = extrema(v);
    const double lo = std::min(grid[imax], grid[imin]);
    const double hi = std::max(grid[imax], grid[imin]);
    const double pad = std::max(hi - lo, 1e-12);
    std::vector<double> fine(grid.size());
    const double a = lo - pad, b = hi + pad;
    for (std::size_t i = 0; i < fine.size(); ++i)
      fine[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(fine.size() - 1);
    std::vector<double> fv = evaluate(model, scheme, probe, fine, chain);
    const auto [jmax, jmin] = extrema(fv);
    if (interior(jmax, fine.size()) && interior(jmin, fine.size())) {
      grid = std::move(fine);
      v = std::move(fv);
    }
  }

  return LineShape{std::move(grid), std::move(v), {drives.begin(), drives.end()}};
}

double linewidth(const LineShape& ls) {
  const auto& x = ls.delta_b_hz;
  const auto& y = ls.signal_v;
  if (x.size() != y.size() || x.size() < 3) throw ValidationError("malformed line shape");
  const auto [imax, imin] = extrema(y);
  if (!interior(imax, x.size()) || !interior(imin, x.size()))
    throw NumericalError("line-shape extrema are not bracketed by the grid");
  return std::abs(refine(x, y, imax) - refine(x, y, imin));
}

double zero_crossing(const LineShape& ls) {
  const auto& x = ls.delta_b_hz;
  const auto& y = ls.signal_v;
  const auto [imax, imin] = extrema(y);
  const std::size_t lo = std::min(imax, imin), hi = std::max(imax, imin);
  for (std::size_t i = lo; i < hi; ++i) {
    if (y[i] == 0.0) return x[i];
    if ((y[i] < 0.0) != (y[i + 1] < 0.0))
      return x[i] - y[i] * (x[i + 1] - x[i]) / (y[i + 1] - y[i]);
  }
  throw NumericalError("no zero crossing between the line-shape extrema");
}

double shape_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("curves must share a grid");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace nmor
