#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "nmor/dynamics.hpp"
#include "nmor/error.hpp"
#include "oracle.hpp"

using namespace nmor;

namespace {

constexpr double kPi = std::numbers::pi;

FieldDrive probe(double plus, double minus, double detuning = 0.0) {
  return FieldDrive{DriveRole::probe, plus, minus, detuning, std::nullopt};
}

LevelScheme lambda(double gamma = 5.7e6, double g0 = 10.0) {
  SchemeParams p;
  p.rates.excited_decay_hz = gamma;
  p.rates.ground_decoherence_hz = g0;
  return make_scheme(SchemeKind::single_lambda, p);
}

LevelScheme wave_mixing(double g0 = 10.0) {
  SchemeParams p;
  p.rates.ground_decoherence_hz = g0;
  p.wm = FieldDrive{DriveRole::wm, 0.0, 0.0, -2e9, std::nullopt};
  return make_scheme(SchemeKind::wave_mixing, p);
}

double max_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Superoperator of the relabelling |1> <-> |3> on vec(rho).
CMatrix swap_superop(int dim) {
  Eigen::PermutationMatrix<Eigen::Dynamic> p(dim);
  p.setIdentity();
  std::swap(p.indices()(0), p.indices()(2));
  const CMatrix pm = p.toDenseMatrix().cast<Complex>();
  return kron(pm, pm);
}

}  // namespace

TEST_CASE("no drive relaxes to the unpolarized ground mixture") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(0.0, 0.0)};
  const auto rho = steady_state(build_liouvillian(s, d, 0.0));
  const double expect[3] = {0.5, 0.0, 0.5};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(std::abs(rho(i, j) - Complex(i == j ? expect[i] : 0.0)) < 1e-12);
}

TEST_CASE("L conserves trace") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 2e5, -3e8)};
  const auto L = build_liouvillian(s, d, 37.0);
  for (int col = 0; col < 9; ++col) {
    Complex sum = 0.0;
    for (int i = 0; i < 3; ++i) sum += L.matrix(vec_index(i, i, 3), col);
    CHECK(std::abs(sum) < 1e-6);  // entries are ~1e9
  }
}

TEST_CASE("symmetric drives at zero field: L invariant under |1> <-> |3>") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5)};
  const CMatrix L = build_liouvillian(s, d, 0.0).matrix;
  const CMatrix P = swap_superop(3);
  CHECK(max_diff(P * L * P.transpose(), L) == 0.0);

  const auto rho = steady_state(build_liouvillian(s, d, 0.0));
  CHECK(max_diff(rho.relabeled(0, 2).matrix(), rho.matrix()) < 1e-14);
  CHECK(std::abs(rho(0, 2).imag()) < 1e-15);
}

TEST_CASE("steady state matches the null-space oracle at 50 Hz") {
  const oracle::Lambda3 p{5.7e6, 10.0, 1e5, 1e5, 0.0, 50.0};
  const auto s = lambda(p.gamma_hz, p.g0_hz);
  const FieldDrive d[] = {probe(p.rabi_plus_hz, p.rabi_minus_hz, p.detuning_hz)};
  const auto rho = steady_state(build_liouvillian(s, d, p.delta_b_hz));
  CHECK(max_diff(rho.matrix(), oracle::steady_state(p)) < 1e-9);
  CHECK(std::abs(rho(0, 2)) > 1e-6);  // the field leaves a visible coherence
}

TEST_CASE("steady state matches the oracle on 100 random configurations") {
  std::mt19937_64 rng(20240311);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto log_uniform = [&](double a, double b) {
    return a * std::pow(b / a, u(rng));
  };
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const oracle::Lambda3 p{log_uniform(1e6, 1e7),   log_uniform(1.0, 100.0),
                            log_uniform(1e4, 3e6),   log_uniform(1e4, 3e6),
                            6e9 * (2.0 * u(rng) - 1.0), 3000.0 * (2.0 * u(rng) - 1.0)};
    const auto s = lambda(p.gamma_hz, p.g0_hz);
    const FieldDrive d[] = {probe(p.rabi_plus_hz, p.rabi_minus_hz, p.detuning_hz)};
    const auto rho = steady_state(build_liouvillian(s, d, p.delta_b_hz));
    worst = std::max(worst, max_diff(rho.matrix(), oracle::steady_state(p)));
    CHECK(rho.invariants().satisfies());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("reversing the field relabels |1> <-> |3>") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(3e5, 3e5, -5e9)};
  for (double db : {3.0, 20.0, 400.0}) {
    const auto a = steady_state(build_liouvillian(s, d, db));
    const auto b = steady_state(build_liouvillian(s, d, -db));
    CHECK(max_diff(b.matrix(), a.relabeled(0, 2).matrix()) < 1e-12);
  }
}

TEST_CASE("wave mixing with a dark WM field embeds the single Lambda") {
  const FieldDrive p = probe(2e5, 2e5, -5e9);
  for (double db : {0.0, 7.0, -150.0}) {
    const FieldDrive d3[] = {p};
    const auto single = steady_state(build_liouvillian(lambda(), d3, db));
    const FieldDrive d5[] = {p, FieldDrive{DriveRole::wm, 0.0, 0.0, -2e9, std::nullopt}};
    const auto wm = steady_state(build_liouvillian(wave_mixing(), d5, db));
    CHECK(max_diff(wm.matrix().topLeftCorner(3, 3), single.matrix()) < 1e-12);
    CHECK(wm.matrix().bottomRows(2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("degenerate null space is reported") {
  // no decoherence, no light: every ground mixture is stationary
  const auto s = lambda(5.7e6, 0.0);
  const FieldDrive d[] = {probe(0.0, 0.0)};
  CHECK_THROWS_AS(steady_state(build_liouvillian(s, d, 0.0)), NumericalError);
}

TEST_CASE("drives must match the scheme") {
  const auto s = lambda();
  const FieldDrive none[] = {FieldDrive{DriveRole::wm, 1e5, 1e5, 0.0, std::nullopt}};
  CHECK_THROWS_AS(build_liouvillian(s, none, 0.0), ValidationError);
  const FieldDrive two[] = {probe(1e5, 1e5), probe(1e5, 1e5)};
  CHECK_THROWS_AS(build_liouvillian(s, two, 0.0), ValidationError);
}

TEST_CASE("density matrix invariants") {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 0.5;
  m(1, 1) = 0.5;
  CHECK(DensityMatrix(m).invariants().satisfies());
  m(0, 1) = 0.1;  // not Hermitian
  CHECK_THROWS_AS(DensityMatrix(m).require_valid(), NumericalError);
  m(0, 1) = 0.0;
  m(0, 0) = 1.2;
  m(1, 1) = -0.2;  // unit trace, negative eigenvalue
  const auto r = DensityMatrix(m).invariants();
  CHECK(r.trace_error < 1e-15);
  CHECK(r.min_eigenvalue == doctest::Approx(-0.2));
  CHECK_FALSE(r.satisfies());
}

TEST_CASE("evolve from the steady state under a constant field stays put") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5, -5e9)};
  const LiouvillianModel model(s, d);
  const auto rho0 = steady_state(model.at(25.0));
  std::vector<double> t(201);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = 1e-4 * k;
  EvolveOptions opt;
  opt.choice = IntegratorChoice::magnus4;
  const auto tr = evolve(model, [](double) { return 25.0; }, rho0, t, opt);
  for (const auto& r : tr.states) CHECK(max_diff(r.matrix(), rho0.matrix()) < 1e-8);
  CHECK(tr.integrator == Integrator::magnus4);
}

TEST_CASE("a Gaussian pulse leaves the steady state restored") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(3e5, 3e5, -5e9)};
  const LiouvillianModel model(s, d);
  const auto rho0 = steady_state(model.at(0.0));
  const double sigma = 2e-3 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const auto field = [sigma](double t) {
    const double x = (t - 0.01) / sigma;
    return 30.0 * std::exp(-0.5 * x * x);
  };
  std::vector<double> t(3001);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = 1e-4 * k;
  EvolveOptions opt;
  opt.choice = IntegratorChoice::magnus4;
  const auto tr = evolve(model, field, rho0, t, opt);
  CHECK(tr.worst.satisfies());
  // the pulse does move the state
  double excursion = 0.0;
  for (const auto& r : tr.states) excursion = std::max(excursion, max_diff(r.matrix(), rho0.matrix()));
  CHECK(excursion > 1e-6);
  CHECK(max_diff(tr.states.back().matrix(), rho0.matrix()) < 1e-6);
}

TEST_CASE("slow small sine: linear response, matches the quasi-static oracle") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5, -5e9)};
  const LiouvillianModel model(s, d);
  const double f = 0.05, amp = 0.5;  // 20 s period, 0.5 Hz << 20 Hz width
  const auto field = [=](double t) { return amp * std::sin(2.0 * kPi * f * t); };
  const int n = 1000;
  std::vector<double> t(n + 1);
  for (int k = 0; k <= n; ++k) t[k] = k / (f * n);
  EvolveOptions opt;
  opt.choice = IntegratorChoice::magnus4;
  const auto tr = evolve(model, field, steady_state(model.at(0.0)), t, opt);

  std::vector<double> x(n);
  double worst = 0.0, scale = 0.0;
  for (int k = 0; k < n; ++k) {
    x[k] = tr.states[k](0, 2).imag();
    const double ref = steady_state(model.at(field(t[k])))(0, 2).imag();
    worst = std::max(worst, std::abs(x[k] - ref));
    scale = std::max(scale, std::abs(ref));
  }
  CHECK(worst < 0.02 * scale);

  // harmonic content over one period
  const auto harmonic = [&](int h) {
    std::complex<double> acc = 0.0;
    for (int k = 0; k < n; ++k) acc += x[k] * std::polar(1.0, -2.0 * kPi * h * k / n);
    return std::abs(acc);
  };
  const double fundamental = harmonic(1);
  double others = 0.0;
  for (int h = 2; h <= 10; ++h) others += harmonic(h) * harmonic(h);
  CHECK(std::sqrt(others) < 0.01 * fundamental);
}

TEST_CASE("every evolve sample satisfies the invariants") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const bool wm = trial % 2 == 1;
    const FieldDrive p = probe(1e5 + 2e6 * u(rng), 1e5 + 2e6 * u(rng), -5e9 * u(rng));
    std::vector<FieldDrive> d{p};
    SchemeParams sp;
    sp.rates.ground_decoherence_hz = 1.0 + 50.0 * u(rng);
    if (wm) {
      sp.wm = FieldDrive{DriveRole::wm, 1e6 * u(rng), 1e6 * u(rng), -2e9, std::nullopt};
      sp.rates.trapped_fraction = 0.375;
      d.push_back(*sp.wm);
    }
    const auto s = make_scheme(wm ? SchemeKind::wave_mixing : SchemeKind::single_lambda, sp);
    const LiouvillianModel model(s, d);
    const double a = 500.0 * u(rng), fr = 10.0 + 40.0 * u(rng);
    const auto field = [=](double t) { return a * std::sin(2.0 * kPi * fr * t); };
    std::vector<double> t(400);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = 1e-4 * k;
    const auto tr = evolve(model, field, steady_state(model.at(0.0)), t);
    for (const auto& r : tr.states) CHECK(r.invariants().satisfies());
  }
}

TEST_CASE("integrator selection") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5)};
  const LiouvillianModel model(s, d);
  EvolveOptions opt;
  opt.field_timescale_s = 1e-3;
  CHECK(select_integrator(model, opt) == Integrator::magnus4);
  opt.field_timescale_s = 10.0;  // 100 / (2 pi 10 Hz) = 1.6 s
  CHECK(select_integrator(model, opt) == Integrator::quasi_static);
  opt.choice = IntegratorChoice::magnus4;
  CHECK(select_integrator(model, opt) == Integrator::magnus4);
  CHECK(to_string(Integrator::quasi_static) == "quasi_static");
}

TEST_CASE("quasi-static path returns per-sample steady states") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5)};
  const LiouvillianModel model(s, d);
  const auto field = [](double t) { return 100.0 * t; };
  const std::vector<double> t{0.0, 0.5, 1.0};
  EvolveOptions opt;
  opt.choice = IntegratorChoice::quasi_static;
  const auto tr = evolve(model, field, steady_state(model.at(0.0)), t, opt);
  CHECK(tr.integrator == Integrator::quasi_static);
  for (std::size_t k = 0; k < t.size(); ++k)
    CHECK(max_diff(tr.states[k].matrix(), steady_state(model.at(field(t[k]))).matrix()) < 1e-14);
}

TEST_CASE("periodic orbit is the long-time limit") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(3e5, 3e5, -5e9)};
  const LiouvillianModel model(s, d);
  const auto field = [](double t) { return 40.0 * std::sin(2.0 * kPi * 40.0 * t); };
  const int samples = 250;
  const auto orbit = periodic_orbit(model, field, 0.025, samples);
  CHECK(orbit.states.size() == static_cast<std::size_t>(samples));
  CHECK(orbit.worst.satisfies());

  // brute force: run 20 periods (8 relaxation times) from the zero-field state
  std::vector<double> t(20 * samples + 1);
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = 0.025 * k / samples;
  const auto tr = evolve(model, field, steady_state(model.at(0.0)), t);
  double worst = 0.0;
  for (int k = 0; k < samples; ++k)
    worst = std::max(worst, max_diff(tr.states[19 * samples + k].matrix(), orbit.states[k].matrix()));
  CHECK(worst < 1e-8);
}

TEST_CASE("evolve rejects bad grids and step exhaustion") {
  const auto s = lambda();
  const FieldDrive d[] = {probe(1e5, 1e5)};
  const LiouvillianModel model(s, d);
  const auto rho0 = steady_state(model.at(0.0));
  const std::vector<double> bad{0.0, 1e-3, 1e-3};
  CHECK_THROWS_AS(evolve(model, [](double) { return 0.0; }, rho0, bad), ValidationError);

  EvolveOptions opt;
  opt.choice = IntegratorChoice::magnus4;
  opt.max_substeps = 1;
  opt.rtol = 1e-14;
  const std::vector<double> t{0.0, 5e-3};
  const auto fast = [](double t) { return 1e4 * std::sin(2.0 * kPi * 3e3 * t); };
  CHECK_THROWS_AS(evolve(model, fast, rho0, t, opt), NumericalError);
}
