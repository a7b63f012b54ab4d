#pragma once

// Reference steady state for the 3-state Lambda model, built without the
// library: the generator is assembled column by column by applying the master
// equation (plain matrix products, long double) to each basis matrix, and the
// steady state is the right singular vector of its smallest singular value.

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace oracle {

using Real = long double;
using C = std::complex<Real>;
using M = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;

struct Lambda3 {
  double gamma_hz = 5.7e6;
  double g0_hz = 10.0;
  double rabi_plus_hz = 1e5;
  double rabi_minus_hz = 1e5;
  double detuning_hz = 0.0;
  double delta_b_hz = 0.0;
};

inline M lindblad_term(const M& c, const M& rho) {
  const M cdc = c.adjoint() * c;
  return c * rho * c.adjoint() - Real(0.5) * (cdc * rho + rho * cdc);
}

// d rho / dt for states |1>, |2> (excited), |3>.
inline M rhs(const Lambda3& p, const M& rho) {
  const Real two_pi = 2 * std::numbers::pi_v<Real>;
  const C i(0, 1);
  M h = M::Zero(3, 3);
  h(0, 0) = Real(0.5) * p.delta_b_hz;
  h(2, 2) = Real(-0.5) * p.delta_b_hz;
  h(1, 1) = -Real(p.detuning_hz);
  h(0, 1) = h(1, 0) = Real(0.5) * p.rabi_plus_hz;
  h(2, 1) = h(1, 2) = Real(0.5) * p.rabi_minus_hz;

  M out = -i * (h * rho - rho * h);
  for (int g : {0, 2}) {
    M c = M::Zero(3, 3);
    c(g, 1) = std::sqrt(Real(0.5) * p.gamma_hz);
    out += lindblad_term(c, rho);
  }
  M z = M::Zero(3, 3);
  z(0, 0) = 1;
  z(2, 2) = -1;
  out += lindblad_term(std::sqrt(Real(0.5) * p.g0_hz) * z, rho);

  const C tr = rho.trace();
  M sigma = M::Zero(3, 3);
  sigma(0, 0) = sigma(2, 2) = Real(0.5);
  out += Real(p.g0_hz) * (sigma * tr - rho);
  return two_pi * out;
}

// 9x9 generator, column-stacked: column i + 3 j is rhs(|i><j|).
inline M generator(const Lambda3& p) {
  M L(9, 9);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      M e = M::Zero(3, 3);
      e(i, j) = 1;
      const M col = rhs(p, e);
      for (int b = 0; b < 3; ++b)
        for (int a = 0; a < 3; ++a) L(a + 3 * b, i + 3 * j) = col(a, b);
    }
  return L;
}

inline Eigen::MatrixXcd steady_state(const Lambda3& p) {
  Eigen::JacobiSVD<M> svd(generator(p), Eigen::ComputeFullV);
  const auto v = svd.matrixV().col(8);
  M rho(3, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) rho(i, j) = v(i + 3 * j);
  rho /= rho.trace();
  Eigen::MatrixXcd out(3, 3);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i)
      out(i, j) = {static_cast<double>(rho(i, j).real()), static_cast<double>(rho(i, j).imag())};
  return out;
}

}  // namespace oracle
