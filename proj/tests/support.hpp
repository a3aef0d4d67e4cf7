#pragma once

// Test-only helpers: random instances and a two-sample KS test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <compkern/pgf.hpp>
#include <compkern/rng.hpp>

namespace compkern::ck_test {

// Random offspring law on {0..deg}; p_0 forced to 0 when centered.
inline Pgf random_pgf(Philox4x32& eng, int deg, bool centered) {
  std::vector<double> p(deg + 1);
  double s = 0;
  for (int k = 0; k <= deg; ++k) {
    p[k] = (centered && k == 0) ? 0.0 : eng.uniform();
    s += p[k];
  }
  for (double& v : p) v /= s;
  double t = 0;
  for (int k = 0; k < deg; ++k) t += p[k];
  p[deg] = std::max(0.0, 1.0 - t);
  return make_pgf(p);
}

// Asymptotic Kolmogorov distribution: P(sqrt(n_eff) D > lambda).
inline double ks_pvalue(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double s = 0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  double D = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    D = std::max(D, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  return ks_pvalue((ne + 0.12 + 0.11 / ne) * D);
}

}  // namespace compkern::ck_test

#include <Eigen/Dense>
#include <compkern/hermite.hpp>

namespace compkern::ck_test {

// Centered, L2-normalized activation built from exact quadrature, together
// with its dual PGF (coefficients up to iota, the rest as tail mass).
struct CenteredActivation {
  ActivationFn fn;
  Pgf pgf;
};

inline CenteredActivation centered_activation(const std::string& name, int iota = 20) {
  const auto raw = activations::builtin(name);
  const auto coef = quadrature_coefficients(raw, iota);
  const double a0 = coef.coefficients[0];
  const double var = quadrature_second_moment(raw) - a0 * a0;
  const double inv = 1.0 / std::sqrt(var);
  CenteredActivation c;
  c.fn = {name + "-centered", [raw, a0, inv](double t) { return (raw(t) - a0) * inv; }};
  std::vector<double> p(iota + 1, 0.0);
  double kept = 0;
  for (int k = 1; k <= iota; ++k) {
    p[k] = coef.coefficients[k] * coef.coefficients[k] / var;
    kept += p[k];
  }
  c.pgf = make_pgf(p, std::max(0.0, 1.0 - kept));
  return c;
}

// Unit vectors x, z in R^d with <x, z> = rho, randomly rotated.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> unit_pair(int d, double rho, std::uint64_t seed) {
  NormalSource n(substream(seed, StreamTag::misc, 99));
  Eigen::VectorXd u(d), v(d);
  for (int i = 0; i < d; ++i) u(i) = n();
  for (int i = 0; i < d; ++i) v(i) = n();
  u.normalize();
  v -= v.dot(u) * u;
  v.normalize();
  return {u, rho * u + std::sqrt(1 - rho * rho) * v};
}

struct McResult {
  double mean = 0, se = 0;
};

// E[sigma(theta^T x) sigma(theta^T z)] over theta ~ N(0, I_d).
inline McResult duality_monte_carlo(const ActivationFn& f, const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                    std::uint64_t M, std::uint64_t seed) {
  NormalSource n(substream(seed, StreamTag::duality_mc, 0));
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd th(d);
  double s = 0, s2 = 0;
  for (std::uint64_t i = 0; i < M; ++i) {
    for (int k = 0; k < d; ++k) th(k) = n();
    const double v = f(th.dot(x)) * f(th.dot(z));
    s += v;
    s2 += v * v;
  }
  const double m = double(M);
  McResult r;
  r.mean = s / m;
  r.se = std::sqrt(std::max(0.0, s2 / m - r.mean * r.mean) / (m - 1));
  return r;
}

}  // namespace compkern::ck_test
