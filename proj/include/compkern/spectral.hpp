#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "pgf.hpp"

namespace compkern {

// P_{k,d}(t), normalized so P_{k,d}(1) = 1, from
//   (k + d - 2) P_{k+1} = (2k + d - 2) t P_k - k P_{k-1},  P_0 = 1, P_1 = t.
// For d = 2 this is the Chebyshev recurrence.
inline double legendre_eval(int d, int k, double t) {
  require(d >= 2, "legendre_eval: d must be >= 2");
  require(k >= 0, "legendre_eval: k must be >= 0");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = t;
  for (int j = 1; j < k; ++j) {
    const double next = ((2.0 * j + d - 2) * t * cur - j * prev) / (j + d - 2.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

// P_{0,d}(t)..P_{kmax,d}(t) into out.
inline void legendre_all(int d, int kmax, double t, double* out) {
  out[0] = 1.0;
  if (kmax == 0) return;
  out[1] = t;
  for (int j = 1; j < kmax; ++j) out[j + 1] = ((2.0 * j + d - 2) * t * out[j] - j * out[j - 1]) / (j + d - 2.0);
}

using BigInt = boost::multiprecision::cpp_int;

// N_{k,d} = C(k+d-2, d-2) + C(k+d-3, d-2) for k >= 1, the coefficients of
// (1 + s)/(1 - s)^{d-1}.
inline BigInt harmonic_dimension_exact(int d, int k) {
  require(d >= 2, "harmonic_dimension: d must be >= 2");
  require(k >= 0, "harmonic_dimension: k must be >= 0");
  if (k == 0) return 1;
  auto binom = [](long n, long r) {
    BigInt c = 1;
    if (r < 0 || r > n) return BigInt(0);
    for (long i = 1; i <= r; ++i) c = c * (n - r + i) / i;
    return c;
  };
  return binom(k + d - 2, d - 2) + binom(k + d - 3, d - 2);
}

// Same value in uint64; NumericalError when it does not fit.
inline std::uint64_t harmonic_dimension(int d, int k) {
  const BigInt v = harmonic_dimension_exact(d, k);
  if (v > BigInt(std::numeric_limits<std::uint64_t>::max()))
    throw NumericalError(fmt::format("harmonic_dimension: N_{{{},{}}} overflows 64 bits; use harmonic_dimension_exact", k, d));
  return static_cast<std::uint64_t>(v);
}

// log N_{k,d} for use with large d, k.
inline double log_harmonic_dimension(int d, int k) {
  if (k == 0) return 0.0;
  if (d == 2) return std::log(2.0);
  // N = (2k + d - 2)/k * C(k + d - 3, d - 2)
  return std::log((2.0 * k + d - 2) / k) + std::lgamma(k + d - 2.0) - std::lgamma(d - 1.0) - std::lgamma(k + 0.0);
}

// S_{d-2} / S_{d-1} = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)).
inline double sphere_area_ratio(int d) {
  return std::exp(std::lgamma(0.5 * d) - std::lgamma(0.5 * (d - 1))) / std::sqrt(M_PI);
}

// Gauss rule for the weight (1 - t^2)^{(d-3)/2} on [-1, 1], by Golub-Welsch on
// the monic Gegenbauer recurrence (lambda = (d-2)/2):
//   beta_1 = 1/(2(1+lambda)),  beta_n = n(n + 2 lambda - 1)/(4 (n + lambda)(n + lambda - 1)).
// Weights are scaled by S_{d-2}/S_{d-1}, so they sum to 1 and integrate
// directly against the normalized measure.
struct GaussRule {
  int d = 0;
  std::vector<double> nodes, weights;
};

inline GaussRule gauss_jacobi_rule(int n, int d) {
  require(n >= 1, "gauss_jacobi_rule: n must be >= 1");
  require(d >= 2, "gauss_jacobi_rule: d must be >= 2");
  const double lam = 0.5 * (d - 2);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max(0, n - 1));
  for (int j = 1; j < n; ++j) {
    const double b = (j == 1) ? 1.0 / (2.0 * (1.0 + lam))
                              : j * (j + 2.0 * lam - 1.0) / (4.0 * (j + lam) * (j + lam - 1.0));
    sub(j - 1) = std::sqrt(b);
  }
  GaussRule r;
  r.d = d;
  if (n == 1) {
    r.nodes = {0.0};
    r.weights = {1.0};
    return r;
  }
  // Nodes from the eigenvalues only; a dense eigenvector solve is O(n^3) and
  // legendre_expand can ask for thousands of nodes.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("gauss_jacobi_rule: tridiagonal eigensolve failed");
  r.nodes.resize(n);
  r.weights.resize(n);
  // Weights are the Christoffel function 1 / sum_j p_j(x)^2 of the orthonormal
  // recurrence x p_j = b_{j+1} p_{j+1} + b_j p_{j-1}, p_0 = 1.
  for (int i = 0; i < n; ++i) {
    const double x = es.eigenvalues()(i);
    double prev = 0.0, cur = 1.0, sum = 1.0;
    for (int j = 0; j + 1 < n; ++j) {
      const double next = (x * cur - (j ? sub(j - 1) : 0.0) * prev) / sub(j);
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    r.nodes[i] = x;
    r.weights[i] = 1.0 / sum;
  }
  return r;
}

// (S_{d-2}/S_{d-1}) * integral of f P_k (1-t^2)^{(d-3)/2}.
inline double normalized_projection(const std::function<double(double)>& f, int d, int k, const GaussRule& rule) {
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(rule.nodes[i]) * legendre_eval(d, k, rule.nodes[i]);
  return s;
}

// ---- Eigenvalues of K^{(L)} on the sphere -----------------------------------

struct SpectrumReport {
  int d = 0;
  std::vector<double> lambda;          // lambda_0..lambda_K
  std::vector<double> log_multiplicity;  // log N_{k,d}
  std::vector<std::string> multiplicity;  // exact decimal N_{k,d}
  double trace_check = 0.0;            // sum_k lambda_k N_{k,d}
  double tail_residual = 0.0;          // generation-distribution mass beyond its cap
  std::vector<double> quadrature;      // optional cross-check values

  double lambda_times_mult(int k) const {
    return lambda[k] == 0.0 ? 0.0 : lambda[k] * std::exp(log_multiplicity[k]);
  }

  void write_csv(std::ostream& os) const {
    os << "k,lambda_k,N_k_d,lambda_times_mult";
    if (!quadrature.empty()) os << ",lambda_quadrature,abs_diff";
    os << '\n';
    for (std::size_t k = 0; k < lambda.size(); ++k) {
      os << fmt::format("{},{:.17g},{},{:.17g}", k, lambda[k], multiplicity[k], lambda_times_mult(static_cast<int>(k)));
      if (!quadrature.empty()) os << fmt::format(",{:.17g},{:.3e}", quadrature[k], std::abs(quadrature[k] - lambda[k]));
      os << '\n';
    }
  }
};

// lambda_k = (Gamma(d/2)/sqrt(pi)) sum_{l even} P(Z = k+l) (k+l)!/l! 2^{-k}
//            Gamma((l+1)/2) / Gamma(k + (l+d)/2),
// every term assembled in log space.
inline SpectrumReport eigenvalues(int kmax, int d, const Pgf& gen) {
  require(d >= 2, "eigenvalues: d must be >= 2");
  require(kmax >= 0, "eigenvalues: k-max must be >= 0");
  SpectrumReport r;
  r.d = d;
  r.tail_residual = gen.tail_mass;
  const double pref = std::lgamma(0.5 * d) - 0.5 * std::log(M_PI);
  const int D = gen.degree_cap();
  for (int k = 0; k <= kmax; ++k) {
    double s = 0.0;
    for (int l = 0; k + l <= D; l += 2) {
      const double p = gen.coefficients[k + l];
      if (p <= 0.0) continue;
      const double lt = pref + std::log(p) + std::lgamma(k + l + 1.0) - std::lgamma(l + 1.0) - k * std::log(2.0) +
                        std::lgamma(0.5 * (l + 1)) - std::lgamma(k + 0.5 * (l + d));
      s += std::exp(lt);
    }
    r.lambda.push_back(s);
    r.log_multiplicity.push_back(log_harmonic_dimension(d, k));
    r.multiplicity.push_back(harmonic_dimension_exact(d, k).str());
    r.trace_check += r.lambda_times_mult(k);
  }
  return r;
}

// lambda_k by Funk-Hecke quadrature of a kernel profile f; the oracle for eigenvalues().
inline std::vector<double> eigenvalues_by_quadrature(const std::function<double(double)>& f, int d, int kmax,
                                                     int nodes = 512) {
  const auto rule = gauss_jacobi_rule(nodes, d);
  std::vector<double> out;
  for (int k = 0; k <= kmax; ++k) out.push_back(normalized_projection(f, d, k, rule));
  return out;
}

// ---- Legendre expansions and dual activations -----------------------------

struct LegendreExpansion {
  int d = 0;
  std::vector<double> coefficients;  // alpha_0..alpha_K
  int nodes_used = 0;

  bool positive_definite(double tol = 1e-8) const {
    for (double a : coefficients)
      if (a < -tol) return false;
    return true;
  }
  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t k = 0; k < coefficients.size(); ++k) s += coefficients[k] * legendre_eval(d, static_cast<int>(k), t);
    return s;
  }
};

inline void to_json(nlohmann::json& j, const LegendreExpansion& e) {
  j = nlohmann::json{{"d", e.d}, {"coefficients", e.coefficients}, {"nodes_used", e.nodes_used},
                     {"positive_definite", e.positive_definite()}};
}

// alpha_k = N_{k,d} (S_{d-2}/S_{d-1}) int f P_{k,d} (1-t^2)^{(d-3)/2} dt.
// Starts from `nodes` Gauss-Jacobi points and doubles until no coefficient
// moves by more than tol.
inline LegendreExpansion legendre_expand(const std::function<double(double)>& f, int d, int kmax, int nodes = 256,
                                         double tol = 1e-10, int max_nodes = 16384) {
  require(d >= 2 && kmax >= 0 && nodes >= 1, "legendre_expand: invalid arguments");
  std::vector<double> logN(kmax + 1);
  for (int k = 0; k <= kmax; ++k) logN[k] = log_harmonic_dimension(d, k);
  auto project = [&](int n) {
    const auto rule = gauss_jacobi_rule(n, d);
    std::vector<double> a(kmax + 1, 0.0), P(kmax + 1);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const double fw = rule.weights[i] * f(rule.nodes[i]);
      legendre_all(d, kmax, rule.nodes[i], P.data());
      for (int k = 0; k <= kmax; ++k) a[k] += fw * P[k];
    }
    for (int k = 0; k <= kmax; ++k) a[k] *= std::exp(logN[k]);
    return a;
  };
  LegendreExpansion e;
  e.d = d;
  int n = nodes;
  auto cur = project(n);
  while (true) {
    if (2 * n > max_nodes) break;
    auto next = project(2 * n);
    double change = 0.0;
    for (int k = 0; k <= kmax; ++k) change = std::max(change, std::abs(next[k] - cur[k]));
    n *= 2;
    cur = std::move(next);
    if (change < tol) break;
  }
  e.coefficients = std::move(cur);
  e.nodes_used = n;
  return e;
}

// sigma_f(t) = sum_k sqrt(alpha_k N_{k,d}) P_{k,d}(t), after rescaling so f(1) = 1.
struct DualActivation {
  int d = 0;
  std::vector<double> weights;  // sqrt(alpha_k N_{k,d})
  std::vector<double> alpha;    // rescaled, clamped coefficients
  double scale = 1.0;           // 1 / f(1) applied to the input coefficients
  double normalization = 0.0;   // (S_{d-2}/S_{d-1}) int sigma_f^2 (1-t^2)^{(d-3)/2}, should be 1

  double operator()(double t) const {
    const int K = static_cast<int>(weights.size()) - 1;
    double prev = 1.0, cur = t;
    double s = weights[0];
    if (K >= 1) s += weights[1] * t;
    for (int j = 1; j < K; ++j) {
      const double next = ((2.0 * j + d - 2) * t * cur - j * prev) / (j + d - 2.0);
      prev = cur;
      cur = next;
      s += weights[j + 1] * cur;
    }
    return s;
  }
};

inline DualActivation activation_from_kernel(const LegendreExpansion& e, double tol = 1e-8) {
  require(!e.coefficients.empty(), "activation_from_kernel: empty expansion");
  for (std::size_t k = 0; k < e.coefficients.size(); ++k)
    if (e.coefficients[k] < -tol)
      throw ValidationError(fmt::format(
          "activation_from_kernel: Legendre coefficient alpha_{} = {:.3e} < 0, so the kernel is not positive definite "
          "and has no dual activation",
          k, e.coefficients[k]));
  DualActivation a;
  a.d = e.d;
  // |alpha_k| <= tol is quadrature noise; the square root would inflate it.
  auto kept = [tol](double c) { return c > tol ? c : 0.0; };
  double total = 0.0;
  for (double c : e.coefficients) total += kept(c);
  require(total > 0, "activation_from_kernel: f(1) = 0");
  a.scale = 1.0 / total;
  for (std::size_t k = 0; k < e.coefficients.size(); ++k) {
    const double al = kept(e.coefficients[k]) * a.scale;
    a.alpha.push_back(al);
    a.weights.push_back(al == 0.0 ? 0.0 : std::sqrt(al) * std::exp(0.5 * log_harmonic_dimension(e.d, static_cast<int>(k))));
  }
  const int K = static_cast<int>(e.coefficients.size()) - 1;
  const auto rule = gauss_jacobi_rule(std::max(64, 2 * K + 8), e.d);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double v = a(rule.nodes[i]);
    a.normalization += rule.weights[i] * v * v;
  }
  return a;
}

}  // namespace compkern
