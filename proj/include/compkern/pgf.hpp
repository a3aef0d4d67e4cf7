#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "hermite.hpp"

namespace compkern {

// Offspring distribution p_0..p_D plus any probability mass beyond D.
struct Pgf {
  std::vector<double> coefficients;
  double tail_mass = 0.0;
  std::string family;  // empty when not from a parametric family
  nlohmann::json params = nlohmann::json::object();

  int degree_cap() const { return static_cast<int>(coefficients.size()) - 1; }

  double coefficient(int k) const {
    return (k >= 0 && k <= degree_cap()) ? coefficients[k] : 0.0;
  }

  double mass() const {
    double s = 0;
    for (double p : coefficients) s += p;
    return s;
  }

  void validate(double tol = 1e-10) const {
    require(!coefficients.empty(), "Pgf: empty coefficient list");
    for (double p : coefficients) require(std::isfinite(p) && p >= 0.0, "Pgf: coefficients must be finite and non-negative");
    require(tail_mass >= 0.0, "Pgf: tail_mass must be non-negative");
    require(std::abs(mass() + tail_mass - 1.0) <= tol,
            "Pgf: probabilities sum to " + std::to_string(mass() + tail_mass) + ", expected 1");
  }
};

inline Pgf make_pgf(std::vector<double> p, double tail = 0.0) {
  Pgf g;
  g.coefficients = std::move(p);
  g.tail_mass = tail;
  g.validate();
  return g;
}

// Point mass at k (s -> s^k).
inline Pgf monomial_pgf(int k) {
  require(k >= 0, "monomial_pgf: degree must be >= 0");
  std::vector<double> p(k + 1, 0.0);
  p[k] = 1.0;
  Pgf g = make_pgf(std::move(p));
  g.family = "monomial";
  g.params = {{"k", k}};
  return g;
}

inline void to_json(nlohmann::json& j, const Pgf& g) {
  j = nlohmann::json{{"family", g.family.empty() ? nlohmann::json(nullptr) : nlohmann::json(g.family)},
                     {"params", g.params},
                     {"degree_cap", g.degree_cap()},
                     {"coefficients", g.coefficients},
                     {"tail_mass", g.tail_mass}};
}

inline void from_json(const nlohmann::json& j, Pgf& g) {
  g.coefficients = j.at("coefficients").get<std::vector<double>>();
  g.tail_mass = j.value("tail_mass", 0.0);
  g.family = (j.contains("family") && j.at("family").is_string()) ? j.at("family").get<std::string>() : "";
  g.params = j.value("params", nlohmann::json::object());
  if (j.contains("degree_cap"))
    require(j.at("degree_cap").get<int>() == g.degree_cap(), "Pgf JSON: degree_cap does not match coefficient count");
  g.validate();
}

// Horner evaluation of sum p_k s^k. The tail is attributed only at s = 1,
// where it makes G(1) = 1 exactly as the distribution requires.
inline double pgf_eval(const Pgf& g, double s) {
  require(std::abs(s) <= 1.0 + 1e-12, "pgf_eval: |s| must be <= 1");
  if (s == 1.0) return g.mass() + g.tail_mass;
  double v = 0.0;
  for (int k = g.degree_cap(); k >= 0; --k) v = v * s + g.coefficients[k];
  return v;
}

// G'(s) = sum k p_k s^{k-1}.
inline double pgf_derivative(const Pgf& g, double s) {
  double v = 0.0;
  for (int k = g.degree_cap(); k >= 1; --k) v = v * s + k * g.coefficients[k];
  return v;
}

// 1 - G(1 - u) evaluated without cancellation for u in [0, 1]:
// sum p_k (1 - (1-u)^k) + tail, with 1 - (1-u)^k = -expm1(k log1p(-u)).
inline double pgf_eval_complement(const Pgf& g, double u) {
  require(u >= 0.0 && u <= 2.0, "pgf_eval_complement: u must lie in [0, 2]");
  if (u == 0.0) return 0.0;
  if (u > 1.0) return 1.0 - pgf_eval(g, 1.0 - u);
  const double l = std::log1p(-u);
  double v = g.tail_mass;
  for (int k = 1; k <= g.degree_cap(); ++k) {
    if (g.coefficients[k] == 0.0) continue;
    v += g.coefficients[k] * (-std::expm1(k * l));
  }
  return v;
}

// ---- Parametric families -------------------------------------------------

namespace detail {
inline constexpr double kFamilyTail = 1e-12;
inline constexpr int kMaxFamilyDegree = 1 << 16;
}  // namespace detail

// Poisson(lambda): G(s) = exp(lambda (s - 1)). With degree_cap < 0 the cap is
// the smallest D leaving tail mass below 1e-12.
inline Pgf poisson(double lambda, int degree_cap = -1) {
  require(lambda > 0 && std::isfinite(lambda), "poisson: lambda must be positive");
  auto pmf = [&](int k) { return std::exp(-lambda + k * std::log(lambda) - std::lgamma(k + 1.0)); };
  std::vector<double> p;
  auto tail_after = [&](int D) {
    // Forward sum of the remaining terms; no cancellation.
    double t = 0.0;
    for (int k = D + 1; k < D + 100000; ++k) {
      const double q = pmf(k);
      t += q;
      if (k > lambda && q < 1e-300 + 1e-18 * t) break;
    }
    return t;
  };
  int D = degree_cap;
  if (D < 0) {
    D = std::max(1, static_cast<int>(lambda));
    while (tail_after(D) >= detail::kFamilyTail) {
      ++D;
      require(D < detail::kMaxFamilyDegree, "poisson: lambda too large for an automatic degree cap");
    }
  }
  p.resize(D + 1);
  for (int k = 0; k <= D; ++k) p[k] = pmf(k);
  Pgf g;
  g.coefficients = std::move(p);
  g.tail_mass = tail_after(D);
  g.family = "poisson";
  g.params = {{"lambda", lambda}};
  g.validate();
  return g;
}

// Binomial(n, p): G(s) = (1 - p + p s)^n. Finite support, no tail.
inline Pgf binomial(int n, double p) {
  require(n >= 0, "binomial: n must be >= 0");
  require(p >= 0 && p <= 1, "binomial: p must lie in [0, 1]");
  std::vector<double> c(n + 1, 0.0);
  for (int k = 0; k <= n; ++k) {
    const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    const double a = (k == 0) ? 0.0 : k * std::log(p);
    const double b = (k == n) ? 0.0 : (n - k) * std::log1p(-p);
    c[k] = std::exp(lc + a + b);
  }
  Pgf g;
  g.coefficients = std::move(c);
  g.family = "binomial";
  g.params = {{"n", n}, {"p", p}};
  g.validate();
  return g;
}

// Geometric with pmf (1 - p) p^k, G(s) = (1 - p)/(1 - p s).
inline Pgf geometric(double p, int degree_cap = -1) {
  require(p >= 0 && p < 1, "geometric: p must lie in [0, 1)");
  int D = degree_cap;
  if (D < 0) {
    D = 0;
    if (p > 0) {
      D = static_cast<int>(std::ceil(std::log(detail::kFamilyTail) / std::log(p)));
      while (std::pow(p, D + 1) >= detail::kFamilyTail) ++D;
    }
    require(D < detail::kMaxFamilyDegree, "geometric: p too close to 1 for an automatic degree cap");
  }
  std::vector<double> c(D + 1);
  for (int k = 0; k <= D; ++k) c[k] = (1 - p) * std::pow(p, k);
  Pgf g;
  g.coefficients = std::move(c);
  g.tail_mass = (p == 0) ? 0.0 : std::pow(p, D + 1);
  g.family = "geometric";
  g.params = {{"p", p}};
  g.validate();
  return g;
}

// The Uniform(0, n) generating function exactly as tabulated,
// (1 - s^{n+1}) / (n (1 - s)) = (1/n) sum_{k=0}^{n} s^k. Its value at 1 is
// (n + 1)/n, so it is not a probability generating function.
struct UniformAsPrinted {
  int n = 0;
  std::vector<double> coefficients;  // each 1/n
  double value_at_one = 0.0;         // (n + 1)/n
  double normalization_defect = 0.0; // value_at_one - 1
  double operator()(double s) const {
    double v = 0.0;
    for (int k = n; k >= 0; --k) v = v * s + coefficients[k];
    return v;
  }
};

inline UniformAsPrinted uniform_as_printed(int n) {
  require(n >= 1, "uniform: n must be >= 1");
  UniformAsPrinted u;
  u.n = n;
  u.coefficients.assign(n + 1, 1.0 / n);
  u.value_at_one = double(n + 1) / n;
  u.normalization_defect = u.value_at_one - 1.0;
  return u;
}

// Refuses: the tabulated formula does not define a distribution, and picking a
// support ({0..n} with 1/(n+1), or {0..n-1} with 1/n) would be a guess.
inline Pgf uniform(int n) {
  const auto u = uniform_as_printed(n);
  throw ValidationError("uniform(0," + std::to_string(n) + "): the tabulated generating function has G(1) = " +
                        std::to_string(u.value_at_one) +
                        " != 1; use uniform_as_printed() for the raw formula or build the intended pmf explicitly");
}

// ---- Moments, extinction, phases ----------------------------------------

struct MeanMuStar {
  double mu = 0.0;
  // Kesten-Stigum moment sum_{k>=2} p_k k log k (= E[Y log Y]).
  double mu_star = 0.0;
  // The same sum restricted to k > 2, as the formula is printed in the text.
  double mu_star_k_gt_2 = 0.0;
  // Set when tail mass makes both numbers lower bounds.
  bool lower_bound = false;
};

inline MeanMuStar mean_and_mustar(const Pgf& g, double tail_tol = 1e-12) {
  MeanMuStar r;
  for (int k = 1; k <= g.degree_cap(); ++k) {
    r.mu += k * g.coefficients[k];
    if (k >= 2) r.mu_star += g.coefficients[k] * k * std::log(double(k));
    if (k > 2) r.mu_star_k_gt_2 += g.coefficients[k] * k * std::log(double(k));
  }
  r.lower_bound = g.tail_mass > tail_tol;
  return r;
}

inline double pgf_mean(const Pgf& g) { return mean_and_mustar(g).mu; }

// Smallest fixed point of G on [0, 1]. Iterates s <- G(s) from 0, which
// increases monotonically to the fixed point.
inline double extinction_probability(const Pgf& g, double tol = 1e-12, int max_iter = 100000) {
  require(!(g.degree_cap() >= 1 && std::abs(g.coefficients[1] - 1.0) <= 1e-15),
          "extinction_probability: p_1 = 1 makes every point a fixed point");
  if (pgf_mean(g) <= 1.0) return 1.0;
  double s = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const double next = pgf_eval(g, s);
    if (std::abs(next - s) <= tol) return next;
    s = next;
  }
  throw NumericalError("extinction_probability: no convergence after " + std::to_string(max_iter) +
                       " iterations (last iterate " + std::to_string(s) + ", mu = " + std::to_string(pgf_mean(g)) + ")");
}

enum class Phase { subcritical_or_critical, supercritical_ks, supercritical_heavy };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::subcritical_or_critical: return "subcritical-or-critical";
    case Phase::supercritical_ks: return "supercritical-KS";
    case Phase::supercritical_heavy: return "supercritical-heavy";
  }
  return "?";
}

struct PhaseReport {
  double mu = 0.0;
  double mu_star = 0.0;
  bool mu_star_infinite = false;  // never produced by a finite coefficient list
  bool mu_star_lower_bound = false;
  double xi = 1.0;
  Phase phase = Phase::subcritical_or_critical;
};

inline PhaseReport classify_phase(const Pgf& g) {
  const auto m = mean_and_mustar(g);
  PhaseReport r;
  r.mu = m.mu;
  r.mu_star = m.mu_star;
  r.mu_star_lower_bound = m.lower_bound;
  r.xi = extinction_probability(g);
  r.phase = r.mu <= 1.0 ? Phase::subcritical_or_critical : Phase::supercritical_ks;
  return r;
}

inline void to_json(nlohmann::json& j, const PhaseReport& r) {
  j = nlohmann::json{{"mu", r.mu},
                     {"mu_star", r.mu_star_infinite ? nlohmann::json("inf") : nlohmann::json(r.mu_star)},
                     {"mu_star_lower_bound", r.mu_star_lower_bound},
                     {"xi", r.xi},
                     {"phase", to_string(r.phase)}};
}

// Residual-network dual: (1 - r) G(s) + r s.
inline Pgf resnet_pgf(const Pgf& g, double r) {
  require(r >= 0.0 && r <= 1.0, "resnet_pgf: r must lie in [0, 1]");
  require(g.coefficients[0] <= 1e-12, "resnet_pgf: the underlying activation must be centered (p_0 = 0)");
  Pgf out = g;
  if (out.degree_cap() < 1) out.coefficients.resize(2, 0.0);
  for (double& p : out.coefficients) p *= (1.0 - r);
  out.coefficients[1] += r;
  out.tail_mass = g.tail_mass * (1.0 - r);
  out.family = "resnet";
  out.params = {{"r", r}, {"base_family", g.family}};
  out.validate();
  return out;
}

struct SymmetryCheck {
  bool symmetric = true;
  double max_violation = 0.0;
  double worst_s = 0.0;
};

inline std::vector<double> default_symmetry_grid(int points = 99) {
  std::vector<double> s(points);
  for (int i = 0; i < points; ++i) s[i] = -double(i + 1) / (points + 1);
  return s;
}

// Checks |G(s)| = G(|s|) on the grid.
inline SymmetryCheck check_pgf_symmetry(const Pgf& g, const std::vector<double>& grid = default_symmetry_grid(),
                                        double tol = 1e-10) {
  SymmetryCheck c;
  for (double s : grid) {
    const double v = std::abs(std::abs(pgf_eval(g, s)) - pgf_eval(g, std::abs(s)));
    if (v > c.max_violation) {
      c.max_violation = v;
      c.worst_s = s;
    }
  }
  c.symmetric = c.max_violation <= tol;
  return c;
}

// ---- Duality ---------------------------------------------------------------

// p_k = a_k^2 for a normalized activation.
inline Pgf pgf_from_activation(const ActivationSpec& spec) {
  spec.validate();
  const double norm = spec.squared_norm();
  require(std::abs(norm - 1.0) <= spec.tolerance,
          "pgf_from_activation: activation '" + spec.name + "' is not normalized (sum a_k^2 = " + std::to_string(norm) + ")");
  Pgf g;
  g.coefficients.resize(spec.coefficients.size());
  for (std::size_t k = 0; k < spec.coefficients.size(); ++k) g.coefficients[k] = spec.coefficients[k] * spec.coefficients[k];
  g.tail_mass = std::max(0.0, 1.0 - norm);
  g.family = "activation";
  g.params = {{"name", spec.name}, {"centered", spec.centered}};
  g.validate(std::max(1e-10, spec.tolerance));
  return g;
}

// a_k = +sqrt(p_k).
inline ActivationSpec activation_from_pgf(const Pgf& g, double tail_tol = 1e-10) {
  require(g.tail_mass <= tail_tol, "activation_from_pgf: tail mass " + std::to_string(g.tail_mass) +
                                       " exceeds tolerance; raise the degree cap");
  ActivationSpec s;
  s.name = g.family.empty() ? "pgf" : g.family;
  s.coefficients.resize(g.coefficients.size());
  for (std::size_t k = 0; k < g.coefficients.size(); ++k) s.coefficients[k] = std::sqrt(g.coefficients[k]);
  s.normalized = true;
  s.centered = g.coefficients[0] == 0.0;
  s.tolerance = std::max(1e-8, 2 * tail_tol);
  s.validate();
  return s;
}

}  // namespace compkern
