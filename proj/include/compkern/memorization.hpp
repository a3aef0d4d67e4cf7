#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "pgf.hpp"
#include "sphere.hpp"

namespace compkern {

inline constexpr int kDefaultMaxDepth = 100000;

namespace detail {
inline void require_descent_pgf(const Pgf& g, const char* who) {
  require(g.coefficients[0] <= 1e-12, std::string(who) + ": requires a centered dual (p_0 = 0)");
}
}  // namespace detail

// min{L >= 0 : G^{(L)}(beta) <= alpha}.
inline int path_depth_exact(const Pgf& g, double beta, double alpha, int max_L = kDefaultMaxDepth) {
  detail::require_descent_pgf(g, "path_depth_exact");
  require(alpha > 0 && alpha <= beta && beta < 1, "path_depth_exact: requires 0 < alpha <= beta < 1");
  double v = beta;
  int L = 0;
  while (v > alpha) {
    if (L >= max_L)
      throw NumericalError(fmt::format("path_depth_exact: {:.17g} not reached from {:.17g} within {} compositions "
                                       "(last value {:.17g})",
                                       alpha, beta, max_L, v));
    v = pgf_eval(g, v);
    ++L;
  }
  return L;
}

struct PathBounds {
  double lower = 0.0, upper = 0.0;
  double lower_ratio_term = 0.0, lower_complement_term = 0.0;  // the two entries of the max
  double upper_ratio_term = 0.0, upper_complement_term = 0.0;  // the two entries of the min (before +1)
};

// H_upp = min{log(b/a)/log(b/G(b)), log((1-a)/(1-b))/log((1-G(a))/(1-a))} + 1
// H_low = max{log(b/a)/log(a/G(a)), log((1-a)/(1-b))/log((1-G(b))/(1-b))}
inline PathBounds path_depth_bounds(const Pgf& g, double beta, double alpha) {
  detail::require_descent_pgf(g, "path_depth_bounds");
  require(alpha > 0 && alpha <= beta && beta < 1, "path_depth_bounds: requires 0 < alpha <= beta < 1");
  const double Ga = pgf_eval(g, alpha), Gb = pgf_eval(g, beta);
  // Complements via the cancellation-free form.
  const double cGa = pgf_eval_complement(g, 1.0 - alpha), cGb = pgf_eval_complement(g, 1.0 - beta);
  const double d_ratio_b = std::log(beta / Gb), d_ratio_a = std::log(alpha / Ga);
  const double d_comp_a = std::log(cGa / (1.0 - alpha)), d_comp_b = std::log(cGb / (1.0 - beta));
  if (!(Ga < alpha && Gb < beta) || !(d_ratio_a > 0 && d_ratio_b > 0 && d_comp_a > 0 && d_comp_b > 0))
    throw ValidationError(fmt::format(
        "path_depth_bounds: no strict descent (G({:.6g}) = {:.6g}, G({:.6g}) = {:.6g}); bounds inapplicable", alpha, Ga,
        beta, Gb));
  const double num_ratio = std::log(beta / alpha);
  const double num_comp = std::log((1.0 - alpha) / (1.0 - beta));
  PathBounds b;
  b.upper_ratio_term = num_ratio / d_ratio_b;
  b.upper_complement_term = num_comp / d_comp_a;
  b.lower_ratio_term = num_ratio / d_ratio_a;
  b.lower_complement_term = num_comp / d_comp_b;
  b.upper = std::min(b.upper_ratio_term, b.upper_complement_term) + 1.0;
  b.lower = std::max(b.lower_ratio_term, b.lower_complement_term);
  return b;
}

struct ChainBounds {
  double lower = 0.0, upper = std::numeric_limits<double>::infinity();
  double lower_at = 0.0, upper_at = 0.0;  // maximizing / minimizing split points
};

inline std::vector<double> default_split_grid(double alpha, double beta, int points = 33) {
  std::vector<double> s;
  for (int i = 1; i <= points; ++i) s.push_back(alpha + (beta - alpha) * i / (points + 1));
  return s;
}

// max_s{H_low(a,s) + H_low(s,b)} - 1 <= L <= min_s{H_upp(a,s) + H_upp(s,b)}.
inline ChainBounds chain_bounds(const Pgf& g, double beta, double alpha, const std::vector<double>& splits) {
  ChainBounds c;
  c.lower = -std::numeric_limits<double>::infinity();
  for (double s : splits) {
    if (!(s >= alpha && s <= beta)) continue;
    const auto lo = path_depth_bounds(g, s, alpha);
    const auto hi = path_depth_bounds(g, beta, s);
    const double l = lo.lower + hi.lower - 1.0;
    const double u = lo.upper + hi.upper;
    if (l > c.lower) {
      c.lower = l;
      c.lower_at = s;
    }
    if (u < c.upper) {
      c.upper = u;
      c.upper_at = s;
    }
  }
  if (!std::isfinite(c.lower)) c.lower = 0.0;
  return c;
}

// ---- Regime closed forms -----------------------------------------------------

// c = min{0.1, (a1 - a1^2)/2}; the small regime needs sqrt(log n / d) < c.
inline double small_regime_constant(double a1_sq) {
  const double a1 = std::sqrt(a1_sq);
  return std::min(0.1, 0.5 * (a1 - a1_sq));
}

// s* = inf{s : (1 - G(s))/(1 - s) >= (1 + mu)/2}, by bisection to 1e-10.
inline double s_star(const Pgf& g, double tol = 1e-10) {
  const double mu = pgf_mean(g);
  require(mu > 1.0, "s_star: requires mu > 1");
  const double target = 0.5 * (1.0 + mu);
  auto ratio = [&](double s) { return pgf_eval_complement(g, 1.0 - s) / (1.0 - s); };
  double lo = 0.0, hi = 1.0;
  if (ratio(lo) >= target) return 0.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (ratio(mid) >= target ? hi : lo) = mid;
  }
  return hi;
}

// C = max{1.5 log 40, log((1 - s*)/0.06)}; the large regime needs log n / d > C.
inline double large_regime_constant(double sstar) { return std::max(1.5 * std::log(40.0), std::log((1.0 - sstar) / 0.06)); }

struct ClosedForm {
  double lower = 0.0, upper = 0.0;
};

inline ClosedForm closeness_small_regime(double a1_sq, double n, double d, double eps) {
  const double q = std::log(std::log(n) / d), den = std::log(1.0 / a1_sq);
  return {(0.5 * q + std::log(0.5 / eps)) / den, (q + 2.0 * std::log(3.0 / eps)) / den + 1.0};
}

inline ClosedForm memorization_small_regime(double a1_sq, double n, double d, double kappa) {
  const double q = std::log(std::log(n) / d), den = std::log(1.0 / a1_sq);
  return {(0.5 * q + std::log(0.5 / kappa)) / den, (q + 2.0 * std::log(3.0 * n / kappa)) / den + 1.0};
}

// Optimized over split points s in (eps, rho).
inline ClosedForm closeness_large_regime(const Pgf& g, double n, double d, double eps, double rho, int grid = 400) {
  const double mu = pgf_mean(g), a1_sq = g.coefficient(1);
  ClosedForm r{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (int i = 1; i < grid; ++i) {
    const double s = eps + (rho - eps) * i / grid;
    const double head = std::log(1.0 / eps) + std::log(s);
    const double lo = head / std::log(1.0 / a1_sq) + (2.0 * std::log(n) / d + std::log((1.0 - s) / 18.2)) / std::log(mu);
    const double den_r = std::log(s / pgf_eval(g, s));
    const double den_c = std::log(pgf_eval_complement(g, 1.0 - s) / (1.0 - s));
    if (den_r > 0 && den_c > 0) {
      const double hi = head / den_r + (2.0 * std::log(n) / (d - 1.0) + std::log((1.0 - s) / 0.06)) / den_c;
      r.upper = std::min(r.upper, hi);
    }
    r.lower = std::max(r.lower, lo);
  }
  r.lower -= 1.0;
  r.upper += 2.0;
  return r;
}

inline ClosedForm memorization_large_regime(const Pgf& g, double n, double d, double kappa, double sstar) {
  const double mu = pgf_mean(g), a1_sq = g.coefficient(1);
  const double lower = 1.5 * (std::log(n) / d) / std::log(mu) + std::log(0.5 / kappa) / std::log(1.0 / a1_sq) - 1.0;
  const double upper = 3.0 * (std::log(n) / (d - 1.0)) / std::log(0.5 * (mu + 1.0)) +
                       std::log(sstar * n / kappa) / std::log(sstar / pgf_eval(g, sstar)) + 2.0;
  return {lower, upper};
}

// ---- Reports ---------------------------------------------------------------

struct BoundItem {
  std::string name;
  double value = 0.0;
};

struct DepthReport {
  std::string kind;  // "epsilon-closeness" or "kappa-memorization"
  std::optional<int> exact;
  bool exact_claimed = true;  // false when signed correlations break the symmetry reduction
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  std::string regime = "none";
  nlohmann::json inputs = nlohmann::json::object();
  std::vector<BoundItem> items;
  std::vector<std::string> warnings;

  void add(std::string name, double v) { items.push_back({std::move(name), v}); }
};

inline nlohmann::json json_number(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

inline void to_json(nlohmann::json& j, const DepthReport& r) {
  nlohmann::json items = nlohmann::json::object();
  for (const auto& it : r.items) items[it.name] = json_number(it.value);
  j = nlohmann::json{{"kind", r.kind},
                     {"exact", r.exact ? nlohmann::json(*r.exact) : nlohmann::json("not-computed")},
                     {"exact_claimed", r.exact_claimed},
                     {"lower", json_number(r.lower)},
                     {"upper", json_number(r.upper)},
                     {"regime", r.regime},
                     {"inputs", r.inputs},
                     {"items", items},
                     {"warnings", r.warnings}};
}

struct RegimeInfo {
  double n = 0, d = 0;
};

namespace detail {
inline void add_regime_items(DepthReport& r, const Pgf& g, const RegimeInfo& nd, double target, double rho,
                             bool memorization) {
  const double n = nd.n, d = nd.d;
  const double a1_sq = g.coefficient(1);
  const double mu = pgf_mean(g);
  const double ratio = std::log(n) / d;
  const double c = small_regime_constant(a1_sq);
  r.add("log_n_over_d", ratio);
  r.add("small_regime_c", c);
  if (a1_sq > 0 && a1_sq < 1) {
    const auto cf = memorization ? memorization_small_regime(a1_sq, n, d, target) : closeness_small_regime(a1_sq, n, d, target);
    r.add("small_correlation_lower", cf.lower);
    r.add("small_correlation_upper", cf.upper);
  }
  std::optional<double> C;
  if (mu > 1.0 && a1_sq > 0) {
    const double ss = s_star(g);
    C = large_regime_constant(ss);
    r.add("s_star", ss);
    r.add("large_regime_C", *C);
    if (memorization) {
      const auto cf = memorization_large_regime(g, n, d, target, ss);
      r.add("large_correlation_lower", cf.lower);
      r.add("large_correlation_upper", cf.upper);
      if (target >= n * ss) r.warnings.push_back("kappa >= n * s_star: the large-correlation statement assumes kappa < min(rho, n s_star)");
    } else if (target < rho) {
      const auto cf = closeness_large_regime(g, n, d, target, rho);
      r.add("large_correlation_lower", cf.lower);
      r.add("large_correlation_upper", cf.upper);
    }
  }
  if (std::sqrt(ratio) < c) r.regime = "small-correlation";
  else if (C && ratio > *C) r.regime = "large-correlation";
}
}  // namespace detail

// Depth for all off-diagonal kernel entries to fall to eps: L_{rho -> eps}.
inline DepthReport epsilon_closeness_depth(const Pgf& g, double rho, double eps,
                                           std::optional<RegimeInfo> nd = std::nullopt) {
  require(eps > 0 && eps <= rho && rho < 1, "epsilon_closeness_depth: requires 0 < eps <= rho < 1");
  DepthReport r;
  r.kind = "epsilon-closeness";
  r.inputs = {{"rho", rho}, {"epsilon", eps}};
  if (nd) {
    r.inputs["n"] = nd->n;
    r.inputs["d"] = nd->d;
  }
  r.exact = path_depth_exact(g, rho, eps);
  r.lower = 0.0;
  try {
    const auto b = path_depth_bounds(g, rho, eps);
    const auto c = chain_bounds(g, rho, eps, default_split_grid(eps, rho));
    r.add("path_lower", b.lower);
    r.add("path_upper", b.upper);
    r.add("chain_lower", c.lower);
    r.add("chain_upper", c.upper);
    r.lower = std::max({0.0, b.lower, c.lower});
    r.upper = std::min(b.upper, c.upper);
  } catch (const ValidationError& e) {
    r.warnings.push_back(e.what());
  }
  if (nd) detail::add_regime_items(r, g, *nd, eps, rho, false);
  return r;
}

inline bool has_negative_correlation(const SphereDataset& ds) {
  for (double c : ds.packed_correlations())
    if (c < 0) return true;
  return false;
}

inline DepthReport epsilon_closeness_depth(const Pgf& g, const SphereDataset& ds, double eps) {
  auto r = epsilon_closeness_depth(g, ds.rho_max(), eps,
                                   RegimeInfo{static_cast<double>(ds.n()), static_cast<double>(ds.d())});
  if (has_negative_correlation(ds)) {
    const auto sym = check_pgf_symmetry(g);
    if (!sym.symmetric) {
      r.exact_claimed = false;
      r.warnings.push_back(fmt::format(
          "symmetry |G(s)| = G(|s|) fails (max violation {:.3g}); depth computed from |rho_ij| is not claimed exact",
          sym.max_violation));
    }
  }
  return r;
}

struct MemorizationCheck {
  bool ok = false;
  double lambda_min = 0.0, lambda_max = 0.0;
  double deviation = 0.0;          // max_i |lambda_i - 1|
  double condition_surrogate = 0.0;  // (1 + dev)/(1 - dev), inf when dev >= 1
  double condition_number = 0.0;     // lambda_max / lambda_min, inf when lambda_min <= 0
};

inline MemorizationCheck check_kappa_memorization(const KernelMatrix& K, double kappa,
                                                  Eigen::Index limit = kDenseEigenLimit) {
  require(kappa > 0, "check_kappa_memorization: kappa must be positive");
  const auto& ev = K.eigenvalues(limit);
  MemorizationCheck c;
  c.lambda_min = ev(0);
  c.lambda_max = ev(ev.size() - 1);
  c.deviation = std::max(std::abs(c.lambda_min - 1.0), std::abs(c.lambda_max - 1.0));
  c.ok = c.lambda_min >= 1.0 - kappa && c.lambda_max <= 1.0 + kappa;
  const double inf = std::numeric_limits<double>::infinity();
  c.condition_surrogate = c.deviation < 1.0 ? (1.0 + c.deviation) / (1.0 - c.deviation) : inf;
  c.condition_number = c.lambda_min > 0 ? c.lambda_max / c.lambda_min : inf;
  return c;
}

// L_{rho -> kappa} <= L_kappa <= L_{rho -> kappa/n}, plus the regime closed forms.
inline DepthReport memorization_depth_bounds(const Pgf& g, double rho, double kappa, double n,
                                             std::optional<double> d = std::nullopt) {
  require(kappa > 0 && kappa < rho && rho < 1, "memorization_depth_bounds: requires 0 < kappa < rho < 1");
  require(n >= 2, "memorization_depth_bounds: n must be >= 2");
  DepthReport r;
  r.kind = "kappa-memorization";
  r.inputs = {{"rho", rho}, {"kappa", kappa}, {"n", n}};
  if (d) r.inputs["d"] = *d;
  const int lo = path_depth_exact(g, rho, kappa);
  const int hi = path_depth_exact(g, rho, kappa / n);
  r.lower = lo;
  r.upper = hi;
  r.add("closeness_depth_kappa", lo);
  r.add("closeness_depth_kappa_over_n", hi);
  if (d) detail::add_regime_items(r, g, RegimeInfo{n, *d}, kappa, rho, true);
  return r;
}

// Adds the exact L_kappa by dense eigensolves over the sandwich interval.
inline DepthReport memorization_depth(const Pgf& g, const SphereDataset& ds, double kappa,
                                      Eigen::Index limit = kDenseEigenLimit) {
  if (ds.n() < 2 || ds.rho_max() == 0.0) {
    DepthReport r;
    r.kind = "kappa-memorization";
    r.inputs = {{"rho", ds.rho_max()}, {"kappa", kappa}, {"n", ds.n()}, {"d", ds.d()}};
    r.exact = 0;
    r.lower = r.upper = 0;
    return r;
  }
  require(kappa > 0, "memorization_depth: kappa must be positive");
  if (kappa >= ds.rho_max()) {
    // Already close enough that the sandwich is vacuous; search from 0.
    DepthReport r;
    r.kind = "kappa-memorization";
    r.inputs = {{"rho", ds.rho_max()}, {"kappa", kappa}, {"n", ds.n()}, {"d", ds.d()}};
    r.warnings.push_back("kappa >= rho: outside (0, rho), only the exact search is reported");
    r.lower = 0;
    r.upper = path_depth_exact(g, ds.rho_max(), std::min(kappa, ds.rho_max()) / ds.n());
    for (int L = 0; L <= r.upper; ++L)
      if (check_kappa_memorization(build_kernel_matrix(g, ds, L), kappa, limit).ok) {
        r.exact = L;
        break;
      }
    return r;
  }
  auto r = memorization_depth_bounds(g, ds.rho_max(), kappa, static_cast<double>(ds.n()), static_cast<double>(ds.d()));
  // Without the symmetry reduction signed entries may shrink faster than
  // G^{(L)}(rho), so the lower end of the sandwich is not safe to start from.
  const bool asymmetric = has_negative_correlation(ds) && !check_pgf_symmetry(g).symmetric;
  if (asymmetric) r.warnings.push_back("symmetry |G(s)| = G(|s|) fails; the lower sandwich end uses |rho_ij| only");
  for (int L = asymmetric ? 0 : static_cast<int>(r.lower); L <= static_cast<int>(r.upper); ++L)
    if (check_kappa_memorization(build_kernel_matrix(g, ds, L), kappa, limit).ok) {
      r.exact = L;
      break;
    }
  return r;
}

}  // namespace compkern
