#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "branching.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "pgf.hpp"
#include "sphere.hpp"

namespace compkern {

struct CompositionalKernel {
  Pgf base;
  int depth = 0;
};

inline constexpr double kSnapTol = 1e-12;

// Dot products of unit vectors can overshoot +-1 by a few ulps.
inline double snap_correlation(double rho) {
  if (std::abs(rho - 1.0) <= kSnapTol) return 1.0;
  if (std::abs(rho + 1.0) <= kSnapTol) return -1.0;
  require(std::abs(rho) <= 1.0, fmt::format("correlation {:.17g} outside [-1, 1]", rho));
  return rho;
}

// K^{(L)}(rho) = G o ... o G (rho), L Horner passes.
inline double kernel_eval(const CompositionalKernel& k, double rho) {
  require(k.depth >= 0, "kernel_eval: depth must be >= 0");
  double v = snap_correlation(rho);
  for (int l = 0; l < k.depth; ++l) v = pgf_eval(k.base, v);
  return v;
}

// 1 - K^{(L)}(1 - u), iterated in the complementary variable so that values
// of rho near 1 keep full relative precision in 1 - rho.
inline double kernel_eval_complement(const CompositionalKernel& k, double u) {
  require(k.depth >= 0, "kernel_eval_complement: depth must be >= 0");
  double v = u;
  for (int l = 0; l < k.depth; ++l) v = pgf_eval_complement(k.base, v);
  return v;
}

struct McValue {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t truncated = 0;
};

// E[rho^{Z_L}] by simulation. Trajectories that outgrow the population cap
// contribute rho^{Z} with Z above the cap, i.e. 0 unless |rho| = 1.
inline McValue kernel_eval_via_branching(const CompositionalKernel& k, double rho, std::uint64_t trials,
                                         std::uint64_t seed, std::uint64_t cap = kDefaultPopulationCap) {
  rho = snap_correlation(rho);
  const auto trajs = simulate_generation_sizes(k.base, k.depth, trials, seed, cap);
  McValue r;
  r.trials = trials;
  double s = 0, s2 = 0;
  for (const auto& t : trajs) {
    double v;
    if (t.truncated) {
      ++r.truncated;
      v = (std::abs(rho) == 1.0) ? std::pow(rho, static_cast<double>(t.final_size())) : 0.0;
    } else {
      v = std::pow(rho, static_cast<double>(t.final_size()));
    }
    s += v;
    s2 += v * v;
  }
  const double n = static_cast<double>(trials);
  r.estimate = s / n;
  const double var = trials > 1 ? std::max(0.0, (s2 - n * r.estimate * r.estimate) / (n - 1)) : 0.0;
  r.stderr_ = std::sqrt(var / n);
  return r;
}

// ---- Limit curves ----------------------------------------------------------

struct CurveRow {
  int depth = 0;
  double x = 0.0;  // rho for unscaled curves, t for rescaled ones
  double value = 0.0;
  std::optional<double> prediction;
};

// Which sufficient condition (if any) lets the unscaled limit extend to
// negative correlations.
inline std::string negative_extension_condition(const Pgf& g, int grid = 1000) {
  if (g.coefficients[0] == 0.0) return "centered";
  bool nonneg = true;
  for (int i = 1; i < grid; ++i)
    if (pgf_eval(g, -double(i) / grid) < 0.0) {
      nonneg = false;
      break;
    }
  if (nonneg) return "nonnegative";
  // No fixed point of G in [-1, 0): G(s) - s keeps one sign there.
  bool fixed = false;
  double prev = pgf_eval(g, -1.0) + 1.0;
  if (prev == 0.0) fixed = true;
  for (int i = 1; i < grid && !fixed; ++i) {
    const double s = -1.0 + double(i) / grid;
    const double cur = pgf_eval(g, s) - s;
    if (cur == 0.0 || (cur > 0) != (prev > 0)) fixed = true;
    prev = cur;
  }
  return fixed ? "none" : "two-fixed-points";
}

struct UnscaledCurve {
  double mu = 0.0, xi = 1.0;
  std::string negative_condition;
  std::vector<CurveRow> rows;
  std::vector<CurveRow> limit;  // predicted limit (depth = -1)

  void write_csv(std::ostream& os) const {
    os << "L,rho,value,prediction\n";
    auto emit = [&](const CurveRow& r) {
      os << fmt::format("{},{:.17g},{:.17g},{}\n", r.depth, r.x, r.value,
                        r.prediction ? fmt::format("{:.17g}", *r.prediction) : std::string{});
    };
    for (const auto& r : rows) emit(r);
    for (const auto& r : limit) emit(r);
  }
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

inline UnscaledCurve unscaled_limit_curve(const Pgf& base, const std::vector<int>& depths,
                                          const std::vector<double>& rho_grid) {
  UnscaledCurve c;
  const bool degenerate = base.degree_cap() >= 1 && std::abs(base.coefficients[1] - 1.0) <= 1e-15;
  c.mu = pgf_mean(base);
  c.xi = degenerate ? 1.0 : extinction_probability(base);
  c.negative_condition = negative_extension_condition(base);
  for (int L : depths)
    for (double rho : rho_grid) c.rows.push_back({L, rho, kernel_eval({base, L}, rho), std::nullopt});
  for (double rho : rho_grid) {
    CurveRow r{-1, rho, std::nan(""), std::nullopt};
    r.value = std::nan("");
    std::optional<double> pred;
    if (degenerate) pred = rho;  // identity kernel
    else if (rho == 1.0) pred = 1.0;
    else if (rho >= 0.0 || c.negative_condition != "none") pred = c.mu <= 1.0 ? 1.0 : c.xi;
    r.prediction = pred;
    c.limit.push_back(r);
  }
  return c;
}

struct RescaledCurve {
  double mu = 0.0, xi = 1.0;
  std::vector<CurveRow> rows;

  void write_csv(std::ostream& os) const {
    os << "L,t,value,prediction\n";
    for (const auto& r : rows)
      os << fmt::format("{},{:.17g},{:.17g},{}\n", r.depth, r.x, r.value,
                        r.prediction ? fmt::format("{:.17g}", *r.prediction) : std::string{});
  }
};

// K^{(L)}(exp(-t / mu^L)) for mu > 1, K^{(L)}(exp(-t)) otherwise. When a
// Kesten-Stigum estimate is supplied (mu > 1) each row also carries
// xi + (1 - xi) E[exp(-t W)].
inline RescaledCurve rescaled_limit_curve(const Pgf& base, const std::vector<double>& t_grid,
                                          const std::vector<int>& depths, const WEstimate* w = nullptr) {
  RescaledCurve c;
  c.mu = pgf_mean(base);
  const bool degenerate = base.degree_cap() >= 1 && std::abs(base.coefficients[1] - 1.0) <= 1e-15;
  c.xi = degenerate ? 1.0 : extinction_probability(base);
  for (int L : depths) {
    const double scale = c.mu > 1.0 ? std::pow(c.mu, -L) : 1.0;
    for (double t : t_grid) {
      require(t >= 0.0, "rescaled_limit_curve: t must be non-negative");
      const double u0 = -std::expm1(-t * scale);
      const double value = 1.0 - kernel_eval_complement({base, L}, u0);
      std::optional<double> pred;
      if (w && c.mu > 1.0) {
        for (const auto& p : w->laplace)
          if (p.t == t) pred = c.xi + (1.0 - c.xi) * p.estimate;
      }
      c.rows.push_back({L, t, value, pred});
    }
  }
  return c;
}

// ---- Kernel matrices --------------------------------------------------------

class KernelMatrix {
 public:
  KernelMatrix(Eigen::MatrixXd entries, std::string source, int depth)
      : entries_(std::move(entries)), source_(std::move(source)), depth_(depth) {}

  const Eigen::MatrixXd& entries() const { return entries_; }
  const std::string& source() const { return source_; }
  int depth() const { return depth_; }
  Eigen::Index n() const { return entries_.rows(); }

  // Ascending; computed once.
  const Eigen::VectorXd& eigenvalues(Eigen::Index limit = kDenseEigenLimit) const {
    if (!eigen_) eigen_ = symmetric_eigenvalues(entries_, limit);
    return *eigen_;
  }

  void write_csv(std::ostream& os) const {
    for (Eigen::Index i = 0; i < n(); ++i) {
      for (Eigen::Index j = 0; j < n(); ++j) os << (j ? "," : "") << fmt::format("{:.17g}", entries_(i, j));
      os << '\n';
    }
  }
  // uint64 n, then n*n float64 row-major little-endian.
  void write_binary(const std::string& path) const { write_binary_matrix(path, entries_, false); }

 private:
  Eigen::MatrixXd entries_;
  std::string source_;
  int depth_;
  mutable std::optional<Eigen::VectorXd> eigen_;
};

inline KernelMatrix build_kernel_matrix(const Pgf& base, const SphereDataset& ds, int L) {
  const CompositionalKernel k{base, L};
  const Eigen::Index n = ds.n();
  Eigen::MatrixXd K(n, n);
  const double diag = kernel_eval(k, 1.0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t ii) {
    const auto i = static_cast<Eigen::Index>(ii);
    K(i, i) = diag;
    for (Eigen::Index j = i + 1; j < n; ++j) K(i, j) = kernel_eval(k, ds.correlation(i, j));
  });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) K(j, i) = K(i, j);
  return KernelMatrix(std::move(K), ds.source(), L);
}

// Same, from a precomputed correlation matrix.
inline KernelMatrix build_kernel_matrix(const Pgf& base, const Eigen::MatrixXd& correlations, int L,
                                        std::string source = "correlations") {
  const CompositionalKernel k{base, L};
  const Eigen::Index n = correlations.rows();
  Eigen::MatrixXd K(n, n);
  const double diag = kernel_eval(k, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    K(i, i) = diag;
    for (Eigen::Index j = i + 1; j < n; ++j) K(j, i) = K(i, j) = kernel_eval(k, correlations(i, j));
  }
  return KernelMatrix(std::move(K), std::move(source), L);
}

}  // namespace compkern
