#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace compkern {

// n unit vectors in R^d with the pairwise inner products cached.
class SphereDataset {
 public:
  SphereDataset() = default;

  SphereDataset(Eigen::MatrixXd points, std::string source = "user", double norm_tol = 1e-8)
      : points_(std::move(points)), source_(std::move(source)) {
    require(points_.rows() >= 1 && points_.cols() >= 1, "SphereDataset: empty point set");
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
      const double nrm = points_.row(i).norm();
      require(std::isfinite(nrm) && std::abs(nrm - 1.0) <= norm_tol,
              fmt::format("SphereDataset: row {} has norm {:.17g}; rows must be unit vectors", i, nrm));
    }
    rebuild_cache();
  }

  Eigen::Index n() const { return points_.rows(); }
  Eigen::Index d() const { return points_.cols(); }
  const Eigen::MatrixXd& points() const { return points_; }
  const std::string& source() const { return source_; }
  double rho_max() const { return rho_max_; }

  // <x_i, x_j>; the diagonal is exactly 1.
  double correlation(Eigen::Index i, Eigen::Index j) const {
    if (i == j) return 1.0;
    if (i > j) std::swap(i, j);
    return corr_[packed_index(i, j)];
  }
  const std::vector<double>& packed_correlations() const { return corr_; }

  // Computes <x_i, x_j> the same way the cache does (used to test coherence).
  double recompute_correlation(Eigen::Index i, Eigen::Index j) const { return points_.row(i).dot(points_.row(j)); }

  // Packing provenance, when the dataset came from greedy_polarized_packing.
  std::optional<double> packing_radius;
  std::uint64_t packing_rejections = 0;

 private:
  std::size_t packed_index(Eigen::Index i, Eigen::Index j) const {
    // row-major strict upper triangle
    const auto N = static_cast<std::size_t>(n());
    const auto a = static_cast<std::size_t>(i), b = static_cast<std::size_t>(j);
    return a * (2 * N - a - 1) / 2 + (b - a - 1);
  }

  void rebuild_cache() {
    const Eigen::Index N = n();
    corr_.assign(static_cast<std::size_t>(N) * (N - 1) / 2, 0.0);
    rho_max_ = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index j = i + 1; j < N; ++j) {
        const double r = recompute_correlation(i, j);
        corr_[packed_index(i, j)] = r;
        rho_max_ = std::max(rho_max_, std::abs(r));
      }
    rho_max_ = std::min(rho_max_, 1.0);
  }

  Eigen::MatrixXd points_;
  std::string source_;
  std::vector<double> corr_;
  double rho_max_ = 0.0;
};

// Rows g / ||g|| with g standard Gaussian; row i uses substream i.
inline SphereDataset sample_uniform_sphere(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  require(n >= 1, "sample_uniform_sphere: n must be >= 1");
  require(d >= 2, "sample_uniform_sphere: d must be >= 2");
  Eigen::MatrixXd X(n, d);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    NormalSource normal(substream(seed, StreamTag::sphere_points, i));
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = normal();
    X.row(i).normalize();
  });
  return SphereDataset(std::move(X), "uniform");
}

// Correlation matrix of n i.i.d. uniform points on S^{d-1} (d >= n), sampled
// exactly without drawing the points. The Gram matrix of n Gaussian vectors in
// R^d is Wishart(d, I_n) = A A^T with A lower triangular, A_ii^2 ~ chi^2_{d-i}
// (0-based i) and A_ij ~ N(0, 1) below the diagonal (Bartlett). Normalizing
// the rows of A gives points in R^n with the same joint law of inner products.
inline Eigen::MatrixXd sample_uniform_correlations(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  require(n >= 1 && d >= n, "sample_uniform_correlations: requires 1 <= n <= d");
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    Philox4x32 eng = substream(seed, StreamTag::bartlett, i);
    std::normal_distribution<double> normal;
    std::chi_squared_distribution<double> chi2(static_cast<double>(d - static_cast<Eigen::Index>(i)));
    for (std::size_t j = 0; j < i; ++j) A(i, j) = normal(eng);
    A(i, i) = std::sqrt(chi2(eng));
    A.row(i).normalize();
  });
  Eigen::MatrixXd C(n, n);
  C.setZero();
  C.selfadjointView<Eigen::Lower>().rankUpdate(A);
  C = C.selfadjointView<Eigen::Lower>();
  C.diagonal().setOnes();
  return C;
}

inline double max_abs_offdiagonal(const Eigen::MatrixXd& C) {
  double m = 0.0;
  for (Eigen::Index j = 0; j < C.cols(); ++j)
    for (Eigen::Index i = j + 1; i < C.rows(); ++i) m = std::max(m, std::abs(C(i, j)));
  return m;
}

// Band [0.5, 3] * sqrt(log n / d) for the maximal correlation of i.i.d. data.
struct ConcentrationBand {
  double lower = 0.0, upper = 0.0;
  bool contains(double r) const { return r >= lower && r <= upper; }
};

inline ConcentrationBand concentration_band(double n, double d) {
  const double s = std::sqrt(std::log(n) / d);
  return {0.5 * s, 3.0 * s};
}

// Greedy r-polarized packing: accept a uniform candidate x when
// |<x, y>| < 1 - r^2/2 for every accepted y (equivalently ||x - y|| > r and
// ||x + y|| > r); stop after max_rejections consecutive rejections.
inline SphereDataset greedy_polarized_packing(Eigen::Index d, double r, std::uint64_t seed,
                                              std::uint64_t max_rejections = 100000, Eigen::Index max_points = 1 << 20) {
  require(d >= 2, "greedy_polarized_packing: d must be >= 2");
  require(r > 0.0 && r <= 2.0, "greedy_polarized_packing: r must lie in (0, 2]");
  const double thresh = 1.0 - 0.5 * r * r;
  NormalSource normal(substream(seed, StreamTag::sphere_packing, 0));
  std::vector<Eigen::VectorXd> pts;
  Eigen::VectorXd x(d);
  std::uint64_t streak = 0;
  while (streak < max_rejections && static_cast<Eigen::Index>(pts.size()) < max_points) {
    for (Eigen::Index j = 0; j < d; ++j) x(j) = normal();
    x.normalize();
    bool ok = true;
    for (const auto& y : pts)
      if (!(std::abs(x.dot(y)) < thresh)) {
        ok = false;
        break;
      }
    if (ok) {
      pts.push_back(x);
      streak = 0;
    } else {
      ++streak;
    }
  }
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pts.size()), d);
  for (std::size_t i = 0; i < pts.size(); ++i) X.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  SphereDataset ds(std::move(X), "packing");
  ds.packing_radius = r;
  ds.packing_rejections = streak;
  return ds;
}

// Smallest polarized distance min_{i<j} min(||x_i - x_j||, ||x_i + x_j||).
inline double min_polarized_distance(const SphereDataset& ds) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    for (Eigen::Index j = i + 1; j < ds.n(); ++j) {
      const auto& P = ds.points();
      m = std::min({m, (P.row(i) - P.row(j)).norm(), (P.row(i) + P.row(j)).norm()});
    }
  return m;
}

struct PackingBandCheck {
  double lower = 0.0, upper = 0.0, observed = 0.0;
  bool lower_ok = false, upper_ok = false;
  // The lower side presumes a maximal packing; greedy output is maximal only
  // with high probability, evidenced by the rejection streak.
  std::uint64_t rejection_streak = 0;
};

inline PackingBandCheck packing_band_check(double n, double d, double observed) {
  PackingBandCheck b;
  b.lower = 1.0 - 18.2 * std::exp(-2.0 * std::log(n) / d);
  b.upper = 1.0 - 0.06 * std::exp(-2.0 * std::log(n) / (d - 1.0));
  b.observed = observed;
  b.lower_ok = observed > b.lower;
  b.upper_ok = observed < b.upper;
  return b;
}

struct CorrelationStats {
  Eigen::Index n = 0, d = 0;
  double rho_max = 0.0, mean = 0.0, sd = 0.0;
  std::vector<double> bin_edges;
  std::vector<std::uint64_t> histogram;
  std::optional<PackingBandCheck> packing_band;
};

inline CorrelationStats correlation_stats(const SphereDataset& ds, int bins = 20) {
  require(bins >= 1, "correlation_stats: bins must be >= 1");
  CorrelationStats s;
  s.n = ds.n();
  s.d = ds.d();
  s.rho_max = ds.rho_max();
  const auto& c = ds.packed_correlations();
  s.histogram.assign(bins, 0);
  for (int b = 0; b <= bins; ++b) s.bin_edges.push_back(-1.0 + 2.0 * b / bins);
  for (double r : c) {
    s.mean += r;
    int b = static_cast<int>((r + 1.0) * 0.5 * bins);
    s.histogram[std::clamp(b, 0, bins - 1)]++;
  }
  if (!c.empty()) {
    s.mean /= static_cast<double>(c.size());
    for (double r : c) s.sd += (r - s.mean) * (r - s.mean);
    s.sd = c.size() > 1 ? std::sqrt(s.sd / static_cast<double>(c.size() - 1)) : 0.0;
  }
  if (ds.packing_radius && ds.n() >= 2) {
    auto b = packing_band_check(static_cast<double>(ds.n()), static_cast<double>(ds.d()), ds.rho_max());
    b.rejection_streak = ds.packing_rejections;
    s.packing_band = b;
  }
  return s;
}

inline void to_json(nlohmann::json& j, const CorrelationStats& s) {
  j = nlohmann::json{{"n", s.n}, {"d", s.d}, {"rho_max", s.rho_max}, {"mean", s.mean}, {"sd", s.sd},
                     {"bin_edges", s.bin_edges}, {"histogram", s.histogram}};
  if (s.packing_band) {
    const auto& b = *s.packing_band;
    j["packing_band"] = {{"lower", b.lower},
                         {"upper", b.upper},
                         {"observed", b.observed},
                         {"lower_ok", b.lower_ok},
                         {"upper_ok", b.upper_ok},
                         {"lower_conditional_on_maximality", true},
                         {"rejection_streak", b.rejection_streak}};
  }
}

// ---- Dataset files: CSV rows, or binary float64 with a (n, d) header ------

inline void save_dataset_csv(const SphereDataset& ds, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), "cannot open '" + path + "' for writing");
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.d(); ++j) os << (j ? "," : "") << fmt::format("{:.17g}", ds.points()(i, j));
    os << '\n';
  }
}

inline void save_dataset_binary(const SphereDataset& ds, const std::string& path) {
  write_binary_matrix(path, ds.points(), true);
}

inline SphereDataset load_dataset_csv(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw ValidationError("'" + path + "': cannot parse '" + cell + "' as a number");
      }
      row.push_back(v);
    }
    require(rows.empty() || row.size() == rows[0].size(), "'" + path + "': ragged rows");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "'" + path + "': no data");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) X(i, j) = rows[i][j];
  return SphereDataset(std::move(X), path);
}

inline SphereDataset load_dataset(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") return load_dataset_csv(path);
  return SphereDataset(read_binary_matrix(path, true), path);
}

}  // namespace compkern
