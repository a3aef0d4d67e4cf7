#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "branching.hpp"
#include "errors.hpp"
#include "hermite.hpp"
#include "kernel.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "pgf.hpp"
#include "rng.hpp"
#include "spectral.hpp"
#include "sphere.hpp"

namespace compkern {

struct FeatureMatrix {
  Eigen::MatrixXd phi;  // n x m
  std::string generator;  // legendre-sphere, hermite-gaussian, hermite-truncated-noised
  std::uint64_t seed = 0;
  int truncation = -1;

  Eigen::Index m() const { return phi.cols(); }

  // (1/m) Phi Phi^T.
  Eigen::MatrixXd gram() const {
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(phi.rows(), phi.rows());
    G.selfadjointView<Eigen::Lower>().rankUpdate(phi, 1.0 / static_cast<double>(m()));
    return G.selfadjointView<Eigen::Lower>();
  }

  // Per-entry standard error of the Gram estimate: sd_j(Phi_ij Phi_lj)/sqrt(m).
  Eigen::MatrixXd gram_stderr() const {
    const Eigen::Index n = phi.rows();
    const double M = static_cast<double>(m());
    Eigen::MatrixXd se(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index l = i; l < n; ++l) {
        const Eigen::ArrayXd prod = phi.row(i).array() * phi.row(l).array();
        const double mean = prod.mean();
        const double var = (prod - mean).square().sum() / std::max(1.0, M - 1.0);
        se(i, l) = se(l, i) = std::sqrt(var / M);
      }
    return se;
  }

  void write_binary(const std::string& path) const { write_binary_matrix(path, phi, true); }
  void write_csv(std::ostream& os) const {
    for (Eigen::Index i = 0; i < phi.rows(); ++i) {
      for (Eigen::Index j = 0; j < phi.cols(); ++j) os << (j ? "," : "") << fmt::format("{:.17g}", phi(i, j));
      os << '\n';
    }
  }
};

// Sphere features: Phi[i, j] = sigma_f(<x_i, theta_j / ||theta_j||>), theta_j ~ N(0, I_d).
// Directions are normalized: the duality behind it integrates over the sphere.
inline FeatureMatrix legendre_features(const SphereDataset& ds, const DualActivation& sigma_f, Eigen::Index m,
                                       std::uint64_t seed) {
  require(m >= 1, "legendre_features: m must be >= 1");
  require(sigma_f.d == ds.d(), fmt::format("legendre_features: expansion built for d = {} but data has d = {}", sigma_f.d, ds.d()));
  FeatureMatrix F;
  F.generator = "legendre-sphere";
  F.seed = seed;
  F.truncation = static_cast<int>(sigma_f.weights.size()) - 1;
  F.phi.resize(ds.n(), m);
  const Eigen::Index d = ds.d();
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t j) {
    NormalSource normal(substream(seed, StreamTag::features_dirs, j));
    Eigen::VectorXd theta(d);
    for (Eigen::Index k = 0; k < d; ++k) theta(k) = normal();
    theta.normalize();
    const Eigen::VectorXd proj = ds.points() * theta;
    for (Eigen::Index i = 0; i < ds.n(); ++i) F.phi(i, static_cast<Eigen::Index>(j)) = sigma_f(std::clamp(proj(i), -1.0, 1.0));
  });
  return F;
}

struct CompressedActivation {
  ActivationSpec spec;   // a_k = sqrt(alpha_k), k <= iota
  double tail_mass = 0;  // sum_{k > iota} alpha_k plus mass beyond the degree cap
  std::vector<double> alpha;  // P(Z_L = k), k <= D
  double beyond_cap = 0;      // part of tail_mass that lies beyond D
};

// Compressed activation: alpha_k = P(Z_L = k), sigma^{(L)} = sum_{k<=iota} sqrt(alpha_k) h_k.
inline CompressedActivation compressed_activation(const Pgf& base, int L, int iota, int D = 512) {
  require(iota >= 0, "compressed_activation: truncation must be >= 0");
  const Pgf gen = exact_generation_distribution(base, L, D);
  CompressedActivation c;
  c.alpha = gen.coefficients;
  c.beyond_cap = gen.tail_mass;
  const int top = std::min(iota, D);
  c.spec.name = fmt::format("compressed(L={})", L);
  c.spec.coefficients.assign(iota + 1, 0.0);
  double kept = 0.0;
  for (int k = 0; k <= top; ++k) {
    c.spec.coefficients[k] = std::sqrt(gen.coefficients[k]);
    kept += gen.coefficients[k];
  }
  c.tail_mass = std::max(0.0, 1.0 - kept);
  c.spec.centered = c.spec.coefficients[0] == 0.0;
  c.spec.normalized = c.tail_mass <= 1e-8;
  return c;
}

// Hermite features: Psi[i, j] = sigma(<x_i, theta_j>), theta_j ~ N(0, I_d)
// NOT normalized (the Gaussian duality needs <x, theta> ~ N(0, 1)). With
// noise_mass, adds sqrt(noise_mass) z_ij, z_ij ~ N(0, 1).
inline FeatureMatrix hermite_features(const SphereDataset& ds, const ActivationSpec& spec, Eigen::Index m,
                                      std::uint64_t seed, std::optional<double> noise_mass = std::nullopt) {
  require(m >= 1, "hermite_features: m must be >= 1");
  if (noise_mass) require(*noise_mass >= 0.0, "hermite_features: noise mass must be non-negative");
  FeatureMatrix F;
  F.generator = noise_mass ? "hermite-truncated-noised" : "hermite-gaussian";
  F.seed = seed;
  F.truncation = spec.truncation();
  F.phi.resize(ds.n(), m);
  const Eigen::Index d = ds.d();
  const double amp = noise_mass ? std::sqrt(*noise_mass) : 0.0;
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t j) {
    NormalSource normal(substream(seed, StreamTag::features_dirs, j));
    Eigen::VectorXd theta(d);
    for (Eigen::Index k = 0; k < d; ++k) theta(k) = normal();
    const Eigen::VectorXd proj = ds.points() * theta;
    const auto col = static_cast<Eigen::Index>(j);
    for (Eigen::Index i = 0; i < ds.n(); ++i) F.phi(i, col) = spec_eval(spec, proj(i));
    if (noise_mass) {
      NormalSource z(substream(seed, StreamTag::features_noise, j));
      for (Eigen::Index i = 0; i < ds.n(); ++i) F.phi(i, col) += amp * z();
    }
  });
  return F;
}

// K = mass I + T + R with T[i,l] = sum_{k<=iota} alpha_k rho_il^k computed
// in closed form and R the difference from the compositional kernel matrix.
struct TruncationDecomposition {
  int iota = 0;
  double regularization_mass = 0.0;  // sum_{k > iota} alpha_k, including beyond-cap mass
  double beyond_cap = 0.0;
  Eigen::MatrixXd kernel;
  Eigen::MatrixXd truncated_gram;
  Eigen::MatrixXd remainder;
  double remainder_op_norm = 0.0;
  double rho_max = 0.0;
  double remainder_bound = 0.0;  // n * rho_max^{iota+1}
};

inline TruncationDecomposition truncation_decomposition(const SphereDataset& ds, const CompositionalKernel& k, int iota,
                                                        int D = 512) {
  require(iota >= 0, "truncation_decomposition: truncation must be >= 0");
  const auto c = compressed_activation(k.base, k.depth, iota, D);
  TruncationDecomposition t;
  t.iota = iota;
  t.regularization_mass = c.tail_mass;
  t.beyond_cap = c.beyond_cap;
  t.kernel = build_kernel_matrix(k.base, ds, k.depth).entries();
  const Eigen::Index n = ds.n();
  const int top = std::min(iota, D);
  t.truncated_gram.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index l = i; l < n; ++l) {
      const double rho = i == l ? 1.0 : snap_correlation(ds.correlation(i, l));
      double v = 0.0;
      for (int j = top; j >= 0; --j) v = v * rho + c.alpha[j];
      t.truncated_gram(i, l) = t.truncated_gram(l, i) = v;
    }
  t.remainder = t.kernel - t.truncated_gram;
  t.remainder.diagonal().array() -= t.regularization_mass;
  t.remainder_op_norm = symmetric_operator_norm(t.remainder);
  t.rho_max = ds.rho_max();
  t.remainder_bound = static_cast<double>(n) * std::pow(t.rho_max, iota + 1);
  return t;
}

inline void to_json(nlohmann::json& j, const TruncationDecomposition& t) {
  j = nlohmann::json{{"iota", t.iota},
                     {"regularization_mass", t.regularization_mass},
                     {"beyond_degree_cap", t.beyond_cap},
                     {"remainder_op_norm", t.remainder_op_norm},
                     {"rho_max", t.rho_max},
                     {"remainder_bound", t.remainder_bound},
                     {"bound_holds", t.remainder_op_norm <= t.remainder_bound}};
}

struct ConditionRow {
  int depth = 0;
  double lambda_max = 0.0, lambda_min = 0.0;
  double ratio = 0.0;  // inf when the Gram matrix is singular
  double regularization_mass = 0.0;
};

// For each L: noised truncated Hermite features of the compressed activation,
// then lambda_1 / lambda_n of Psi Psi^T / m.
inline std::vector<ConditionRow> condition_number_vs_depth(const SphereDataset& ds, const Pgf& base,
                                                           const std::vector<int>& depths, int iota, Eigen::Index m,
                                                           std::uint64_t seed, int D = 512) {
  require(m >= ds.n(), "condition_number_vs_depth: requires m >= n");
  std::vector<ConditionRow> rows;
  for (int L : depths) {
    const auto c = compressed_activation(base, L, iota, D);
    const auto F = hermite_features(ds, c.spec, m, seed, c.tail_mass);
    const auto ev = symmetric_eigenvalues(F.gram());
    ConditionRow r;
    r.depth = L;
    r.lambda_min = ev(0);
    r.lambda_max = ev(ev.size() - 1);
    r.ratio = r.lambda_min > 0 ? r.lambda_max / r.lambda_min : std::numeric_limits<double>::infinity();
    r.regularization_mass = c.tail_mass;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace compkern
