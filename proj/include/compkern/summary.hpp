#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "hermite.hpp"
#include "pgf.hpp"

namespace compkern {

// mu, mu_star, a_1^2 and xi of an activation's dual law, with delta-method
// standard errors when the coefficient covariance is known.
struct ActivationMoments {
  std::string name;
  bool centered = false;
  double mu = 0, mu_star = 0, a1_sq = 0, xi = 1;
  double mu_se = 0, mu_star_se = 0, a1_sq_se = 0, xi_se = 0;
  double tail_mass = 0;
  Phase phase = Phase::subcritical_or_critical;
};

namespace detail {
inline double dual_normalizer(const ActivationSpec& raw, bool centered, std::optional<double> second_moment) {
  const auto& a = raw.coefficients;
  double S = 0;
  for (std::size_t k = centered ? 1 : 0; k < a.size(); ++k) S += a[k] * a[k];
  if (second_moment) S = *second_moment - (centered ? a[0] * a[0] : 0.0);
  require(S > 0, "dual law: '" + raw.name + "' has zero (centered) norm");
  return S;
}
}  // namespace detail

// p_k = a_k^2 / S over k in J, where J drops k = 0 when centered. S is the
// truncated sum, or second_moment (minus a_0^2 when centered) when the full
// L2 norm is known; the remainder then becomes tail mass.
inline Pgf dual_law(const ActivationSpec& raw, bool centered, std::optional<double> second_moment = std::nullopt) {
  raw.validate();
  const double S = detail::dual_normalizer(raw, centered, second_moment);
  std::vector<double> p(raw.coefficients.size(), 0.0);
  double kept = 0;
  for (std::size_t k = centered ? 1 : 0; k < p.size(); ++k) {
    p[k] = raw.coefficients[k] * raw.coefficients[k] / S;
    kept += p[k];
  }
  // Tiny negative slack from rounding when S is the truncated sum.
  Pgf g = make_pgf(std::move(p), std::max(0.0, 1.0 - kept));
  g.family = "activation";
  g.params = {{"name", raw.name}, {"centered", centered}};
  return g;
}

inline ActivationMoments activation_moments(const ActivationSpec& raw, bool centered,
                                            const Eigen::MatrixXd* covariance = nullptr,
                                            std::optional<double> second_moment = std::nullopt) {
  const Pgf g = dual_law(raw, centered, second_moment);
  const auto& a = raw.coefficients;
  const int K = static_cast<int>(a.size());
  const int first = centered ? 1 : 0;
  const double S = detail::dual_normalizer(raw, centered, second_moment);
  const auto& p = g.coefficients;
  const auto m = mean_and_mustar(g);

  ActivationMoments r;
  r.name = raw.name;
  r.centered = centered;
  r.mu = m.mu;
  r.mu_star = m.mu_star;
  r.a1_sq = K > 1 ? p[1] : 0.0;
  r.tail_mass = g.tail_mass;
  const bool identity = K > 1 && std::abs(p[1] - 1.0) <= 1e-15;
  // Z = 1 forever: never extinct.
  r.xi = identity ? 0.0 : extinction_probability(g);
  // A finite coefficient list always has finite mu_star.
  r.phase = r.mu <= 1.0 ? Phase::subcritical_or_critical : Phase::supercritical_ks;
  if (!covariance) return r;

  require(covariance->rows() == K && covariance->cols() == K, "activation_moments: covariance shape mismatch");
  // d p_k / d a_j = 2 a_j (delta_jk - p_k) / S, so for any F = sum_k f_k p_k
  // the gradient is 2 a_j (f_j - F) / S (the S-term vanishes with a known
  // second moment only approximately; truncated normalization is assumed).
  auto se = [&](auto f, double F) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(K);
    for (int j = first; j < K; ++j) grad(j) = 2.0 * a[j] * (f(j) - F) / S;
    return std::sqrt(std::max(0.0, grad.dot(*covariance * grad)));
  };
  r.mu_se = se([](int j) { return double(j); }, r.mu);
  r.mu_star_se = se([](int j) { return j >= 2 ? j * std::log(double(j)) : 0.0; }, r.mu_star);
  r.a1_sq_se = se([](int j) { return j == 1 ? 1.0 : 0.0; }, r.a1_sq);
  // Implicit function theorem on G(xi) = xi.
  const double slope = pgf_derivative(g, r.xi) - 1.0;
  if (r.mu <= 1.0 && !identity) {
    r.xi_se = 0.0;  // xi = 1 on the whole subcritical side
  } else if (identity || std::abs(slope) < 1e-12) {
    r.xi_se = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double xi = r.xi;
    r.xi_se = se([xi](int j) { return std::pow(xi, j); }, pgf_eval(g, xi)) / std::abs(slope);
  }
  return r;
}

inline void to_json(nlohmann::json& j, const ActivationMoments& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"name", m.name},           {"centered", m.centered},   {"mu", m.mu},
                     {"mu_se", num(m.mu_se)},    {"mu_star", m.mu_star},     {"mu_star_se", num(m.mu_star_se)},
                     {"a1_sq", m.a1_sq},         {"a1_sq_se", num(m.a1_sq_se)}, {"xi", m.xi},
                     {"xi_se", num(m.xi_se)},    {"tail_mass", m.tail_mass}, {"phase", to_string(m.phase)}};
}

}  // namespace compkern
