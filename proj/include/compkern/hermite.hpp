#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace compkern {

// Normalized probabilists' Hermite polynomial h_k = He_k / sqrt(k!).
// Uses the recurrence with the normalization folded in,
//   h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k+1),
// which never forms k! and stays finite far beyond k = 170.
template <class Real>
Real hermite_eval(int k, Real x) {
  require(k >= 0, "hermite_eval: degree must be non-negative");
  using std::sqrt;
  Real prev = Real(1);
  if (k == 0) return prev;
  Real cur = x;
  for (int j = 1; j < k; ++j) {
    const Real next = (x * cur - sqrt(Real(j)) * prev) / sqrt(Real(j + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

// Fills out[0..kmax] with h_0(x)..h_kmax(x).
template <class Real>
void hermite_all(int kmax, Real x, Real* out) {
  out[0] = Real(1);
  if (kmax == 0) return;
  out[1] = x;
  for (int j = 1; j < kmax; ++j)
    out[j + 1] = (x * out[j] - std::sqrt(Real(j)) * out[j - 1]) / std::sqrt(Real(j + 1));
}

class HermiteBasis {
 public:
  explicit HermiteBasis(int max_degree) : max_degree_(max_degree) {
    require(max_degree >= 0, "HermiteBasis: max_degree must be >= 0");
    root_.resize(max_degree + 1);
    for (int j = 0; j <= max_degree; ++j) root_[j] = std::sqrt(double(j));
  }
  int max_degree() const { return max_degree_; }

  double eval(int k, double x) const {
    require(k <= max_degree_, "HermiteBasis: degree above max_degree");
    return hermite_eval(k, x);
  }

  // h_0..h_max at x, written into out (size max_degree + 1).
  void eval_all(double x, double* out) const {
    out[0] = 1.0;
    if (max_degree_ == 0) return;
    out[1] = x;
    for (int j = 1; j < max_degree_; ++j) out[j + 1] = (x * out[j] - root_[j] * out[j - 1]) / root_[j + 1];
  }

  std::vector<double> eval_all(double x) const {
    std::vector<double> out(max_degree_ + 1);
    eval_all(x, out.data());
    return out;
  }

 private:
  int max_degree_;
  std::vector<double> root_;
};

struct ActivationFn {
  std::string name;
  std::function<double(double)> evaluate;
  double operator()(double t) const { return evaluate(t); }
};

namespace activations {

inline double sigmoid_value(double t) {
  // Split by sign so exp never overflows.
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline ActivationFn relu() { return {"relu", [](double t) { return t > 0 ? t : 0.0; }}; }
inline ActivationFn gelu() {
  return {"gelu", [](double t) { return t * 0.5 * std::erfc(-t / std::sqrt(2.0)); }};
}
inline ActivationFn sigmoid() { return {"sigmoid", sigmoid_value}; }
inline ActivationFn swish() { return {"swish", [](double t) { return t * sigmoid_value(t); }}; }
inline ActivationFn identity() { return {"identity", [](double t) { return t; }}; }

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"relu", "gelu", "sigmoid", "swish", "identity"};
  return names;
}

inline ActivationFn builtin(const std::string& name) {
  if (name == "relu") return relu();
  if (name == "gelu") return gelu();
  if (name == "sigmoid") return sigmoid();
  if (name == "swish") return swish();
  if (name == "identity") return identity();
  throw ValidationError("unknown activation '" + name + "' (built-ins: relu, gelu, sigmoid, swish, identity)");
}

}  // namespace activations

// Truncated Hermite series sigma(x) = sum_k a_k h_k(x).
struct ActivationSpec {
  std::string name;
  std::vector<double> coefficients;
  bool normalized = false;
  bool centered = false;
  // Allowed |sum a_k^2 - 1| when normalized is set.
  double tolerance = 1e-8;

  int truncation() const { return static_cast<int>(coefficients.size()) - 1; }

  double squared_norm() const {
    double s = 0;
    for (double a : coefficients) s += a * a;
    return s;
  }

  void validate() const {
    require(!coefficients.empty(), "ActivationSpec: empty coefficient list");
    for (double a : coefficients) require(std::isfinite(a), "ActivationSpec: non-finite coefficient");
    if (normalized)
      require(std::abs(squared_norm() - 1.0) <= tolerance,
              "ActivationSpec '" + name + "': flagged normalized but sum a_k^2 = " + std::to_string(squared_norm()));
    if (centered) require(coefficients[0] == 0.0, "ActivationSpec '" + name + "': flagged centered but a_0 != 0");
  }
};

inline void to_json(nlohmann::json& j, const ActivationSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"truncation", s.truncation()},
                     {"coefficients", s.coefficients},
                     {"centered", s.centered},
                     {"normalized", s.normalized}};
}

inline void from_json(const nlohmann::json& j, ActivationSpec& s) {
  s.name = j.value("name", std::string{});
  s.coefficients = j.at("coefficients").get<std::vector<double>>();
  s.centered = j.value("centered", false);
  s.normalized = j.value("normalized", false);
  if (j.contains("truncation"))
    require(j.at("truncation").get<int>() == s.truncation(), "ActivationSpec JSON: truncation does not match coefficient count");
  s.validate();
}

inline double spec_eval(const ActivationSpec& spec, double x) {
  const int n = spec.truncation();
  double prev = 1.0, cur = x;
  double sum = spec.coefficients[0];
  if (n >= 1) sum += spec.coefficients[1] * x;
  for (int j = 1; j < n; ++j) {
    const double next = (x * cur - std::sqrt(double(j)) * prev) / std::sqrt(double(j + 1));
    prev = cur;
    cur = next;
    sum += spec.coefficients[j + 1] * cur;
  }
  return sum;
}

// Scales to unit L2 norm; keeps a_0.
inline ActivationSpec normalize(const ActivationSpec& spec) {
  const double s = spec.squared_norm();
  if (!(s > 0)) throw ValidationError("normalize: activation '" + spec.name + "' has zero norm");
  ActivationSpec out = spec;
  const double inv = 1.0 / std::sqrt(s);
  for (double& a : out.coefficients) a *= inv;
  out.normalized = true;
  out.tolerance = 1e-8;
  return out;
}

// (sigma - a_0) / ||sigma - a_0||.
inline ActivationSpec center_and_normalize(const ActivationSpec& spec) {
  double s = 0;
  for (std::size_t k = 1; k < spec.coefficients.size(); ++k) s += spec.coefficients[k] * spec.coefficients[k];
  const double total = spec.squared_norm();
  if (!(s > 1e-28 * std::max(1.0, total)))
    throw ValidationError("center_and_normalize: activation '" + spec.name +
                          "' is (numerically) constant; all non-constant coefficients vanish");
  ActivationSpec out = spec;
  const double inv = 1.0 / std::sqrt(s);
  out.coefficients[0] = 0.0;
  for (std::size_t k = 1; k < out.coefficients.size(); ++k) out.coefficients[k] *= inv;
  out.centered = true;
  out.normalized = true;
  out.tolerance = 1e-8;
  return out;
}

struct CoefficientEstimate {
  ActivationSpec spec;
  std::vector<double> standard_error;
  // Covariance matrix of the estimator vector (already divided by M).
  Eigen::MatrixXd covariance;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kHermiteChunk = 1u << 16;

// Monte-Carlo Hermite coefficients: a_k ~ (1/M) sum sigma(x_i) h_k(x_i), x_i ~ N(0,1).
// Work is split into fixed chunks of 2^16 draws, each on its own substream,
// and reduced in chunk order.
inline CoefficientEstimate estimate_hermite_coefficients(const ActivationFn& sigma, int iota, std::uint64_t M,
                                                         std::uint64_t seed, bool with_covariance = true) {
  require(M >= 1, "estimate_coefficients: M must be >= 1");
  require(iota >= 0, "estimate_coefficients: truncation must be >= 0");
  const int K = iota + 1;
  const std::uint64_t chunks = (M + kHermiteChunk - 1) / kHermiteChunk;
  std::vector<Eigen::VectorXd> sums(chunks);
  std::vector<Eigen::MatrixXd> cross(chunks);
  std::vector<int> bad(chunks, 0);
  const HermiteBasis basis(iota);

  parallel_for(chunks, [&](std::size_t c) {
    NormalSource normal(substream(seed, StreamTag::hermite_mc, c));
    const std::uint64_t begin = c * kHermiteChunk;
    const std::uint64_t end = std::min<std::uint64_t>(M, begin + kHermiteChunk);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(K);
    Eigen::MatrixXd xx;
    if (with_covariance) xx = Eigen::MatrixXd::Zero(K, K);
    Eigen::VectorXd h(K);
    for (std::uint64_t i = begin; i < end; ++i) {
      const double x = normal();
      const double y = sigma(x);
      if (!std::isfinite(y)) {
        bad[c] = 1;
        return;
      }
      basis.eval_all(x, h.data());
      h *= y;
      s += h;
      if (with_covariance) xx.selfadjointView<Eigen::Lower>().rankUpdate(h);
    }
    sums[c] = std::move(s);
    if (with_covariance) cross[c] = std::move(xx);
  });

  for (int b : bad)
    if (b) throw NumericalError("estimate_coefficients: activation '" + sigma.name + "' returned a non-finite value");

  Eigen::VectorXd total = Eigen::VectorXd::Zero(K);
  Eigen::MatrixXd total_xx = Eigen::MatrixXd::Zero(K, K);
  for (std::uint64_t c = 0; c < chunks; ++c) {
    total += sums[c];
    if (with_covariance) total_xx += cross[c];
  }
  const double m = static_cast<double>(M);
  CoefficientEstimate est;
  est.samples = M;
  est.seed = seed;
  est.spec.name = sigma.name;
  est.spec.coefficients.assign(total.data(), total.data() + K);
  for (double& a : est.spec.coefficients) a /= m;
  est.spec.tolerance = 3.0 * std::max(1, iota) / std::sqrt(m);
  est.standard_error.assign(K, std::numeric_limits<double>::quiet_NaN());
  if (with_covariance) {
    total_xx = total_xx.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd mean = total / m;
    Eigen::MatrixXd cov = (total_xx / m - mean * mean.transpose());
    if (M > 1) cov *= m / (m - 1);
    est.covariance = cov / m;
    for (int k = 0; k < K; ++k) est.standard_error[k] = std::sqrt(std::max(0.0, est.covariance(k, k)));
  }
  return est;
}

inline ActivationSpec estimate_coefficients(const ActivationFn& sigma, int iota, std::uint64_t M, std::uint64_t seed) {
  return estimate_hermite_coefficients(sigma, iota, M, seed, false).spec;
}

// Deterministic coefficients E[sigma(g) h_k(g)] by adaptive Gauss-Kronrod on
// each half line (the split at 0 handles the ReLU kink).
inline ActivationSpec quadrature_coefficients(const ActivationFn& sigma, int iota, double tol = 1e-13) {
  require(iota >= 0, "quadrature_coefficients: truncation must be >= 0");
  using boost::math::quadrature::gauss_kronrod;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  ActivationSpec spec;
  spec.name = sigma.name;
  spec.coefficients.resize(iota + 1);
  for (int k = 0; k <= iota; ++k) {
    auto f = [&](double x) {
      if (!std::isfinite(x)) return 0.0;
      const double w = std::exp(-0.5 * x * x);
      if (w == 0.0) return 0.0;
      return sigma(x) * hermite_eval(k, x) * w * inv_sqrt_2pi;
    };
    const double inf = std::numeric_limits<double>::infinity();
    const double left = gauss_kronrod<double, 61>::integrate(f, -inf, 0.0, 20, tol);
    const double right = gauss_kronrod<double, 61>::integrate(f, 0.0, inf, 20, tol);
    spec.coefficients[k] = left + right;
  }
  return spec;
}

// E[sigma(g)^2] by the same quadrature; the full L2 norm, not the truncated one.
inline double quadrature_second_moment(const ActivationFn& sigma, double tol = 1e-13) {
  using boost::math::quadrature::gauss_kronrod;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  auto f = [&](double x) {
    if (!std::isfinite(x)) return 0.0;
    const double w = std::exp(-0.5 * x * x);
    if (w == 0.0) return 0.0;
    const double y = sigma(x);
    return y * y * w * inv_sqrt_2pi;
  };
  const double inf = std::numeric_limits<double>::infinity();
  return gauss_kronrod<double, 61>::integrate(f, -inf, 0.0, 20, tol) +
         gauss_kronrod<double, 61>::integrate(f, 0.0, inf, 20, tol);
}

}  // namespace compkern
