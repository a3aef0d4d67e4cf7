#include <gtest/gtest.h>

#include <boost/math/special_functions/factorials.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include <compkern/hermite.hpp>

using namespace compkern;

TEST(HermiteEval, Trivial) {
  EXPECT_EQ(hermite_eval(0, 7.3), 1.0);
  EXPECT_NEAR(hermite_eval(2, 2.0), 3.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(hermite_eval(1, -0.25), -0.25);
}

// He_10 expanded in exact rational arithmetic through He_{k+1} = x He_k - k He_{k-1},
// evaluated at x = 3/2 and divided by sqrt(10!) in 50-digit floating point.
TEST(HermiteEval, DegreeTenMatchesExactRational) {
  using boost::multiprecision::cpp_rational;
  using Big = boost::multiprecision::cpp_bin_float_50;
  const cpp_rational x(3, 2);
  cpp_rational prev = 1, cur = x;
  for (int k = 1; k < 10; ++k) {
    cpp_rational next = x * cur - cpp_rational(k) * prev;
    prev = cur;
    cur = next;
  }
  const Big expected = Big(numerator(cur)) / Big(denominator(cur)) / boost::multiprecision::sqrt(Big(3628800));
  const double got = hermite_eval(10, 1.5);
  EXPECT_NEAR(got, static_cast<double>(expected), 1e-13 * std::abs(static_cast<double>(expected)));
  // The long-double instantiation agrees as well.
  EXPECT_NEAR(static_cast<double>(hermite_eval<long double>(10, 1.5L)), static_cast<double>(expected), 1e-14);
}

TEST(HermiteEval, HighDegreeStaysFinite) {
  for (double x : {-30.0, -3.0, 0.0, 0.7, 12.0, 40.0}) {
    EXPECT_TRUE(std::isfinite(hermite_eval(400, x))) << x;
    EXPECT_TRUE(std::isfinite(hermite_eval(1000, x))) << x;
  }
}

TEST(HermiteEval, NegativeDegreeRejected) { EXPECT_THROW(hermite_eval(-1, 0.0), ValidationError); }

TEST(HermiteBasis, EvalAllMatchesScalar) {
  HermiteBasis b(30);
  const auto v = b.eval_all(1.3);
  for (int k = 0; k <= 30; ++k) EXPECT_NEAR(v[k], hermite_eval(k, 1.3), 1e-12 * std::max(1.0, std::abs(v[k])));
  EXPECT_EQ(b.eval(0, 99.0), 1.0);
  EXPECT_THROW(b.eval(31, 0.0), ValidationError);
}

// Standard deviation of h_k h_j under N(0,1), by 200-point Gauss-Hermite quadrature.
static double product_sd(int k, int j) {
  static const auto rule = [] {
    // Golub-Welsch for the probabilists' weight: off-diagonal sqrt(n).
    const int n = 200;
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n), sub(n - 1);
    for (int i = 1; i < n; ++i) sub(i - 1) = std::sqrt(double(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    std::vector<std::pair<double, double>> r;
    for (int i = 0; i < n; ++i) r.push_back({es.eigenvalues()(i), es.eigenvectors()(0, i) * es.eigenvectors()(0, i)});
    return r;
  }();
  double m2 = 0;
  for (auto [x, w] : rule) {
    const double v = hermite_eval(k, x) * hermite_eval(j, x);
    m2 += w * v * v;
  }
  const double mean = (k == j) ? 1.0 : 0.0;
  return std::sqrt(std::max(0.0, m2 - mean * mean));
}

TEST(HermiteProperties, MonteCarloOrthonormality) {
  const int K = 12;
  const std::uint64_t M = 1'000'000;
  HermiteBasis basis(K);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(K + 1, K + 1);
  NormalSource normal(substream(11, StreamTag::misc, 0));
  Eigen::VectorXd h(K + 1);
  for (std::uint64_t i = 0; i < M; ++i) {
    basis.eval_all(normal(), h.data());
    acc.selfadjointView<Eigen::Lower>().rankUpdate(h);
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  acc /= double(M);
  for (int k = 0; k <= K; ++k)
    for (int j = 0; j <= k; ++j) {
      const double target = (k == j) ? 1.0 : 0.0;
      const double tol = std::max(5.0 / std::sqrt(double(M)), 5.0 * product_sd(k, j) / std::sqrt(double(M)));
      EXPECT_NEAR(acc(k, j), target, tol) << "k=" << k << " j=" << j;
    }
}

// Mehler: sum_k rho^k h_k(x) h_k(y) = exp((2 rho x y - rho^2 (x^2 + y^2)) / (2 (1 - rho^2))) / sqrt(1 - rho^2).
static double mehler_closed(double rho, double x, double y) {
  const double q = 1 - rho * rho;
  return std::exp((2 * rho * x * y - rho * rho * (x * x + y * y)) / (2 * q)) / std::sqrt(q);
}

TEST(HermiteProperties, MehlerIdentitySmallCorrelations) {
  for (double rho : {-0.5, -0.1, 0.1, 0.5})
    for (double x : {-1.0, 0.0, 2.0})
      for (double y : {-1.0, 0.0, 2.0}) {
        double s = 0, r = 1;
        for (int k = 0; k <= 60; ++k, r *= rho) s += r * hermite_eval(k, x) * hermite_eval(k, y);
        EXPECT_NEAR(s, mehler_closed(rho, x, y), 1e-6) << rho << " " << x << " " << y;
      }
}

TEST(Activations, BuiltinsMatchFormulas) {
  const auto relu = activations::relu(), gelu = activations::gelu(), sig = activations::sigmoid(),
             swish = activations::swish();
  EXPECT_EQ(relu(-2.0), 0.0);
  EXPECT_EQ(relu(3.5), 3.5);
  EXPECT_NEAR(gelu(1.0), 1.0 * 0.5 * (1 + std::erf(1 / std::sqrt(2.0))), 1e-15);
  EXPECT_NEAR(sig(0.3), 1 / (1 + std::exp(-0.3)), 1e-15);
  EXPECT_NEAR(swish(-1.7), -1.7 / (1 + std::exp(1.7)), 1e-15);
  EXPECT_NEAR(sig(-800.0), 0.0, 1e-300);
  EXPECT_TRUE(std::isfinite(swish(-800.0)));
  EXPECT_THROW(activations::builtin("tanhh"), ValidationError);
}

TEST(EstimateCoefficients, IdentityRecoversH1) {
  const std::uint64_t M = 1'000'000;
  const auto spec = estimate_coefficients(activations::identity(), 3, M, 42);
  const double tol = 5 / std::sqrt(double(M));
  EXPECT_NEAR(spec.coefficients[0], 0, tol);
  EXPECT_NEAR(spec.coefficients[1], 1, tol);
  EXPECT_NEAR(spec.coefficients[2], 0, tol);
  EXPECT_NEAR(spec.coefficients[3], 0, tol);
  EXPECT_FALSE(spec.normalized);
  EXPECT_FALSE(spec.centered);
}

TEST(EstimateCoefficients, ReluClosedForms) {
  const auto est = estimate_hermite_coefficients(activations::relu(), 1, 1'000'000, 7);
  // E[max(0,g)] = 1/sqrt(2 pi), E[g max(0,g)] = 1/2.
  EXPECT_NEAR(est.spec.coefficients[0], 1 / std::sqrt(2 * M_PI), 5 * est.standard_error[0]);
  EXPECT_NEAR(est.spec.coefficients[1], 0.5, 5 * est.standard_error[1]);
}

TEST(EstimateCoefficients, SigmoidCenteredLinearShare) {
  const auto spec = center_and_normalize(estimate_coefficients(activations::sigmoid(), 20, 1'000'000, 42));
  EXPECT_NEAR(spec.coefficients[1] * spec.coefficients[1], 0.99, 0.01);
}

TEST(EstimateCoefficients, DeterministicAndChunkAligned) {
  const auto a = estimate_coefficients(activations::gelu(), 5, 100000, 9);
  const auto b = estimate_coefficients(activations::gelu(), 5, 100000, 9);
  EXPECT_EQ(a.coefficients, b.coefficients);
  setenv("COMPKERN_THREADS", "3", 1);
  const auto c = estimate_coefficients(activations::gelu(), 5, 100000, 9);
  unsetenv("COMPKERN_THREADS");
  EXPECT_EQ(a.coefficients, c.coefficients);
}

TEST(EstimateCoefficients, NonFiniteActivationFails) {
  ActivationFn bad{"bad", [](double t) { return t > 3 ? std::numeric_limits<double>::infinity() : t; }};
  EXPECT_THROW(estimate_coefficients(bad, 2, 100000, 1), NumericalError);
  EXPECT_THROW(estimate_coefficients(activations::relu(), 2, 0, 1), ValidationError);
}

// Mean squared error over seeds scales like 1/M for GeLU.
TEST(EstimateCoefficients, GeluConvergenceRate) {
  const auto exact = quadrature_coefficients(activations::gelu(), 4);
  std::vector<double> logm, logerr;
  for (std::uint64_t M : {1000ull, 10000ull, 100000ull}) {
    double mse = 0;
    const int seeds = 24;
    for (int s = 0; s < seeds; ++s) {
      const auto e = estimate_coefficients(activations::gelu(), 4, M, 1000 + s);
      for (int k = 0; k <= 4; ++k) mse += std::pow(e.coefficients[k] - exact.coefficients[k], 2);
    }
    logm.push_back(std::log(double(M)));
    logerr.push_back(0.5 * std::log(mse / seeds));
  }
  const double slope1 = (logerr[1] - logerr[0]) / (logm[1] - logm[0]);
  const double slope2 = (logerr[2] - logerr[1]) / (logm[2] - logm[1]);
  EXPECT_NEAR(slope1, -0.5, 0.2);
  EXPECT_NEAR(slope2, -0.5, 0.2);
}

TEST(QuadratureCoefficients, ReluClosedForm) {
  const auto s = quadrature_coefficients(activations::relu(), 4);
  EXPECT_NEAR(s.coefficients[0], 1 / std::sqrt(2 * M_PI), 1e-12);
  EXPECT_NEAR(s.coefficients[1], 0.5, 1e-12);
  // a_2 = E[relu(g)(g^2-1)]/sqrt(2) = 1/(2 sqrt(pi)); odd k >= 3 vanish.
  EXPECT_NEAR(s.coefficients[2], 1 / (2 * std::sqrt(M_PI)), 1e-12);
  EXPECT_NEAR(s.coefficients[3], 0.0, 1e-12);
  EXPECT_NEAR(quadrature_second_moment(activations::relu()), 0.5, 1e-12);
}

TEST(CenterNormalize, Examples) {
  ActivationSpec s{"x", {0.4, 0.3, 0.4}};
  const auto c = center_and_normalize(s);
  EXPECT_EQ(c.coefficients[0], 0.0);
  EXPECT_NEAR(c.coefficients[1], 0.6, 1e-15);
  EXPECT_NEAR(c.coefficients[2], 0.8, 1e-15);
  EXPECT_TRUE(c.centered && c.normalized);

  ActivationSpec id{"identity", {0, 1, 0, 0}};
  const auto i2 = center_and_normalize(id);
  EXPECT_EQ(i2.coefficients, id.coefficients);

  ActivationSpec constant{"const", {2.0, 0.0, 0.0}};
  EXPECT_THROW(center_and_normalize(constant), ValidationError);
}

TEST(CenterNormalize, ReluCenteredLinearShare) {
  const auto c = center_and_normalize(quadrature_coefficients(activations::relu(), 20));
  EXPECT_NEAR(c.coefficients[1] * c.coefficients[1], 0.74, 0.01);
}

TEST(SpecEval, Examples) {
  EXPECT_DOUBLE_EQ(spec_eval(ActivationSpec{"", {0, 1}}, 3.7), 3.7);
  EXPECT_DOUBLE_EQ(spec_eval(ActivationSpec{"", {1, 0, 0}}, -12.0), 1.0);
}

// The truncated ReLU series at x = 2 stays within the truncation budget.
TEST(SpecEval, ReluTruncation) {
  const auto s = quadrature_coefficients(activations::relu(), 20);
  double tail = quadrature_second_moment(activations::relu()) - s.squared_norm();
  EXPECT_GT(tail, 0.0);
  EXPECT_LT(tail, 0.05);
  EXPECT_NEAR(spec_eval(s, 2.0), 2.0, 0.05);
}

TEST(ActivationSpecJson, RoundTripAndValidation) {
  const auto s = center_and_normalize(ActivationSpec{"relu", {0.4, 0.3, 0.4}});
  nlohmann::json j = s;
  EXPECT_EQ(j["truncation"], 2);
  EXPECT_EQ(j["centered"], true);
  const auto back = j.get<ActivationSpec>();
  EXPECT_EQ(back.coefficients, s.coefficients);
  j["coefficients"][0] = 0.5;  // centered flag now violated
  EXPECT_THROW(j.get<ActivationSpec>(), ValidationError);
}
