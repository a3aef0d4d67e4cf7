#include <gtest/gtest.h>

#include <compkern/memorization.hpp>

#include "support.hpp"

using namespace compkern;

namespace {
Pgf exact_pgf(const std::string& name) {
  return pgf_from_activation(center_and_normalize(quadrature_coefficients(activations::builtin(name), 20)));
}

// Centered law with p_1 < 1, so G(s) < s on (0, 1).
Pgf random_descent_pgf(Philox4x32& eng) {
  for (;;) {
    auto g = ck_test::random_pgf(eng, 2 + static_cast<int>(eng.uniform() * 5), true);
    if (g.coefficients[1] < 0.98) return g;
  }
}
}  // namespace

TEST(PathDepthExact, Examples) {
  EXPECT_EQ(path_depth_exact(monomial_pgf(2), 0.9, 0.1), 5);
  EXPECT_EQ(path_depth_exact(monomial_pgf(2), 0.4, 0.4), 0);
  EXPECT_EQ(path_depth_exact(make_pgf({0.0, 0.5, 0.0, 0.5}), 0.5, 0.4), 1);
  EXPECT_NEAR(pgf_eval(make_pgf({0.0, 0.5, 0.0, 0.5}), 0.5), 0.3125, 1e-15);
}

TEST(PathDepthExact, Errors) {
  try {
    path_depth_exact(monomial_pgf(1), 0.5, 0.1, 50);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("last value 0.5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(path_depth_exact(poisson(2.0), 0.5, 0.1), ValidationError);
  EXPECT_THROW(path_depth_exact(monomial_pgf(2), 0.1, 0.5), ValidationError);
}

TEST(PathDepthBounds, Examples) {
  const auto b = path_depth_bounds(monomial_pgf(2), 0.9, 0.1);
  EXPECT_NEAR(b.upper_ratio_term, std::log(9.0) / std::log(1 / 0.9), 1e-12);
  EXPECT_LE(b.lower, 5);
  EXPECT_GE(b.upper, 5);
  EXPECT_THROW(path_depth_bounds(monomial_pgf(1), 0.9, 0.1), ValidationError);

  const auto g = make_pgf({0.0, 0.6, 0.3, 0.1});
  const int exact = path_depth_exact(g, 0.9, 0.05);
  const auto c = chain_bounds(g, 0.9, 0.05, {0.3, 0.5, 0.7});
  EXPECT_LE(c.lower, exact);
  EXPECT_GE(c.upper, exact);
}

TEST(PathDepthBounds, SandwichOnRandomInstances) {
  Philox4x32 eng(2024);
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    const auto g = random_descent_pgf(eng);
    const double beta = 0.05 + 0.9 * eng.uniform();
    const double alpha = beta * (0.01 + 0.98 * eng.uniform());
    const int exact = path_depth_exact(g, beta, alpha);
    const auto b = path_depth_bounds(g, beta, alpha);
    const auto c = chain_bounds(g, beta, alpha, default_split_grid(alpha, beta));
    violations += !(b.lower <= exact && exact <= b.upper);
    violations += !(c.lower <= exact);
  }
  EXPECT_EQ(violations, 0);
}

TEST(EpsilonCloseness, Examples) {
  EXPECT_EQ(*epsilon_closeness_depth(monomial_pgf(2), 0.3, 0.3).exact, 0);
  const auto r = epsilon_closeness_depth(monomial_pgf(2), 0.9, 0.1);
  EXPECT_EQ(*r.exact, 5);
  EXPECT_LE(r.lower, 5);
  EXPECT_GE(r.upper, 5);

  // Nearly linear base: a_1^2 s <= G(s) <= s (a_1^2 + (1 - a_1^2) rho) on [0, rho]
  // brackets the depth around log(rho/eps) / log(1/a_1^2); the bracket
  // tightens as rho -> 0.
  const auto g = exact_pgf("sigmoid");
  const double a1 = g.coefficient(1);
  for (auto [rho, eps] : {std::pair{0.9, 0.1}, {0.5, 0.01}, {0.05, 0.001}}) {
    const int L = *epsilon_closeness_depth(g, rho, eps).exact;
    EXPECT_GE(L, std::ceil(std::log(rho / eps) / std::log(1 / a1)) - 1e-9);
    EXPECT_LE(L, std::ceil(std::log(rho / eps) / -std::log(a1 + (1 - a1) * rho)) + 1e-9);
  }
  EXPECT_NEAR(*epsilon_closeness_depth(g, 0.05, 0.001).exact, std::log(50.0) / std::log(1 / a1), 1.0);
  EXPECT_THROW(epsilon_closeness_depth(g, 0.5, 0.6), ValidationError);
}

TEST(EpsilonCloseness, MonotoneInEpsilonAndRho) {
  const auto g = exact_pgf("gelu");
  int prev = 0;
  for (int i = 20; i >= 1; --i) {
    const int L = *epsilon_closeness_depth(g, 0.8, 0.8 * i / 20.0).exact;
    EXPECT_GE(L, prev);
    prev = L;
  }
  prev = 0;
  for (int i = 1; i <= 20; ++i) {
    const int L = *epsilon_closeness_depth(g, 0.01 + 0.98 * i / 20.0, 0.01).exact;
    EXPECT_GE(L, prev);
    prev = L;
  }
}

TEST(EpsilonCloseness, AsymmetricBaseIsFlaggedOnSignedData) {
  const auto ds = sample_uniform_sphere(30, 10, 4);
  ASSERT_TRUE(has_negative_correlation(ds));
  const auto asym = epsilon_closeness_depth(make_pgf({0.0, 0.5, 0.5}), ds, 0.05);
  EXPECT_FALSE(asym.exact_claimed);
  EXPECT_FALSE(asym.warnings.empty());
  const auto odd = epsilon_closeness_depth(make_pgf({0.0, 0.5, 0.0, 0.5}), ds, 0.05);
  EXPECT_TRUE(odd.exact_claimed);
}

TEST(CheckMemorization, Examples) {
  const KernelMatrix I(Eigen::MatrixXd::Identity(5, 5), "id", 0);
  EXPECT_TRUE(check_kappa_memorization(I, 1e-6).ok);
  const KernelMatrix J(Eigen::MatrixXd::Ones(2, 2), "ones", 0);
  const auto c = check_kappa_memorization(J, 0.9);
  EXPECT_FALSE(c.ok);
  EXPECT_NEAR(c.lambda_min, 0.0, 1e-15);
  EXPECT_NEAR(c.lambda_max, 2.0, 1e-15);
  EXPECT_TRUE(std::isinf(c.condition_surrogate));
}

TEST(CheckMemorization, GershgorinEnvelope) {
  Philox4x32 eng(5);
  for (int i = 0; i < 10; ++i) {
    const auto ds = sample_uniform_sphere(15, 30, 100 + i);
    const auto K = build_kernel_matrix(random_descent_pgf(eng), ds, 2);
    double delta = 0;
    for (Eigen::Index a = 0; a < K.n(); ++a)
      for (Eigen::Index b = a + 1; b < K.n(); ++b) delta = std::max(delta, std::abs(K.entries()(a, b)));
    const auto c = check_kappa_memorization(K, 1.0);
    EXPECT_LE(c.deviation, (K.n() - 1) * delta + 1e-9);
  }
}

// kappa/n-closeness implies kappa-memorization, which implies kappa-closeness.
TEST(CheckMemorization, ClosenessSufficiencyAndNecessity) {
  Philox4x32 eng(6);
  const double kappa = 0.1;
  int suff = 0, nec = 0;
  for (int i = 0; i < 30; ++i) {
    const auto ds = sample_uniform_sphere(10, 4 + i % 5, 200 + i);
    const auto g = random_descent_pgf(eng);
    for (int L = 0; L <= 12; ++L) {
      const auto K = build_kernel_matrix(g, ds, L);
      double delta = 0;
      for (Eigen::Index a = 0; a < K.n(); ++a)
        for (Eigen::Index b = a + 1; b < K.n(); ++b) delta = std::max(delta, std::abs(K.entries()(a, b)));
      const bool mem = check_kappa_memorization(K, kappa).ok;
      if (delta <= kappa / K.n()) {
        EXPECT_TRUE(mem);
        ++suff;
      }
      if (mem) {
        EXPECT_LE(delta, kappa);
        ++nec;
      }
    }
  }
  EXPECT_GT(suff, 10);
  EXPECT_GT(nec, 10);
}

TEST(MemorizationBounds, Examples) {
  EXPECT_NEAR(s_star(monomial_pgf(2)), 0.5, 1e-9);

  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 3);
  const auto r = memorization_depth(exact_pgf("relu"), SphereDataset(P), 1e-3);
  EXPECT_EQ(*r.exact, 0);

  EXPECT_THROW(memorization_depth_bounds(monomial_pgf(2), 0.5, 0.6, 10), ValidationError);
}

TEST(MemorizationBounds, UpperDepthMemorizesGelu) {
  const auto g = exact_pgf("gelu");
  const auto ds = sample_uniform_sphere(50, 200, 8);
  const auto r = memorization_depth(g, ds, 0.2);
  const int upper = static_cast<int>(r.upper);
  const auto c = check_kappa_memorization(build_kernel_matrix(g, ds, upper), 0.2);
  EXPECT_TRUE(c.ok);
  EXPECT_GE(c.lambda_min, 0.8);
  EXPECT_LE(c.lambda_max, 1.2);
  ASSERT_TRUE(r.exact.has_value());
  EXPECT_LE(r.lower, *r.exact);
  EXPECT_LE(*r.exact, r.upper);
}

TEST(MemorizationBounds, RegimeItemsAndJson) {
  const auto g = exact_pgf("relu");
  const auto r = memorization_depth_bounds(g, 0.5, 0.1, 1000, 1e7);
  EXPECT_EQ(r.regime, "small-correlation");
  nlohmann::json j = r;
  EXPECT_TRUE(j["items"].contains("small_correlation_lower"));
  EXPECT_TRUE(j["items"].contains("s_star"));
  EXPECT_EQ(j["kind"], "kappa-memorization");
  const double a1 = g.coefficient(1);
  const auto cf = memorization_small_regime(a1, 1000, 1e7, 0.1);
  EXPECT_EQ(j["items"]["small_correlation_upper"].get<double>(), cf.upper);
  EXPECT_EQ(json_number(std::numeric_limits<double>::infinity()), "inf");
}

// Small-correlation closed form at n = 200, d = 400 on i.i.d. spherical data.
TEST(MemorizationBounds, SmallRegimeClosedFormBracketsExact) {
  const auto ds = sample_uniform_sphere(200, 400, 31);
  for (const char* name : {"relu", "gelu", "swish"}) {
    const auto g = exact_pgf(name);
    const double kappa = 0.1;
    const auto r = memorization_depth(g, ds, kappa);
    ASSERT_TRUE(r.exact.has_value());
    const auto cf = memorization_small_regime(g.coefficient(1), 200, 400, kappa);
    EXPECT_LE(cf.lower, *r.exact) << name;
    EXPECT_GE(cf.upper, *r.exact) << name;
  }
}
