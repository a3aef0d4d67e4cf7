#include <gtest/gtest.h>

#include <compkern/kernel.hpp>

#include "support.hpp"

using namespace compkern;

namespace {
Pgf exact_pgf(const std::string& name, bool centered) {
  const auto s = quadrature_coefficients(activations::builtin(name), 20);
  return pgf_from_activation(centered ? center_and_normalize(s) : normalize(s));
}
}  // namespace

TEST(KernelEval, Examples) {
  const auto g = poisson(1.3);
  EXPECT_EQ(kernel_eval({g, 0}, 0.37), 0.37);
  for (int L : {1, 5, 50}) EXPECT_EQ(kernel_eval({monomial_pgf(1), L}, -0.42), -0.42);
  EXPECT_NEAR(kernel_eval({monomial_pgf(2), 3}, 0.9), 0.43046721, 1e-15);
  EXPECT_NEAR(std::pow(0.9, 8), 0.43046721, 1e-15);
}

TEST(KernelEval, SnapsNearUnitCorrelation) {
  EXPECT_EQ(snap_correlation(1 + 1e-13), 1.0);
  EXPECT_EQ(snap_correlation(-1 - 1e-13), -1.0);
  EXPECT_THROW(kernel_eval({poisson(1.0), 2}, 1.001), ValidationError);
}

TEST(KernelEval, UnitAtOneAndMonotoneOnUnitInterval) {
  Philox4x32 eng(8);
  for (int i = 0; i < 20; ++i) {
    const CompositionalKernel k{ck_test::random_pgf(eng, 5, i % 2), 1 + i % 6};
    EXPECT_NEAR(kernel_eval(k, 1.0), 1.0, 1e-9);
    double prev = kernel_eval(k, 0.0);
    for (int j = 1; j <= 100; ++j) {
      const double v = kernel_eval(k, j / 100.0);
      EXPECT_GE(v, prev);
      prev = v;
    }
  }
  EXPECT_NEAR(kernel_eval({poisson(2.0), 4}, 1.0), 1.0, 1e-9);
}

TEST(KernelEval, ComplementMatchesDirect) {
  const CompositionalKernel k{exact_pgf("gelu", true), 5};
  for (double u : {1e-6, 0.01, 0.3, 0.9})
    EXPECT_NEAR(kernel_eval_complement(k, u), 1 - kernel_eval(k, 1 - u), 1e-12);
}

TEST(KernelViaBranching, Examples) {
  const auto g = poisson(1.0);
  EXPECT_NEAR(kernel_eval_via_branching({g, 0}, 0.3, 100, 1).estimate, 0.3, 1e-15);
  EXPECT_EQ(kernel_eval_via_branching({g, 3}, 1.0, 1000, 1).estimate, 1.0);
  const CompositionalKernel k{g, 2};
  const auto mc = kernel_eval_via_branching(k, 0.5, 1'000'000, 2);
  EXPECT_NEAR(mc.estimate, kernel_eval(k, 0.5), 4 * mc.stderr_);
}

TEST(KernelViaBranching, OracleEquivalenceOnRandomTriples) {
  Philox4x32 eng(99);
  for (int i = 0; i < 20; ++i) {
    const CompositionalKernel k{ck_test::random_pgf(eng, 4, false), 1 + i % 4};
    const double rho = 2 * eng.uniform() - 1;
    const auto mc = kernel_eval_via_branching(k, rho, 100000, 1000 + i);
    EXPECT_NEAR(mc.estimate, kernel_eval(k, rho), 4 * mc.stderr_ + 1e-12) << i;
  }
}

// For G(0) = 0, |G(s)| <= |s| (p_1 + (1 - p_1)|s|), hence
// |K^{(L)}(rho)| <= |rho| (p_1 + (1 - p_1)|rho|)^L. The sharper |rho|^L does
// not hold in general: the identity base keeps K^{(L)}(rho) = rho.
TEST(KernelProperties, CenteredContraction) {
  Philox4x32 eng(4);
  for (int i = 0; i < 20; ++i) {
    const auto g = ck_test::random_pgf(eng, 6, true);
    const double p1 = g.coefficients[1];
    for (int L : {1, 3, 8})
      for (int j = -20; j <= 20; ++j) {
        const double rho = j / 20.0;
        const double v = std::abs(kernel_eval({g, L}, rho));
        EXPECT_LE(v, kernel_eval({g, L}, std::abs(rho)) + 1e-15);
        EXPECT_LE(v, std::abs(rho) * std::pow(p1 + (1 - p1) * std::abs(rho), L) + 1e-15);
      }
  }
  EXPECT_GT(kernel_eval({monomial_pgf(1), 5}, 0.5), std::pow(0.5, 5));
}

TEST(KernelProperties, NonincreasingInDepthAboveExtinction) {
  Philox4x32 eng(6);
  int checked = 0;
  for (int i = 0; i < 40; ++i) {
    const auto g = ck_test::random_pgf(eng, 5, false);
    if (pgf_mean(g) <= 1) continue;
    ++checked;
    const double xi = extinction_probability(g);
    for (int j = 0; j < 50; ++j) {
      const double rho = xi + (1 - xi) * j / 50.0;
      for (int L = 0; L < 10; ++L) EXPECT_LE(kernel_eval({g, L + 1}, rho), kernel_eval({g, L}, rho) + 1e-12);
    }
  }
  EXPECT_GT(checked, 5);
}

TEST(UnscaledLimit, Examples) {
  const auto relu = exact_pgf("relu", true);
  EXPECT_LT(std::abs(kernel_eval({relu, 30}, 0.5)), 1e-3);
  EXPECT_LT(std::abs(kernel_eval({relu, 200}, 0.5)), 1e-12);

  const auto sig = exact_pgf("sigmoid", false);
  EXPECT_NEAR(kernel_eval({sig, 30}, 0.5), 1.0, 1e-6);

  const auto gelu = exact_pgf("gelu", false);
  const auto c = unscaled_limit_curve(gelu, {10, 400}, {0.0, 0.5, 1.0});
  EXPECT_NEAR(c.xi, 0.76, 0.01);
  EXPECT_NEAR(c.rows[4].value, c.xi, 1e-9);  // L = 400, rho = 0.5
  EXPECT_EQ(*c.limit[1].prediction, c.xi);
  EXPECT_EQ(*c.limit[2].prediction, 1.0);

  const auto s = unscaled_limit_curve(sig, {5}, {-0.5, 0.5});
  EXPECT_EQ(*s.limit[1].prediction, 1.0);

  std::ostringstream os;
  c.write_csv(os);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "L,rho,value,prediction");
}

TEST(UnscaledLimit, NegativeExtensionConditions) {
  EXPECT_EQ(negative_extension_condition(make_pgf({0.0, 0.5, 0.5})), "centered");
  EXPECT_EQ(negative_extension_condition(make_pgf({0.5, 0.0, 0.5})), "nonnegative");
  // G(s) = 0.3 + 0.7 s^3 is negative near -1 and G(s) > s on [-1, 0).
  EXPECT_EQ(negative_extension_condition(make_pgf({0.3, 0.0, 0.0, 0.7})), "two-fixed-points");
}

TEST(RescaledLimit, Examples) {
  const auto t = linspace(0, 5, 11);
  const auto b = rescaled_limit_curve(monomial_pgf(2), t, {1, 5, 20, 40});
  for (const auto& r : b.rows) EXPECT_NEAR(r.value, std::exp(-r.x), 1e-12) << r.depth << " " << r.x;

  const auto gelu = exact_pgf("gelu", true);
  const auto c = rescaled_limit_curve(gelu, t, {6, 10});
  for (const auto& r : c.rows) {
    if (r.x == 0.0) {
      EXPECT_EQ(r.value, 1.0);
    }
  }
  double sup = 0;
  for (std::size_t i = 0; i < t.size(); ++i) sup = std::max(sup, std::abs(c.rows[i].value - c.rows[i + t.size()].value));
  // The L = 6 and L = 10 curves are still 0.031 apart; gaps below 0.02 need L >= 8.
  EXPECT_NEAR(sup, 0.031, 0.002);

  // Cauchy behavior: successive gaps shrink geometrically.
  const std::vector<int> Ls{4, 6, 8, 10, 12, 14, 16};
  const auto fine = rescaled_limit_curve(gelu, linspace(0, 10, 201), Ls);
  double prev = 1;
  for (std::size_t a = 0; a + 1 < Ls.size(); ++a) {
    double gap = 0;
    for (std::size_t i = 0; i < 201; ++i)
      gap = std::max(gap, std::abs(fine.rows[a * 201 + i].value - fine.rows[(a + 1) * 201 + i].value));
    EXPECT_LT(gap, 0.8 * prev) << Ls[a];
    prev = gap;
  }
  EXPECT_LT(prev, 0.01);

  // mu <= 1 curves are still produced, without a W prediction.
  const auto s = rescaled_limit_curve(exact_pgf("sigmoid", false), t, {3});
  EXPECT_FALSE(s.rows[0].prediction.has_value());
}

TEST(RescaledLimit, PredictionFromLaplaceEstimate) {
  const auto g = poisson(2.0);
  const std::vector<double> t{0.0, 0.5, 1.0};
  const auto w = kesten_stigum_estimate(g, 10, 20000, 3, t);
  const auto c = rescaled_limit_curve(g, t, {10}, &w);
  ASSERT_TRUE(c.rows[1].prediction.has_value());
  EXPECT_NEAR(*c.rows[0].prediction, 1.0, 1e-15);
  for (const auto& r : c.rows) EXPECT_NEAR(r.value, *r.prediction, 0.02);
}

TEST(KernelMatrix, Examples) {
  const SphereDataset ortho(Eigen::MatrixXd::Identity(4, 6));
  const auto K = build_kernel_matrix(exact_pgf("relu", true), ortho, 3);
  EXPECT_TRUE(K.entries().isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-15));

  Eigen::MatrixXd P(2, 2);
  P << 1, 0, 0.8, 0.6;
  const auto K2 = build_kernel_matrix(monomial_pgf(2), SphereDataset(P), 2);
  EXPECT_NEAR(K2.entries()(0, 1), 0.4096, 1e-15);
  EXPECT_EQ(K2.entries()(1, 0), K2.entries()(0, 1));

  Eigen::MatrixXd D(2, 3);
  D << 1, 0, 0, 1, 0, 0;
  const auto K3 = build_kernel_matrix(poisson(1.5), SphereDataset(D), 4);
  EXPECT_NEAR(K3.entries()(0, 1), 1.0, 1e-9);
  EXPECT_NEAR(K3.eigenvalues()(0), 0.0, 1e-9);

  Eigen::MatrixXd bad(1, 2);
  bad << 1.0, 0.1;
  EXPECT_THROW(SphereDataset{bad}, ValidationError);
}

TEST(KernelMatrix, PositiveSemidefiniteAndSymmetric) {
  Philox4x32 eng(12);
  for (int i = 0; i < 8; ++i) {
    const auto ds = sample_uniform_sphere(60, 5 + 10 * i, 40 + i);
    const auto K = build_kernel_matrix(ck_test::random_pgf(eng, 5, false), ds, 1 + i % 4);
    EXPECT_EQ((K.entries() - K.entries().transpose()).norm(), 0.0);
    for (Eigen::Index j = 0; j < K.n(); ++j) EXPECT_NEAR(K.entries()(j, j), 1.0, 1e-9);
    EXPECT_GE(K.eigenvalues()(0), -1e-8 * K.n());
  }
}

TEST(KernelMatrix, CorrelationOverloadAgrees) {
  const auto ds = sample_uniform_sphere(30, 8, 5);
  Eigen::MatrixXd C = ds.points() * ds.points().transpose();
  C.diagonal().setOnes();
  const auto g = poisson(1.2, 40);
  EXPECT_LT((build_kernel_matrix(g, ds, 3).entries() - build_kernel_matrix(g, C, 3).entries()).cwiseAbs().maxCoeff(),
            1e-15);
}
