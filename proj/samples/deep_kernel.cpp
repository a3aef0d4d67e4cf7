// Dual law of centered GeLU, its phase, and how K^{(L)} flattens with depth.

#include <cstdio>

#include <compkern/compkern.hpp>

using namespace compkern;

int main() {
  const auto gelu = activations::builtin("gelu");
  const auto coef = quadrature_coefficients(gelu, 30);
  const Pgf g = dual_law(coef, /*centered=*/true, quadrature_second_moment(gelu));

  const auto m = activation_moments(coef, true, nullptr, quadrature_second_moment(gelu));
  std::printf("centered gelu: mu = %.4f, mu_star = %.4f, a1^2 = %.4f, xi = %.4f (%s)\n", m.mu, m.mu_star, m.a1_sq,
              m.xi, to_string(m.phase).c_str());

  std::printf("\n%6s", "rho");
  for (int L : {1, 2, 5, 10, 30}) std::printf("  L=%-8d", L);
  std::printf("\n");
  for (double rho : {-0.9, -0.5, 0.0, 0.5, 0.9, 0.99, 1.0}) {
    std::printf("%6.2f", rho);
    for (int L : {1, 2, 5, 10, 30}) std::printf("  %-10.6f", kernel_eval({g, L}, rho));
    std::printf("\n");
  }

  // The same kernel values as E[rho^{Z_L}] over a branching process.
  const auto mc = kernel_eval_via_branching({g, 5}, 0.9, 200000, 1);
  std::printf("\nK^(5)(0.9) = %.6f, branching estimate %.6f +- %.6f\n", kernel_eval({g, 5}, 0.9), mc.estimate,
              mc.stderr_);

  // How deep before 50 random points in R^200 are memorized with kappa = 0.2?
  const auto ds = sample_uniform_sphere(50, 200, 7);
  const auto r = memorization_depth(g, ds, 0.2);
  std::printf("memorization depth: exact %d, bounds [%g, %g], rho_max %.4f\n", *r.exact, r.lower, r.upper,
              ds.rho_max());
}
