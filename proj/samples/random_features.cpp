// Approximating a depth-3 compositional kernel with a single layer of random
// features, on the sphere and with compressed Hermite activations.

#include <cmath>
#include <cstdio>

#include <compkern/compkern.hpp>

using namespace compkern;

int main() {
  const int n = 30, d = 8, L = 3;
  const auto ds = sample_uniform_sphere(n, d, 11);
  const auto relu = activations::builtin("relu");
  const Pgf g = dual_law(quadrature_coefficients(relu, 40), true, quadrature_second_moment(relu));
  const CompositionalKernel k{g, L};
  const auto K = build_kernel_matrix(g, ds, L).entries();

  // Sphere features: an activation whose dual kernel on S^{d-1} is K^{(L)}.
  const auto sigma_f = activation_from_kernel(legendre_expand([&](double t) { return kernel_eval(k, t); }, d, 80));
  // Hermite features: sqrt(P(Z_L = k)) coefficients, truncated at degree 6 and
  // noised with the dropped mass.
  const auto comp = compressed_activation(g, L, 6);
  const auto dec = truncation_decomposition(ds, k, 6);
  std::printf("truncation: dropped mass %.4f, remainder norm %.2e (bound %.2e)\n", dec.regularization_mass,
              dec.remainder_op_norm, dec.remainder_bound);

  // RMS error over pairs i != j. sigma_f peaks sharply at t = 1, so the
  // diagonal converges much more slowly than the rest.
  auto off_rms = [&](const Eigen::MatrixXd& G) {
    const Eigen::MatrixXd D = G - K;
    return std::sqrt((D.squaredNorm() - D.diagonal().squaredNorm()) / (n * (n - 1.0)));
  };
  std::printf("%8s  %14s  %14s\n", "m", "sphere err", "hermite err");
  for (Eigen::Index m : {1000, 10000, 100000}) {
    const auto A = legendre_features(ds, sigma_f, m, 1);
    const auto B = hermite_features(ds, comp.spec, m, 2, comp.tail_mass);
    std::printf("%8ld  %14.3e  %14.3e\n", static_cast<long>(m), off_rms(A.gram()), off_rms(B.gram()));
  }
}
