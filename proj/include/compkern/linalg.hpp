#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include <Eigen/Dense>

#include "errors.hpp"

namespace compkern {

inline constexpr Eigen::Index kDenseEigenLimit = 4096;

// Ascending eigenvalues of a symmetric matrix (lower triangle is read).
inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& A, Eigen::Index limit = kDenseEigenLimit) {
  require(A.rows() == A.cols(), "symmetric_eigenvalues: matrix must be square");
  if (A.rows() > limit)
    throw ValidationError("symmetric_eigenvalues: n = " + std::to_string(A.rows()) + " exceeds the dense limit " +
                          std::to_string(limit));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric_eigenvalues: eigensolver failed");
  return es.eigenvalues();
}

// Spectral norm of a symmetric matrix: dense solve up to the limit, power
// iteration on A^2 above it.
inline double symmetric_operator_norm(const Eigen::MatrixXd& A, Eigen::Index limit = kDenseEigenLimit) {
  if (A.rows() == 0) return 0.0;
  if (A.rows() <= limit) {
    const auto ev = symmetric_eigenvalues(A, limit);
    return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  }
  Eigen::VectorXd v = Eigen::VectorXd::Ones(A.rows()).normalized();
  double lam = 0.0;
  for (int it = 0; it < 1000; ++it) {
    Eigen::VectorXd w = A * (A * v);
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    const double next = std::sqrt(nw);
    w /= nw;
    v = w;
    if (std::abs(next - lam) <= 1e-12 * next) return next;
    lam = next;
  }
  return lam;
}

// Binary layout shared by every matrix export: uint64 header fields followed
// by row-major little-endian float64 data.
inline void write_binary_matrix(const std::string& path, const Eigen::MatrixXd& M, bool two_dim_header) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot open '" + path + "' for writing");
  const std::uint64_t n = static_cast<std::uint64_t>(M.rows()), m = static_cast<std::uint64_t>(M.cols());
  os.write(reinterpret_cast<const char*>(&n), 8);
  if (two_dim_header) os.write(reinterpret_cast<const char*>(&m), 8);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R = M;
  os.write(reinterpret_cast<const char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
  require(static_cast<bool>(os), "write failed for '" + path + "'");
}

inline Eigen::MatrixXd read_binary_matrix(const std::string& path, bool two_dim_header) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot open '" + path + "'");
  std::uint64_t n = 0, m = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  if (two_dim_header) is.read(reinterpret_cast<char*>(&m), 8);
  else m = n;
  require(static_cast<bool>(is), "'" + path + "': truncated header");
  require(n < (1ull << 32) && m < (1ull << 32), "'" + path + "': implausible dimensions");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> R(n, m);
  is.read(reinterpret_cast<char*>(R.data()), static_cast<std::streamsize>(sizeof(double) * R.size()));
  require(static_cast<bool>(is), "'" + path + "': truncated data");
  return R;
}

}  // namespace compkern
