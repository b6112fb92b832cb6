#pragma once

#include <Eigen/Dense>

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace parbci {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Symmetric positive-definite matrix. Construction validates:
// - square, finite entries
// - max |a_ij - a_ji| <= 1e-9
// - smallest eigenvalue > 1e-12 * largest eigenvalue (and > 0)
// The stored entries are the symmetrized input 0.5 * (A + A^T).
class SpdMatrix {
public:
  static constexpr double kSymmetryTol = 1e-9;
  static constexpr double kEigenFloor = 1e-12;

  explicit SpdMatrix(const Matrix& entries);

  static SpdMatrix identity(int dim);
  static SpdMatrix diagonal(std::span<const double> values);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& entries() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  double min_eigenvalue() const { return min_eig_; }
  double max_eigenvalue() const { return max_eig_; }

  // Exact entry-wise equality.
  bool operator==(const SpdMatrix& other) const;

private:
  Matrix m_;
  double min_eig_{0.0};
  double max_eig_{0.0};
};

// Thrown by frechet_mean when the Karcher iteration does not reach `tol`.
class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, SpdMatrix last_iterate, double residual)
    : std::runtime_error(what), last_(std::move(last_iterate)), residual_(residual) {}

  const SpdMatrix& last_iterate() const { return last_; }
  double residual() const { return residual_; }

private:
  SpdMatrix last_;
  double residual_;
};

// Spectral functions f(A) = V f(L) V^T.
Matrix spd_sqrt(const SpdMatrix& a);
Matrix spd_inv_sqrt(const SpdMatrix& a);
Matrix spd_log(const SpdMatrix& a);
Matrix spd_pow(const SpdMatrix& a, double t);
// Exponential of a symmetric (not necessarily definite) matrix.
Matrix sym_exp(const Matrix& s);
// Logarithm of a symmetric matrix assumed positive definite; no validation.
Matrix sym_log(const Matrix& s);

// Affine-invariant distance ||log(A^-1/2 B A^-1/2)||_F.
double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b);

// Point at fraction t along the geodesic from a (t = 0) to b (t = 1).
SpdMatrix geodesic(const SpdMatrix& a, const SpdMatrix& b, double t);

struct FrechetOptions {
  double tol{1e-8};
  int max_iter{50};
};

// Weighted Karcher mean. Weights are normalized internally; an empty
// `weights` span means uniform weights.
SpdMatrix frechet_mean(std::span<const SpdMatrix> ms,
                       std::span<const double> weights = {},
                       FrechetOptions opt = {});

} // namespace parbci
