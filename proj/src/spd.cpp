#include "parbci/spd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace parbci {

namespace {

using Eigen::SelfAdjointEigenSolver;

template <typename F>
Matrix spectral_apply(const Matrix& sym, F f) {
  SelfAdjointEigenSolver<Matrix> es(sym);
  Vector d = es.eigenvalues().unaryExpr(f);
  Matrix out = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

void require_same_dim(const SpdMatrix& a, const SpdMatrix& b, const char* op) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << op << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    throw std::invalid_argument(os.str());
  }
}

// Lexicographic order on entries; used to make the distance exactly symmetric.
bool entries_less(const Matrix& x, const Matrix& y) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x.data()[i] < y.data()[i]) return true;
    if (x.data()[i] > y.data()[i]) return false;
  }
  return false;
}

} // namespace

SpdMatrix::SpdMatrix(const Matrix& entries) {
  if (entries.rows() == 0 || entries.rows() != entries.cols()) {
    throw std::invalid_argument("SpdMatrix: matrix must be square and non-empty");
  }
  if (!entries.allFinite()) {
    throw std::invalid_argument("SpdMatrix: non-finite entry");
  }
  const double asym = (entries - entries.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTol) {
    std::ostringstream os;
    os << "SpdMatrix: not symmetric (max asymmetry " << asym << ")";
    throw std::invalid_argument(os.str());
  }
  m_ = 0.5 * (entries + entries.transpose());
  SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
  min_eig_ = es.eigenvalues().minCoeff();
  max_eig_ = es.eigenvalues().maxCoeff();
  if (!(min_eig_ > 0.0) || min_eig_ < kEigenFloor * max_eig_) {
    std::ostringstream os;
    os << "SpdMatrix: not positive definite (smallest eigenvalue " << min_eig_
       << ", largest " << max_eig_ << ")";
    throw std::invalid_argument(os.str());
  }
}

SpdMatrix SpdMatrix::identity(int dim) {
  return SpdMatrix(Matrix::Identity(dim, dim));
}

SpdMatrix SpdMatrix::diagonal(std::span<const double> values) {
  Vector d(static_cast<Eigen::Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) d(static_cast<Eigen::Index>(i)) = values[i];
  return SpdMatrix(Matrix(d.asDiagonal()));
}

bool SpdMatrix::operator==(const SpdMatrix& other) const {
  return dim() == other.dim() && m_ == other.m_;
}

Matrix spd_sqrt(const SpdMatrix& a) {
  return spectral_apply(a.entries(), [](double x) { return std::sqrt(x); });
}

Matrix spd_inv_sqrt(const SpdMatrix& a) {
  return spectral_apply(a.entries(), [](double x) { return 1.0 / std::sqrt(x); });
}

Matrix spd_log(const SpdMatrix& a) {
  return spectral_apply(a.entries(), [](double x) { return std::log(x); });
}

Matrix spd_pow(const SpdMatrix& a, double t) {
  return spectral_apply(a.entries(), [t](double x) { return std::pow(x, t); });
}

Matrix sym_exp(const Matrix& s) {
  return spectral_apply(0.5 * (s + s.transpose()), [](double x) { return std::exp(x); });
}

Matrix sym_log(const Matrix& s) {
  return spectral_apply(0.5 * (s + s.transpose()), [](double x) { return std::log(x); });
}

double riemannian_distance(const SpdMatrix& a, const SpdMatrix& b) {
  require_same_dim(a, b, "riemannian_distance");
  if (a == b) return 0.0;
  const SpdMatrix& first = entries_less(b.entries(), a.entries()) ? b : a;
  const SpdMatrix& second = (&first == &a) ? b : a;
  const Matrix w = spd_inv_sqrt(first);
  Matrix c = w * second.entries() * w;
  c = 0.5 * (c + c.transpose());
  SelfAdjointEigenSolver<Matrix> es(c, Eigen::EigenvaluesOnly);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double l = std::log(es.eigenvalues()(i));
    acc += l * l;
  }
  return std::sqrt(acc);
}

SpdMatrix geodesic(const SpdMatrix& a, const SpdMatrix& b, double t) {
  require_same_dim(a, b, "geodesic");
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::invalid_argument("geodesic: t must lie in [0, 1]");
  }
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const Matrix h = spd_sqrt(a);
  const Matrix hi = spd_inv_sqrt(a);
  Matrix inner = hi * b.entries() * hi;
  inner = spectral_apply(0.5 * (inner + inner.transpose()),
                         [t](double x) { return std::pow(x, t); });
  Matrix p = h * inner * h;
  return SpdMatrix(0.5 * (p + p.transpose()));
}

SpdMatrix frechet_mean(std::span<const SpdMatrix> ms, std::span<const double> weights,
                       FrechetOptions opt) {
  if (ms.empty()) throw std::invalid_argument("frechet_mean: empty input");
  if (!weights.empty() && weights.size() != ms.size()) {
    throw std::invalid_argument("frechet_mean: weights/matrices length mismatch");
  }
  const int n = ms.front().dim();
  for (const auto& m : ms) require_same_dim(ms.front(), m, "frechet_mean");

  std::vector<double> w(ms.size(), 1.0);
  if (!weights.empty()) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] >= 0.0)) throw std::invalid_argument("frechet_mean: negative weight");
      w[i] = weights[i];
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(total > 0.0)) throw std::invalid_argument("frechet_mean: weights sum to zero");
  for (double& x : w) x /= total;

  Matrix x0 = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < ms.size(); ++i) x0 += w[i] * ms[i].entries();
  SpdMatrix x(x0);

  double residual = 0.0;
  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    const Matrix h = spd_sqrt(x);
    const Matrix hi = spd_inv_sqrt(x);
    Matrix tangent = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < ms.size(); ++i) {
      if (w[i] == 0.0) continue;
      tangent += w[i] * sym_log(hi * ms[i].entries() * hi);
    }
    residual = tangent.norm();
    if (residual < opt.tol) return x;
    if (iter == opt.max_iter) break;
    Matrix next = h * sym_exp(tangent) * h;
    x = SpdMatrix(0.5 * (next + next.transpose()));
  }
  std::ostringstream os;
  os << "frechet_mean: no convergence after " << opt.max_iter << " iterations (residual "
     << residual << ")";
  throw ConvergenceError(os.str(), x, residual);
}

} // namespace parbci
