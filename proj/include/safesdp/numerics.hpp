#pragma once

// Dense symmetric linear algebra shared by the SDP builder, the ADMM solver
// and the certificate code.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#ifdef SAFESDP_USE_LAPACKE
#include <lapacke.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace safesdp {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when an input carries NaN/Inf entries.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a factorization cannot proceed; carries the smallest
/// eigenvalue estimate of the offending matrix.
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, double lambda_min)
      : std::runtime_error(what + " (lambda_min estimate " +
                           std::to_string(lambda_min) + ")"),
        lambda_min_(lambda_min) {}
  double lambda_min() const { return lambda_min_; }

 private:
  double lambda_min_;
};

/// Symmetric matrix with a single logical copy of each off-diagonal pair.
/// Writes always go through set/add, which keep (i,j) and (j,i) equal.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Index order) : m_(Matrix::Zero(order, order)) {
    if (order < 1) throw InvalidInput("SymMatrix order must be >= 1");
  }

  /// Takes the symmetric part of `m`, so the stored matrix is exactly
  /// symmetric even if `m` was only approximately so.
  static SymMatrix from_dense(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() < 1)
      throw InvalidInput("SymMatrix::from_dense: matrix must be square");
    SymMatrix s;
    s.m_ = 0.5 * (m + m.transpose());
    return s;
  }
  static SymMatrix identity(Index order) {
    SymMatrix s(order);
    s.m_.setIdentity();
    return s;
  }
  static SymMatrix diagonal(const Vector& d) {
    SymMatrix s(d.size());
    s.m_.diagonal() = d;
    return s;
  }

  Index order() const { return m_.rows(); }
  double operator()(Index i, Index j) const { return m_(i, j); }
  void set(Index i, Index j, double v) {
    m_(i, j) = v;
    m_(j, i) = v;
  }
  /// Adds v to (i,j) and, when off-diagonal, to (j,i).
  void add(Index i, Index j, double v) {
    m_(i, j) += v;
    if (i != j) m_(j, i) += v;
  }
  void set_zero() { m_.setZero(); }

  const Matrix& dense() const { return m_; }

  bool all_finite() const { return m_.allFinite(); }
  double trace() const { return m_.trace(); }
  double frobenius_norm() const { return m_.norm(); }
  double max_abs() const { return m_.cwiseAbs().maxCoeff(); }

  SymMatrix& operator+=(const SymMatrix& o) {
    m_ += o.m_;
    return *this;
  }
  SymMatrix& operator-=(const SymMatrix& o) {
    m_ -= o.m_;
    return *this;
  }
  SymMatrix& operator*=(double s) {
    m_ *= s;
    return *this;
  }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator-(SymMatrix a, const SymMatrix& b) { return a -= b; }
  friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }
  friend SymMatrix operator-(SymMatrix a) { return a *= -1.0; }

 private:
  Matrix m_;
};

/// Frobenius inner product <A, B> = sum_ij A_ij B_ij.
inline double inner(const SymMatrix& a, const SymMatrix& b) {
  return a.dense().cwiseProduct(b.dense()).sum();
}

struct EigDecomposition {
  Matrix Q;       // columns are eigenvectors
  Vector lambda;  // ascending
};

#ifdef SAFESDP_USE_LAPACKE
namespace detail {
// Some BLAS builds pick a faulty kernel for the host CPU and return wrong
// eigenvectors above a size threshold. Checked once per process on a fixed
// matrix; on failure every call goes to Eigen instead.
inline bool lapack_eig_ok() {
  static const bool ok = [] {
    const lapack_int n = 200;
    Matrix a(n, n);
    for (lapack_int i = 0; i < n; ++i)
      for (lapack_int j = 0; j <= i; ++j) a(i, j) = a(j, i) = std::sin(0.37 * i + 1.91 * j + 0.05 * i * j);
    Matrix q = a;
    Vector w(n);
    if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, q.data(), n, w.data()) != 0) return false;
    const double err = (q * w.asDiagonal() * q.transpose() - a).norm();
    return std::isfinite(err) && err <= 1e-9 * a.norm();
  }();
  return ok;
}
}  // namespace detail
#endif

/// Full eigendecomposition with eigenvalues in ascending order.
inline EigDecomposition sym_eig(const SymMatrix& m) {
  if (!m.all_finite()) throw InvalidInput("sym_eig: non-finite entries");
#ifdef SAFESDP_USE_LAPACKE
  if (detail::lapack_eig_ok()) {
    const auto n = static_cast<lapack_int>(m.order());
    EigDecomposition e{m.dense(), Vector(m.order())};
    if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, e.Q.data(), n, e.lambda.data()) != 0)
      throw SolverFailure("sym_eig: eigensolver did not converge", NAN);
    return e;
  }
#endif
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.dense());
  if (es.info() != Eigen::Success)
    throw SolverFailure("sym_eig: eigensolver did not converge", NAN);
  // Eigen already sorts ascending; ties keep the solver's order.
  return {es.eigenvectors(), es.eigenvalues()};
}

/// Smallest eigenvalue only.
inline double lambda_min(const SymMatrix& m) {
  if (!m.all_finite()) throw InvalidInput("lambda_min: non-finite entries");
#ifdef SAFESDP_USE_LAPACKE
  if (detail::lapack_eig_ok()) {
    const auto n = static_cast<lapack_int>(m.order());
    Matrix a = m.dense();
    Vector w(m.order());
    if (LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', n, a.data(), n, w.data()) != 0)
      throw SolverFailure("lambda_min: eigensolver did not converge", NAN);
    return w(0);
  }
#endif
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.dense(), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Nearest PSD matrix in Frobenius norm: clip negative eigenvalues to zero.
inline SymMatrix psd_project(const SymMatrix& m) {
  const EigDecomposition e = sym_eig(m);
  const Vector pos = e.lambda.cwiseMax(0.0);
  // Q diag(pos) Q^T, only the columns with a positive weight contribute.
  Index first = 0;
  while (first < pos.size() && pos(first) == 0.0) ++first;
  const Index k = pos.size() - first;
  if (k == 0) return SymMatrix(m.order());
  const auto qk = e.Q.rightCols(k);
  const Matrix scaled = qk * pos.tail(k).asDiagonal();
  return SymMatrix::from_dense(scaled * qk.transpose());
}

/// Cholesky factor of K + r I with r = 1e-10 * tr(K) / order. Reusable for
/// many right-hand sides.
class SpdFactor {
 public:
  SpdFactor() = default;
  explicit SpdFactor(const SymMatrix& k) { factor(k); }

  void factor(const SymMatrix& k) {
    if (!k.all_finite()) throw InvalidInput("spd_solve: non-finite entries");
    const Index n = k.order();
    reg_ = 1e-10 * std::abs(k.trace()) / static_cast<double>(n);
    Matrix kr = k.dense();
    kr.diagonal().array() += reg_;
    llt_.compute(kr);
    if (llt_.info() != Eigen::Success)
      throw SolverFailure("spd_solve: matrix not positive definite",
                          lambda_min(SymMatrix::from_dense(kr)));
    // LLT does not flag every indefinite input; a non-positive pivot shows up
    // as a non-positive (or NaN) diagonal entry of L.
    const Vector piv = llt_.matrixLLT().diagonal();
    if (!(piv.minCoeff() > 0.0) || !piv.allFinite())
      throw SolverFailure("spd_solve: matrix not positive definite",
                          lambda_min(SymMatrix::from_dense(kr)));
    n_ = n;
  }

  Vector solve(const Vector& rhs) const {
    if (rhs.size() != n_) throw InvalidInput("spd_solve: rhs size mismatch");
    return llt_.solve(rhs);
  }

  Index order() const { return n_; }
  double regularization() const { return reg_; }

 private:
  Eigen::LLT<Matrix> llt_;
  Index n_ = 0;
  double reg_ = 0.0;
};

inline Vector spd_solve(const SymMatrix& k, const Vector& rhs) {
  SpdFactor f(k);
  Vector x = f.solve(rhs);
#ifndef NDEBUG
  const double res = (k.dense() * x - rhs).norm();
  // The diagonal shift itself contributes reg * |x| to the residual.
  if (res > 1e-8 * rhs.norm() + 2.0 * f.regularization() * x.norm())
    throw SolverFailure("spd_solve: residual check failed", lambda_min(k));
#endif
  return x;
}

}  // namespace safesdp
