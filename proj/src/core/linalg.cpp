// SPDX-License-Identifier: Apache-2.0
#include "core/linalg.hpp"

#include "core/error.hpp"

#include <cmath>
#include <string>

namespace splitplot {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::structural: return "structural";
    case ErrorKind::factorization: return "factorization";
    case ErrorKind::invalid_dimension: return "invalid-dimension";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::invalid_tuple: return "invalid-tuple";
    case ErrorKind::enumeration_cap: return "enumeration-cap";
    case ErrorKind::invalid_design: return "invalid-design";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::domain: return "domain";
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double asymmetry(const Matrix& m) {
  if (m.rows() != m.cols()) fail(ErrorKind::structural, "asymmetry: matrix is not square");
  return max_abs(m - m.transpose());
}

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) fail(ErrorKind::domain, std::string(what) + ": matrix has non-finite entries");
}

SymEigen sym_eigen(const Matrix& m, double tol) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    fail(ErrorKind::structural, "sym_eigen: expected a non-empty square matrix, got " + std::to_string(m.rows()) +
                                    "x" + std::to_string(m.cols()));
  }
  require_finite(m, "sym_eigen");
  const double defect = asymmetry(m);
  if (defect > tol) {
    fail(ErrorKind::structural, "sym_eigen: matrix asymmetric beyond tolerance (max defect " +
                                    std::to_string(defect) + ")");
  }
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) fail(ErrorKind::structural, "sym_eigen: eigensolver did not converge");

  // Eigen returns ascending order.
  const Eigen::Index n = sym.rows();
  SymEigen out{Vector(n), Matrix(n, n)};
  for (Eigen::Index s = 0; s < n; ++s) {
    out.values[s] = solver.eigenvalues()[n - 1 - s];
    out.vectors.col(s) = solver.eigenvectors().col(n - 1 - s);
  }
  return out;
}

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols() || m.rows() == 0) fail(ErrorKind::structural, "cholesky: expected a non-empty square matrix");
  require_finite(m, "cholesky");
  const double scale = std::max(1.0, max_abs(m));
  if (asymmetry(m) > 1e-10 * scale) fail(ErrorKind::structural, "cholesky: matrix is not symmetric");

  const Eigen::Index n = m.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double pivot = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(pivot > 0.0)) {
      fail(ErrorKind::factorization, "cholesky: matrix is not positive definite (pivot " + std::to_string(j) +
                                         " = " + std::to_string(pivot) + ")");
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    const Eigen::Index below = n - j - 1;
    if (below > 0) {
      l.col(j).tail(below) =
          (m.col(j).tail(below) - l.block(j + 1, 0, below, j) * l.row(j).head(j).transpose()) / ljj;
    }
  }
  return l;
}

Matrix pseudo_inverse(const Matrix& m, double rank_tol) {
  require_finite(m, "pseudo_inverse");
  if (m.size() == 0) return Matrix(m.cols(), m.rows());
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff = rank_tol * (sv.size() > 0 ? sv[0] : 0.0);
  Vector inv = Vector::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > cutoff && sv[i] > 0.0) inv[i] = 1.0 / sv[i];
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace splitplot
