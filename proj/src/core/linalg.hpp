// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <string_view>

namespace splitplot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
struct SymEigen {
  Vector values;
  Matrix vectors;  // column s belongs to values[s]
};

/// Symmetric eigendecomposition. Throws ErrorKind::structural when `m` is not
/// square or max|m - m^T| exceeds `tol`; the input is symmetrized before
/// decomposition.
SymEigen sym_eigen(const Matrix& m, double tol = 1e-10);

/// Lower Cholesky factor with positive diagonal. Throws
/// ErrorKind::factorization naming the first pivot that is not positive.
Matrix cholesky(const Matrix& m);

/// Moore-Penrose pseudoinverse; singular values below rank_tol * sigma_max
/// are treated as zero.
Matrix pseudo_inverse(const Matrix& m, double rank_tol = 1e-10);

double max_abs(const Matrix& m);
double asymmetry(const Matrix& m);
void require_finite(const Matrix& m, std::string_view what);

}  // namespace splitplot
