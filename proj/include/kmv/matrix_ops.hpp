#pragma once

#include <Eigen/Dense>

namespace kmv {

using Matrix = Eigen::MatrixXd;

inline constexpr double kEllipticityTol = 1e-12;

/// (A + A^T) / 2
Matrix symmetrize(const Matrix& A);

/// Hilbert-Schmidt (Frobenius) norm.
double hs_norm(const Matrix& A);

/// Spectrum of the symmetrized matrix, ascending.
Eigen::VectorXd spectrum(const Matrix& A);

/// Symmetric square root through the eigendecomposition of the symmetrized A.
/// Throws EllipticityError when the smallest eigenvalue is below kappa0 - tol
/// or not positive.
Matrix spd_sqrt(const Matrix& A, double kappa0 = 0.0, double tol = kEllipticityTol);

struct SqrtLipschitzRatio {
  double ratio = 0.0;
  /// A == A', nothing to compare.
  bool degenerate = false;
};

/// ||sqrt(A) - sqrt(A')||_HS * 2 sqrt(kappa0) / ||A - A'||_HS, which is <= 1
/// whenever both spectra lie above kappa0.
SqrtLipschitzRatio sqrt_lipschitz_check(const Matrix& A, const Matrix& Ap, double kappa0);

/// Clamps the eigenvalues of the symmetrized A into [kappa0, kappa1].
Matrix ellipticity_project(const Matrix& A, double kappa0, double kappa1);

/// kappa0 <= min eig and max eig <= kappa1 up to tol.
bool within_band(const Matrix& A, double kappa0, double kappa1, double tol = 1e-10);

}  // namespace kmv
