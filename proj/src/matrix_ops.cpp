#include "kmv/matrix_ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmv/errors.hpp"

namespace kmv {

namespace {

void require_square(const Matrix& A) {
  if (A.rows() != A.cols() || A.rows() == 0) throw ContractViolation("matrix must be square and non-empty");
  if (!A.allFinite()) throw ContractViolation("matrix has non-finite entries");
}

Eigen::SelfAdjointEigenSolver<Matrix> eig(const Matrix& A) {
  require_square(A);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(A));
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  return es;
}

}  // namespace

Matrix symmetrize(const Matrix& A) { return 0.5 * (A + A.transpose()); }

double hs_norm(const Matrix& A) { return A.norm(); }

Eigen::VectorXd spectrum(const Matrix& A) { return eig(A).eigenvalues(); }

Matrix spd_sqrt(const Matrix& A, double kappa0, double tol) {
  const auto es = eig(A);
  const double lo = es.eigenvalues().minCoeff();
  if (lo < kappa0 - tol || !(lo > 0.0)) {
    std::ostringstream os;
    os << "ellipticity violated: smallest eigenvalue " << lo << " below kappa0 = " << kappa0;
    throw EllipticityError(os.str());
  }
  const Eigen::VectorXd s = es.eigenvalues().cwiseSqrt();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

SqrtLipschitzRatio sqrt_lipschitz_check(const Matrix& A, const Matrix& Ap, double kappa0) {
  if (!(kappa0 > 0.0)) throw ContractViolation("kappa0 must be positive");
  if (A.rows() != Ap.rows() || A.cols() != Ap.cols()) throw ContractViolation("matrix size mismatch");
  const double den = hs_norm(symmetrize(A) - symmetrize(Ap));
  SqrtLipschitzRatio out;
  if (den == 0.0) {
    out.degenerate = true;
    return out;
  }
  const double num = hs_norm(spd_sqrt(A, kappa0) - spd_sqrt(Ap, kappa0));
  out.ratio = num * 2.0 * std::sqrt(kappa0) / den;
  return out;
}

Matrix ellipticity_project(const Matrix& A, double kappa0, double kappa1) {
  if (!(kappa0 > 0.0) || !(kappa1 >= kappa0)) throw ContractViolation("need 0 < kappa0 <= kappa1");
  const auto es = eig(A);
  const Eigen::VectorXd lam = es.eigenvalues();
  if (lam.minCoeff() >= kappa0 && lam.maxCoeff() <= kappa1) return symmetrize(A);
  const Eigen::VectorXd c = lam.cwiseMax(kappa0).cwiseMin(kappa1);
  return es.eigenvectors() * c.asDiagonal() * es.eigenvectors().transpose();
}

bool within_band(const Matrix& A, double kappa0, double kappa1, double tol) {
  const auto lam = spectrum(A);
  return lam.minCoeff() >= kappa0 - tol && lam.maxCoeff() <= kappa1 + tol;
}

}  // namespace kmv
