#include "rbno/field.hpp"

#include <cmath>

namespace rbno {

Mesh1D assemble_mesh(int n_el) {
  require(n_el >= 2, "assemble_mesh needs n_el >= 2");
  Mesh1D mesh;
  mesh.n_el = n_el;
  mesh.h = 1.0 / n_el;
  const Index d = n_el + 1;
  mesh.nodes = Vec::LinSpaced(d, 0.0, 1.0);
  mesh.M = Mat::Zero(d, d);
  mesh.K = Mat::Zero(d, d);
  const double h = mesh.h;
  for (Index e = 0; e < n_el; ++e) {
    const Index a = e, b = e + 1;
    mesh.M(a, a) += h / 3.0;
    mesh.M(b, b) += h / 3.0;
    mesh.M(a, b) += h / 6.0;
    mesh.M(b, a) += h / 6.0;
    mesh.K(a, a) += 1.0 / h;
    mesh.K(b, b) += 1.0 / h;
    mesh.K(a, b) -= 1.0 / h;
    mesh.K(b, a) -= 1.0 / h;
  }
  mesh.mass_diag = mesh.M.diagonal();
  mesh.mass_lower = mesh.M.diagonal(-1);
  mesh.chol_diag.resize(d);
  mesh.chol_lower.resize(d - 1);
  mesh.chol_diag[0] = std::sqrt(mesh.mass_diag[0]);
  for (Index i = 0; i + 1 < d; ++i) {
    mesh.chol_lower[i] = mesh.mass_lower[i] / mesh.chol_diag[i];
    mesh.chol_diag[i + 1] = std::sqrt(mesh.mass_diag[i + 1] - mesh.chol_lower[i] * mesh.chol_lower[i]);
  }
  const SpdRoots roots = spd_roots(mesh.M);
  mesh.sqrt_mass = roots.sqrt;
  mesh.inv_sqrt_mass = roots.inv_sqrt;
  return mesh;
}

Mat Mesh1D::mass_apply(const Mat& x) const {
  require(x.rows() == dim(), "mass_apply dimension mismatch");
  const Index d = dim();
  Mat y = mass_diag.asDiagonal() * x;
  y.topRows(d - 1) += mass_lower.asDiagonal() * x.bottomRows(d - 1);
  y.bottomRows(d - 1) += mass_lower.asDiagonal() * x.topRows(d - 1);
  return y;
}

Mat Mesh1D::chol_t_apply(const Mat& x) const {
  require(x.rows() == dim(), "chol_t_apply dimension mismatch");
  const Index d = dim();
  Mat y = chol_diag.asDiagonal() * x;
  y.topRows(d - 1) += chol_lower.asDiagonal() * x.bottomRows(d - 1);
  return y;
}

double Mesh1D::mass_frobenius2(const Mat& x) const {
  require(x.rows() == dim(), "mass_frobenius2 dimension mismatch");
  const Index d = dim();
  double diag_part = (mass_diag.asDiagonal() * x.cwiseAbs2()).sum();
  double off_part = (mass_lower.asDiagonal() * x.topRows(d - 1).cwiseProduct(x.bottomRows(d - 1))).sum();
  return diag_part + 2.0 * off_part;
}

SpectralCovariance build_covariance(const Mesh1D& mesh, double a_delta, double a_I, double alpha) {
  require(a_delta > 0 && a_I > 0 && alpha > 0, "covariance coefficients must be positive");
  SpectralCovariance cov;
  cov.mesh = mesh;
  cov.a_delta = a_delta;
  cov.a_I = a_I;
  cov.alpha = alpha;
  const Mat A = a_delta * mesh.K + a_I * mesh.M;
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> solver(A, mesh.M);
  if (solver.info() != Eigen::Success)
    throw NumericalError("generalized eigensolver did not converge for the covariance");
  // Eigen sorts ascending in rho, which is descending in mu.
  cov.rho = solver.eigenvalues();
  cov.Phi = solver.eigenvectors();
  const Index d = cov.rho.size();
  cov.mu.resize(d);
  for (Index i = 0; i < d; ++i) {
    if (cov.rho[i] <= 0) throw NumericalError("covariance operator is not positive definite");
    cov.mu[i] = std::pow(cov.rho[i], -alpha);
    fix_sign(cov.Phi.col(i));
  }
  const Vec sqrt_mu = cov.mu.cwiseSqrt();
  cov.S_ = cov.Phi * sqrt_mu.asDiagonal();
  cov.S_inv_ = sqrt_mu.cwiseInverse().asDiagonal() * cov.Phi.transpose() * mesh.M;
  return cov;
}

Vec whiten(const SpectralCovariance& cov, const Vec& x) {
  require(x.size() == cov.dim(), "whiten dimension mismatch");
  return cov.whiten_matrix() * x;
}

Vec unwhiten(const SpectralCovariance& cov, const Vec& xi) {
  require(xi.size() == cov.dim(), "unwhiten dimension mismatch");
  return cov.unwhiten_matrix() * xi;
}

double cm_inner(const SpectralCovariance& cov, const Vec& w1, const Vec& w2) {
  return whiten(cov, w1).dot(whiten(cov, w2));
}

Vec sample_field(const SpectralCovariance& cov, CounterRng& rng) {
  return unwhiten(cov, rng.normal_vector(cov.dim()));
}

}  // namespace rbno
