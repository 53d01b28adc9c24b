#pragma once

#include "rbno/core.hpp"

namespace rbno {

/// Uniform 1D linear finite element mesh on [0, 1].
struct Mesh1D {
  int n_el = 0;
  double h = 0.0;
  Vec nodes;
  Mat M;  // consistent mass matrix
  Mat K;  // stiffness matrix, no boundary conditions
  Vec mass_lower, mass_diag;  // bands of M
  Vec chol_lower, chol_diag;  // bands of the bidiagonal factor L, M = L L^T
  Mat sqrt_mass, inv_sqrt_mass;  // symmetric M^(1/2) and M^(-1/2)

  Index dim() const { return nodes.size(); }
  /// M X using the bands.
  Mat mass_apply(const Mat& x) const;
  /// L^T X, so that tr(X^T M X) = ||L^T X||_F^2.
  Mat chol_t_apply(const Mat& x) const;
  /// tr(X^T M X).
  double mass_frobenius2(const Mat& x) const;
};

Mesh1D assemble_mesh(int n_el);

/// Gaussian measure N(0, (a_delta K + a_I M)^(-alpha)) in spectral form.
struct SpectralCovariance {
  Mesh1D mesh;
  double a_delta = 0, a_I = 0, alpha = 0;
  Mat Phi;  // M-orthonormal eigenvectors, columns ordered by descending mu
  Vec rho;  // operator eigenvalues, ascending
  Vec mu;   // covariance eigenvalues rho^(-alpha), descending

  Index dim() const { return mu.size(); }

  /// S = Phi diag(sqrt(mu)): maps whitened coordinates to nodal fields.
  const Mat& unwhiten_matrix() const { return S_; }
  /// S^+ = diag(mu^(-1/2)) Phi^T M: maps nodal fields to whitened coordinates.
  const Mat& whiten_matrix() const { return S_inv_; }

  Mat S_, S_inv_;
};

SpectralCovariance build_covariance(const Mesh1D& mesh, double a_delta, double a_I, double alpha);

Vec whiten(const SpectralCovariance& cov, const Vec& x);
Vec unwhiten(const SpectralCovariance& cov, const Vec& xi);
/// Cameron-Martin inner product of two nodal fields.
double cm_inner(const SpectralCovariance& cov, const Vec& w1, const Vec& w2);

/// Draws x = sum_i sqrt(mu_i) xi_i phi_i with xi from `rng`.
Vec sample_field(const SpectralCovariance& cov, CounterRng& rng);

}  // namespace rbno
