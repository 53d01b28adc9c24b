#include "doctest.h"
#include "rbno/field.hpp"

#include <cmath>

using namespace rbno;

TEST_CASE("two-element mesh matrices") {
  const Mesh1D m = assemble_mesh(2);
  Mat M(3, 3), K(3, 3);
  M << 1.0 / 3, 1.0 / 6, 0, 1.0 / 6, 2.0 / 3, 1.0 / 6, 0, 1.0 / 6, 1.0 / 3;
  M *= 0.5;
  K << 2, -2, 0, -2, 4, -2, 0, -2, 2;
  CHECK((m.M - M).norm() < 1e-15);
  CHECK((m.K - K).norm() < 1e-14);
  CHECK_THROWS_AS(assemble_mesh(1), PreconditionError);
}

TEST_CASE("mesh invariants at full size") {
  const Mesh1D m = assemble_mesh(256);
  CHECK(m.dim() == 257);
  CHECK(std::abs(m.M.sum() - 1.0) < 1e-12);
  CHECK(m.K.rowwise().sum().cwiseAbs().maxCoeff() < 1e-9);
  Mat x = Mat::Random(257, 3);
  CHECK((m.mass_apply(x) - m.M * x).norm() < 1e-14);
  CHECK(m.mass_frobenius2(x) == doctest::Approx((x.transpose() * m.M * x).trace()).epsilon(1e-13));
  CHECK((m.sqrt_mass * m.sqrt_mass - m.M).norm() < 1e-13);
  const Mat lt = m.chol_t_apply(x);
  CHECK((lt.transpose() * lt - x.transpose() * m.M * x).norm() < 1e-13);
}

TEST_CASE("spectral covariance invariants") {
  const Mesh1D mesh = assemble_mesh(256);
  const SpectralCovariance cov = build_covariance(mesh, 2.0, 10.0, 1.0);
  const Index d = cov.dim();
  CHECK((cov.Phi.transpose() * mesh.M * cov.Phi - Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(cov.mu.minCoeff() > 0);
  for (Index i = 1; i < d; ++i) CHECK(cov.mu[i] <= cov.mu[i - 1]);
  // alpha = 1: the assembled inverse operator reproduces mu_i phi_i.
  const Mat A = 2.0 * mesh.K + 10.0 * mesh.M;
  const Mat applied = A.ldlt().solve(mesh.M * cov.Phi);
  for (Index i = 0; i < d; ++i) {
    const Vec expect = cov.mu[i] * cov.Phi.col(i);
    CHECK((applied.col(i) - expect).norm() <= 1e-8 * expect.norm());
  }
  for (Index i = 0; i < d; ++i) {
    const double top = cov.Phi.col(i).cwiseAbs().maxCoeff();
    Index arg = 0;
    while (std::abs(cov.Phi(arg, i)) < top * (1.0 - 1e-9)) ++arg;
    CHECK(cov.Phi(arg, i) > 0);
  }
  std::vector<double> idx, vals;
  for (Index i = 20; i <= 200; ++i) {
    idx.push_back(static_cast<double>(i));
    vals.push_back(cov.mu[i - 1]);
  }
  const double slope = loglog_slope(idx, vals);
  CHECK(slope > -2.3);
  CHECK(slope < -1.7);
  CHECK_THROWS_AS(build_covariance(mesh, 0.0, 10.0, 1.0), PreconditionError);
  CHECK_THROWS_AS(build_covariance(mesh, 2.0, -1.0, 1.0), PreconditionError);
}

TEST_CASE("whitening and Cameron-Martin inner products") {
  const Mesh1D mesh = assemble_mesh(64);
  const SpectralCovariance cov = build_covariance(mesh, 10.0, 20.0, 1.0);
  const Index d = cov.dim();
  CounterRng rng(5, 0);
  const Vec xi = rng.normal_vector(d);
  CHECK((whiten(cov, unwhiten(cov, xi)) - xi).norm() < 1e-10 * xi.norm());
  CHECK(cm_inner(cov, cov.Phi.col(0), cov.Phi.col(0)) == doctest::Approx(1.0 / cov.mu[0]).epsilon(1e-10));

  const Vec w1 = rng.normal_vector(d), w2 = rng.normal_vector(d);
  const Mat C = cov.Phi * cov.mu.asDiagonal() * cov.Phi.transpose() * mesh.M;
  const double brute = w1.dot(mesh.M * C.lu().solve(w2));
  CHECK(cm_inner(cov, w1, w2) == doctest::Approx(brute).epsilon(1e-8));
  // For alpha = 1 the Cameron-Martin form is the operator's energy form.
  const Mat A = 10.0 * mesh.K + 20.0 * mesh.M;
  CHECK(cm_inner(cov, w1, w2) == doctest::Approx(w1.dot(A * w2)).epsilon(1e-8));
  // Parseval against the independent energy form.
  const Vec x = rng.normal_vector(d);
  CHECK(whiten(cov, x).squaredNorm() == doctest::Approx(x.dot(A * x)).epsilon(1e-9));
}

TEST_CASE("sampling") {
  const Mesh1D mesh = assemble_mesh(64);
  const SpectralCovariance cov = build_covariance(mesh, 2.0, 10.0, 1.0);
  const Index d = cov.dim();
  CHECK(unwhiten(cov, Vec::Zero(d)).norm() == 0.0);
  CHECK((unwhiten(cov, Vec::Unit(d, 0)) - std::sqrt(cov.mu[0]) * cov.Phi.col(0)).norm() < 1e-14);

  CounterRng a(9, 1), b(9, 1);
  CHECK((sample_field(cov, a) - sample_field(cov, b)).norm() == 0.0);

  // Variance along the leading mode.
  const Vec probe = mesh.M * cov.Phi.col(0);
  const int n = 50000;
  double s = 0, s2 = 0;
  Vec mean = Vec::Zero(d);
  CounterRng rng(21, 0);
  for (int k = 0; k < n; ++k) {
    const Vec x = sample_field(cov, rng);
    const double c = probe.dot(x);
    s += c * c;
    s2 += c * c * c * c;
    if (k < 10000) mean += x;
  }
  const double m1 = s / n, se = std::sqrt((s2 / n - m1 * m1) / n);
  CHECK(std::abs(m1 - cov.mu[0]) < 3 * se);
  mean /= 10000.0;
  CHECK(std::sqrt(mean.dot(mesh.M * mean)) < 5 * std::sqrt(cov.mu.sum() / 10000.0));
}
