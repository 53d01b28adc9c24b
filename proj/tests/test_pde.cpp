#include "doctest.h"
#include "rbno/pde.hpp"

#include <cmath>
#include <numbers>

using namespace rbno;

namespace {

Mat fd_residual_dy(const PdeProblem& p, const Vec& y, const Vec& x, double eps) {
  const Index d = p.dim();
  Mat out(d, d);
  for (Index j = 0; j < d; ++j) {
    Vec yp = y, ym = y;
    yp[j] += eps;
    ym[j] -= eps;
    out.col(j) = (residual(p, yp, x) - residual(p, ym, x)) / (2 * eps);
  }
  return out;
}

Mat fd_residual_dx(const PdeProblem& p, const Vec& y, const Vec& x, double eps) {
  const Index d = p.dim();
  Mat out(d, d);
  for (Index j = 0; j < d; ++j) {
    Vec xp = x, xm = x;
    xp[j] += eps;
    xm[j] -= eps;
    out.col(j) = (residual(p, y, xp) - residual(p, y, xm)) / (2 * eps);
  }
  return out;
}

// Mean relative error of 20 central-difference directional derivatives.
double directional_fd_error(const Benchmark& b, const Vec& x, std::uint64_t seed) {
  PdeProblem tight = b.problem;
  tight.newton_rtol = 1e-14;
  const Vec y = solve(tight, x);
  const Mat J = jacobian(tight, x, y);
  CounterRng rng(seed, 99);
  const double eps = 1e-5 * x.norm();
  double total = 0;
  for (int t = 0; t < 20; ++t) {
    Vec v = rng.normal_vector(x.size());
    v /= v.norm();
    const Vec fd = (solve(tight, Vec(x + eps * v), y) - solve(tight, Vec(x - eps * v), y)) / (2 * eps);
    const Vec jv = J * v;
    total += (fd - jv).norm() / jv.norm();
  }
  return total / 20;
}

}  // namespace

TEST_CASE("problem definitions") {
  const Mesh1D mesh = assemble_mesh(256);
  const PdeProblem s = make_semilinear(mesh);
  CHECK(s.c1[127] == doctest::Approx(1e-4));
  CHECK(s.c1[128] == doctest::Approx(1.01e-2));
  CHECK(s.dirichlet_dofs == std::vector<Index>{0});
  const PdeProblem b = make_burgers(mesh);
  CHECK(b.dirichlet_dofs == std::vector<Index>{0, 256});
  Index peak;
  b.c2.maxCoeff(&peak);
  CHECK(mesh.nodes[peak] == doctest::Approx(0.4).epsilon(1e-2));
  CHECK(b.c2[peak] == doctest::Approx(1.0 / (0.025 * std::sqrt(2 * std::numbers::pi))).epsilon(1e-3));
  CHECK(parse_problem("burgers") == ProblemKind::SteadyBurgers);
  CHECK_THROWS_AS(parse_problem("heat"), PreconditionError);
}

TEST_CASE("zero input gives the zero solution") {
  for (ProblemKind kind : {ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers}) {
    const Benchmark b = make_benchmark(kind, 64);
    const Vec zero = Vec::Zero(b.problem.dim());
    CHECK(residual(b.problem, zero, zero).norm() == 0.0);
    SolveStats stats;
    const Vec y = solve(b.problem, zero, &stats);
    CHECK(y.norm() == 0.0);
    CHECK(stats.iterations <= 1);
  }
}

TEST_CASE("residual partials match finite differences") {
  for (ProblemKind kind : {ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers}) {
    const Benchmark b = make_benchmark(kind, 32);
    CounterRng rng(4, 0);
    const Vec y = rng.normal_vector(b.problem.dim());
    const Vec x = rng.normal_vector(b.problem.dim());
    const Mat analytic = residual_dy(b.problem, y).dense();
    const Mat fd = fd_residual_dy(b.problem, y, x, 1e-6);
    CHECK((analytic - fd).norm() < 1e-6 * analytic.norm());
    const Mat dx = residual_dx(b.problem);
    CHECK((dx - fd_residual_dx(b.problem, y, x, 1e-6)).norm() < 1e-6 * dx.norm());
    for (Index dof : b.problem.dirichlet_dofs) CHECK(dx.row(dof).norm() == 0.0);
  }
}

TEST_CASE("semilinear manufactured ramp is recovered") {
  const Mesh1D mesh = assemble_mesh(256);
  const PdeProblem p = make_semilinear(mesh);
  const Vec ramp = mesh.nodes;
  // K_c1 y assembled densely as an independent check of the flux loop.
  Mat Kc = Mat::Zero(257, 257);
  for (int e = 0; e < 256; ++e) {
    const double k = p.c1[e] / mesh.h;
    Kc(e, e) += k;
    Kc(e + 1, e + 1) += k;
    Kc(e, e + 1) -= k;
    Kc(e + 1, e) -= k;
  }
  const Vec rhs = Kc * ramp + 0.1 * mesh.M * ramp.array().cube().matrix();
  const Vec x = mesh.M.ldlt().solve(rhs);
  const Vec y = solve(p, x);
  CHECK((y - ramp).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("manufactured smooth solution converges at second order") {
  std::vector<double> hs, errs;
  for (int n_el : {32, 64, 128}) {
    const Mesh1D mesh = assemble_mesh(n_el);
    const PdeProblem p = make_semilinear(mesh);
    // y = A + u^3 - 1.5 u^4 with u = s - 1/2: y(0) = 0, y'(1) = 0, and
    // y'(1/2) = y''(1/2) = 0 so flux and source stay continuous across the
    // coefficient jump.
    Vec exact(mesh.dim()), x(mesh.dim());
    for (Index i = 0; i < mesh.dim(); ++i) {
      const double u = mesh.nodes[i] - 0.5;
      exact[i] = 0.21875 + u * u * u - 1.5 * u * u * u * u;
      const double y2 = 6 * u - 18 * u * u;
      const double c1 = u <= 0 ? 1e-4 : 1e-4 + 0.01;
      x[i] = -c1 * y2 + 0.1 * std::pow(exact[i], 3);
    }
    const Vec e = solve(p, x) - exact;
    hs.push_back(mesh.h);
    errs.push_back(std::sqrt(e.dot(mesh.M * e)));
  }
  CHECK(loglog_slope(hs, errs) >= 1.9);
}

TEST_CASE("Burgers converges across 100 seeds") {
  const Benchmark b = make_benchmark(ProblemKind::SteadyBurgers, 256);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Sample s = generate_sample(b, seed, 0, kValues);
    CHECK(s.iterations <= 50);
    CHECK(residual(b.problem, s.y, s.x).norm() <= 1e-10 * (1 + (b.problem.mesh.M * s.x).norm()));
    CHECK(std::abs(s.y[0]) <= 1e-12);
    CHECK(std::abs(s.y[256]) <= 1e-12);
  }
}

TEST_CASE("Jacobians match directional finite differences") {
  for (ProblemKind kind : {ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers}) {
    const Benchmark b = make_benchmark(kind, 256);
    double mean_err = 0;
    for (std::uint64_t k = 0; k < 10; ++k) {
      const Sample s = generate_sample(b, 3, k, kValues);
      mean_err += directional_fd_error(b, s.x, k) / 10;
    }
    CHECK(mean_err < 1e-5);
  }
}

TEST_CASE("Jacobian structure") {
  const Benchmark b = make_benchmark(ProblemKind::SteadyBurgers, 64);
  const Sample s = generate_sample(b, 1, 0, kNodalJacobian | kWhitenedJacobian);
  CHECK(s.J.row(0).norm() == 0.0);
  CHECK(s.J.row(64).norm() == 0.0);
  CHECK((s.Jw - whitened_jacobian(b.problem, b.cov, s.y)).norm() < 1e-12 * s.Jw.norm());

  const Benchmark sb = make_benchmark(ProblemKind::SemilinearElliptic, 64);
  const Vec zero = Vec::Zero(65);
  const Mat J1 = jacobian(sb.problem, zero, zero), J2 = jacobian(sb.problem, zero, zero);
  CHECK((J1 - J2).norm() == 0.0);
  // At the zero state the map is linear: K_c1 J = M on free rows.
  const Mat lhs = residual_dy(sb.problem, zero).dense() * J1;
  Mat m = sb.problem.mesh.M;
  m.row(0).setZero();
  CHECK((lhs - m).norm() < 1e-10 * m.norm());
}

TEST_CASE("datasets are deterministic prefixes") {
  const Benchmark b = make_benchmark(ProblemKind::SemilinearElliptic, 64);
  const SampleSet a = generate_dataset(b, 4, 7), c = generate_dataset(b, 4, 7);
  CHECK((a.X - c.X).norm() == 0.0);
  CHECK((a.Y - c.Y).norm() == 0.0);
  for (int k = 0; k < 4; ++k) CHECK((a.J[k] - c.J[k]).norm() == 0.0);
  const SampleSet longer = generate_dataset(b, 6, 7, false);
  CHECK((longer.Y.leftCols(4) - a.Y).norm() == 0.0);
  CHECK_FALSE(longer.has_jacobians());
  CHECK_THROWS_AS(generate_dataset(b, 0, 7), PreconditionError);
  for (Index k = 0; k < 4; ++k) CHECK(a.J[k].row(0).norm() == 0.0);
}
