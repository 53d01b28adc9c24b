#include "rbno/pde.hpp"

#include <cmath>
#include <numbers>

namespace rbno {

std::string problem_name(ProblemKind kind) {
  return kind == ProblemKind::SemilinearElliptic ? "semilinear" : "burgers";
}

ProblemKind parse_problem(const std::string& name) {
  if (name == "semilinear") return ProblemKind::SemilinearElliptic;
  if (name == "burgers") return ProblemKind::SteadyBurgers;
  throw PreconditionError("unknown problem '" + name + "' (expected semilinear or burgers)");
}

Mat Tridiagonal::dense() const {
  const Index n = diag.size();
  Mat a = Mat::Zero(n, n);
  a.diagonal() = diag;
  if (n > 1) {
    a.diagonal(-1) = lower;
    a.diagonal(1) = upper;
  }
  return a;
}

Mat Tridiagonal::apply(const Mat& x) const {
  const Index n = diag.size();
  Mat y = diag.asDiagonal() * x;
  if (n > 1) {
    y.topRows(n - 1) += upper.asDiagonal() * x.bottomRows(n - 1);
    y.bottomRows(n - 1) += lower.asDiagonal() * x.topRows(n - 1);
  }
  return y;
}

PdeProblem make_semilinear(const Mesh1D& mesh) {
  PdeProblem p;
  p.kind = ProblemKind::SemilinearElliptic;
  p.mesh = mesh;
  p.c1.resize(mesh.n_el);
  for (int e = 0; e < mesh.n_el; ++e) {
    const double mid = (e + 0.5) * mesh.h;
    p.c1[e] = 1e-4 + (mid > 0.5 ? 0.01 : 0.0);
  }
  p.c2 = Vec::Constant(1, 0.1);
  p.dirichlet_dofs = {0};
  return p;
}

PdeProblem make_burgers(const Mesh1D& mesh) {
  PdeProblem p;
  p.kind = ProblemKind::SteadyBurgers;
  p.mesh = mesh;
  p.c1 = Vec::Constant(mesh.n_el, 0.01);
  const double scale = 1.0 / (0.025 * std::sqrt(2.0 * std::numbers::pi));
  p.c2 = mesh.nodes.unaryExpr([&](double s) {
    const double z = (s - 0.4) / 0.05;
    return scale * std::exp(-z * z);
  });
  p.dirichlet_dofs = {0, static_cast<Index>(mesh.n_el)};
  return p;
}

PdeProblem make_problem(ProblemKind kind, const Mesh1D& mesh) {
  return kind == ProblemKind::SemilinearElliptic ? make_semilinear(mesh) : make_burgers(mesh);
}

CovarianceParams default_covariance(ProblemKind kind) {
  if (kind == ProblemKind::SemilinearElliptic) return {2.0, 10.0, 1.0};
  return {10.0, 20.0, 1.0};
}

Benchmark make_benchmark(ProblemKind kind, int n_el) {
  const Mesh1D mesh = assemble_mesh(n_el);
  const CovarianceParams c = default_covariance(kind);
  return Benchmark{make_problem(kind, mesh), build_covariance(mesh, c.a_delta, c.a_I, c.alpha)};
}

namespace {

// Stiffness with per-element coefficient applied to y.
Vec stiffness_apply(const PdeProblem& p, const Vec& y) {
  const Index d = p.dim();
  Vec out = Vec::Zero(d);
  const double inv_h = 1.0 / p.mesh.h;
  for (Index e = 0; e + 1 < d; ++e) {
    const double flux = p.c1[e] * inv_h * (y[e + 1] - y[e]);
    out[e] -= flux;
    out[e + 1] += flux;
  }
  return out;
}

Tridiagonal stiffness_bands(const PdeProblem& p) {
  const Index d = p.dim();
  Tridiagonal t{Vec::Zero(d - 1), Vec::Zero(d), Vec::Zero(d - 1)};
  const double inv_h = 1.0 / p.mesh.h;
  for (Index e = 0; e + 1 < d; ++e) {
    const double k = p.c1[e] * inv_h;
    t.diag[e] += k;
    t.diag[e + 1] += k;
    t.lower[e] -= k;
    t.upper[e] -= k;
  }
  return t;
}

// Galerkin convection vector for y y' with exact element integrals.
Vec convection(const Vec& y) {
  const Index d = y.size();
  Vec n = Vec::Zero(d);
  for (Index e = 0; e + 1 < d; ++e) {
    const double ya = y[e], yb = y[e + 1], dy = yb - ya;
    n[e] += dy * (2.0 * ya + yb) / 6.0;
    n[e + 1] += dy * (ya + 2.0 * yb) / 6.0;
  }
  return n;
}

}  // namespace

Vec residual(const PdeProblem& p, const Vec& y, const Vec& x) {
  require(y.size() == p.dim() && x.size() == p.dim(), "residual dimension mismatch");
  Vec r;
  if (p.kind == ProblemKind::SemilinearElliptic) {
    r = stiffness_apply(p, y) + p.c2[0] * p.mesh.mass_apply(y.array().cube().matrix()) -
        p.mesh.mass_apply(x);
  } else {
    r = stiffness_apply(p, y) + convection(y) - p.mesh.mass_apply(p.c2.cwiseProduct(x));
  }
  for (Index dof : p.dirichlet_dofs) r[dof] = y[dof];
  return r;
}

Tridiagonal residual_dy(const PdeProblem& p, const Vec& y) {
  require(y.size() == p.dim(), "residual_dy dimension mismatch");
  const Index d = p.dim();
  Tridiagonal t = stiffness_bands(p);
  if (p.kind == ProblemKind::SemilinearElliptic) {
    const double c = 3.0 * p.c2[0];
    const Vec y2 = y.cwiseAbs2();
    for (Index i = 0; i < d; ++i) t.diag[i] += c * p.mesh.mass_diag[i] * y2[i];
    for (Index i = 0; i + 1 < d; ++i) {
      t.lower[i] += c * p.mesh.mass_lower[i] * y2[i];      // row i+1, column i
      t.upper[i] += c * p.mesh.mass_lower[i] * y2[i + 1];  // row i, column i+1
    }
  } else {
    for (Index e = 0; e + 1 < d; ++e) {
      const double ya = y[e], yb = y[e + 1];
      t.diag[e] += (-4.0 * ya + yb) / 6.0;
      t.upper[e] += (ya + 2.0 * yb) / 6.0;
      t.lower[e] += (-2.0 * ya - yb) / 6.0;
      t.diag[e + 1] += (-ya + 4.0 * yb) / 6.0;
    }
  }
  for (Index dof : p.dirichlet_dofs) {
    t.diag[dof] = 1.0;
    if (dof > 0) t.lower[dof - 1] = 0.0;
    if (dof + 1 < d) t.upper[dof] = 0.0;
  }
  return t;
}

Mat residual_dx_apply(const PdeProblem& p, const Mat& V) {
  require(V.rows() == p.dim(), "residual_dx_apply dimension mismatch");
  Mat out = p.kind == ProblemKind::SemilinearElliptic
                ? Mat(-p.mesh.mass_apply(V))
                : Mat(-p.mesh.mass_apply(p.c2.asDiagonal() * V));
  for (Index dof : p.dirichlet_dofs) out.row(dof).setZero();
  return out;
}

Mat residual_dx(const PdeProblem& p) { return residual_dx_apply(p, Mat::Identity(p.dim(), p.dim())); }

namespace {

TridiagonalLu factor(const Tridiagonal& t) { return TridiagonalLu(t.lower, t.diag, t.upper); }

Vec newton(const PdeProblem& p, const Vec& x, Vec y, SolveStats& stats) {
  const double tol = p.newton_rtol * (1.0 + p.mesh.mass_apply(x).norm());
  Vec r = residual(p, y, x);
  double norm = r.norm();
  for (int it = 0;; ++it) {
    stats.trace.push_back(norm);
    stats.residual = norm;
    if (!std::isfinite(norm)) break;
    if (norm <= tol) return y;
    if (it == p.max_newton) break;
    Vec step = -factor(residual_dy(p, y)).solve(r);
    for (Index dof : p.dirichlet_dofs) step[dof] = -y[dof];
    double t = 1.0;
    bool accepted = false;
    while (t >= 1e-10) {
      Vec trial = y + t * step;
      Vec r_trial = residual(p, trial, x);
      const double n_trial = r_trial.norm();
      if (std::isfinite(n_trial) && n_trial * n_trial <= (1.0 - 2e-4 * t) * norm * norm) {
        y = std::move(trial);
        r = std::move(r_trial);
        norm = n_trial;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    ++stats.iterations;
    if (!accepted) break;
  }
  throw NonConvergence("Newton did not converge (residual " + std::to_string(norm) + ")", norm,
                       stats.trace);
}

}  // namespace

Vec solve(const PdeProblem& p, const Vec& x, const Vec& y0, SolveStats* stats) {
  require(x.size() == p.dim() && y0.size() == p.dim(), "solve dimension mismatch");
  for (Index dof : p.dirichlet_dofs)
    require(y0[dof] == 0.0, "initial guess must satisfy the Dirichlet conditions");
  SolveStats local;
  SolveStats& s = stats ? *stats : local;
  s = SolveStats{};
  try {
    return newton(p, x, y0, s);
  } catch (const NonConvergence&) {
    if (p.kind != ProblemKind::SteadyBurgers) throw;
  }
  s.homotopy = true;
  Vec y = y0;
  for (int step = 1; step <= 5; ++step) y = newton(p, (0.2 * step) * x, y, s);
  return y;
}

Vec solve(const PdeProblem& p, const Vec& x, SolveStats* stats) {
  return solve(p, x, Vec::Zero(p.dim()), stats);
}

Mat jacobian(const PdeProblem& p, const Vec& x, const Vec& y) {
  require(x.size() == p.dim(), "jacobian dimension mismatch");
  Mat rhs = -residual_dx(p);
  factor(residual_dy(p, y)).solve_in_place(rhs);
  for (Index dof : p.dirichlet_dofs) rhs.row(dof).setZero();
  return rhs;
}

Mat whitened_jacobian(const PdeProblem& p, const SpectralCovariance& cov, const Vec& y) {
  Mat rhs = -residual_dx_apply(p, cov.unwhiten_matrix());
  factor(residual_dy(p, y)).solve_in_place(rhs);
  for (Index dof : p.dirichlet_dofs) rhs.row(dof).setZero();
  return rhs;
}

Sample generate_sample(const Benchmark& b, std::uint64_t seed, std::uint64_t k, unsigned parts) {
  CounterRng rng(seed, k);
  Sample s;
  s.x = sample_field(b.cov, rng);
  SolveStats stats;
  try {
    s.y = solve(b.problem, s.x, &stats);
  } catch (const NonConvergence& e) {
    throw NonConvergence(std::string(e.what()) + " at sample " + std::to_string(k), e.residual(),
                         e.trace(), static_cast<std::int64_t>(k));
  }
  s.iterations = stats.iterations;
  if (parts & kNodalJacobian) s.J = jacobian(b.problem, s.x, s.y);
  if (parts & kWhitenedJacobian) {
    s.Jw = (parts & kNodalJacobian) ? Mat(s.J * b.cov.unwhiten_matrix())
                                    : whitened_jacobian(b.problem, b.cov, s.y);
  }
  return s;
}

void for_each_sample(const Benchmark& b, std::uint64_t seed, std::uint64_t begin, std::uint64_t end,
                     unsigned parts, const std::function<void(std::uint64_t, const Sample&)>& fn) {
  for (std::uint64_t k = begin; k < end; ++k) fn(k, generate_sample(b, seed, k, parts));
}

SampleSet generate_dataset(const Benchmark& b, Index n, std::uint64_t seed, bool with_jacobians) {
  require(n >= 1, "generate_dataset needs N >= 1");
  SampleSet set;
  set.problem = b.problem.kind;
  set.cov_params = {b.cov.a_delta, b.cov.a_I, b.cov.alpha};
  set.n_el = b.problem.mesh.n_el;
  set.seed = seed;
  const Index d = b.problem.dim();
  set.X.resize(d, n);
  set.Y.resize(d, n);
  if (with_jacobians) set.J.resize(static_cast<std::size_t>(n));
  set.iterations.resize(static_cast<std::size_t>(n));
  for_each_sample(b, seed, 0, static_cast<std::uint64_t>(n), with_jacobians ? kNodalJacobian : kValues,
                  [&](std::uint64_t k, const Sample& s) {
                    const Index j = static_cast<Index>(k);
                    set.X.col(j) = s.x;
                    set.Y.col(j) = s.y;
                    if (with_jacobians) set.J[k] = s.J;
                    set.iterations[k] = s.iterations;
                  });
  return set;
}

}  // namespace rbno
