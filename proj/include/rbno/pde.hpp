#pragma once

#include "rbno/core.hpp"
#include "rbno/field.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rbno {

enum class ProblemKind { SemilinearElliptic, SteadyBurgers };

std::string problem_name(ProblemKind kind);
ProblemKind parse_problem(const std::string& name);

/// Tridiagonal matrix in band storage.
struct Tridiagonal {
  Vec lower, diag, upper;
  Mat dense() const;
  Mat apply(const Mat& x) const;
};

struct PdeProblem {
  ProblemKind kind = ProblemKind::SemilinearElliptic;
  Mesh1D mesh;
  Vec c1;  // diffusion per element
  Vec c2;  // semilinear: constant reaction; Burgers: nodal source profile
  std::vector<Index> dirichlet_dofs;
  double newton_rtol = 1e-10;
  int max_newton = 50;

  Index dim() const { return mesh.dim(); }
};

PdeProblem make_semilinear(const Mesh1D& mesh);
PdeProblem make_burgers(const Mesh1D& mesh);
PdeProblem make_problem(ProblemKind kind, const Mesh1D& mesh);

/// Input covariance coefficients (a_delta, a_I, alpha) used with each problem.
struct CovarianceParams {
  double a_delta, a_I, alpha;
};
CovarianceParams default_covariance(ProblemKind kind);

/// A benchmark problem together with its input measure.
struct Benchmark {
  PdeProblem problem;
  SpectralCovariance cov;
};
Benchmark make_benchmark(ProblemKind kind, int n_el = 256);

Vec residual(const PdeProblem& p, const Vec& y, const Vec& x);
/// dR/dy, tridiagonal with identity Dirichlet rows.
Tridiagonal residual_dy(const PdeProblem& p, const Vec& y);
/// dR/dx applied to the columns of V (zero Dirichlet rows).
Mat residual_dx_apply(const PdeProblem& p, const Mat& V);
/// dR/dx as a dense matrix.
Mat residual_dx(const PdeProblem& p);

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;
  bool homotopy = false;
  std::vector<double> trace;  // residual norm before each Newton step
};

class NonConvergence : public NumericalError {
 public:
  NonConvergence(const std::string& what, double residual, std::vector<double> trace,
                 std::int64_t sample = -1)
      : NumericalError(what), residual_(residual), trace_(std::move(trace)), sample_(sample) {}
  double residual() const { return residual_; }
  const std::vector<double>& trace() const { return trace_; }
  std::int64_t sample() const { return sample_; }

 private:
  double residual_;
  std::vector<double> trace_;
  std::int64_t sample_;
};

/// Damped Newton with Armijo backtracking; Burgers falls back to load homotopy.
Vec solve(const PdeProblem& p, const Vec& x, const Vec& y0, SolveStats* stats = nullptr);
Vec solve(const PdeProblem& p, const Vec& x, SolveStats* stats = nullptr);

/// Nodal Jacobian dy/dx = -(dR/dy)^(-1) dR/dx.
Mat jacobian(const PdeProblem& p, const Vec& x, const Vec& y);
/// Jacobian composed with the unwhitening map, J S (nodal outputs, whitened inputs).
Mat whitened_jacobian(const PdeProblem& p, const SpectralCovariance& cov, const Vec& y);

/// One generated data point.
struct Sample {
  Vec x, y;
  Mat J;   // nodal Jacobian, empty unless requested
  Mat Jw;  // whitened Jacobian, empty unless requested
  int iterations = 0;
};

enum SampleParts : unsigned { kValues = 0, kNodalJacobian = 1, kWhitenedJacobian = 2 };

/// Sample k of the stream `seed`; depends only on (problem, cov, seed, k).
Sample generate_sample(const Benchmark& b, std::uint64_t seed, std::uint64_t k, unsigned parts);

/// Visits samples [begin, end) of a seed stream in order.
void for_each_sample(const Benchmark& b, std::uint64_t seed, std::uint64_t begin, std::uint64_t end,
                     unsigned parts, const std::function<void(std::uint64_t, const Sample&)>& fn);

struct SampleSet {
  ProblemKind problem = ProblemKind::SemilinearElliptic;
  CovarianceParams cov_params{};
  int n_el = 0;
  std::uint64_t seed = 0;
  Mat X;               // d x N, one sample per column
  Mat Y;               // d x N
  std::vector<Mat> J;  // N nodal Jacobians (d x d)
  std::vector<int> iterations;

  Index size() const { return X.cols(); }
  Index dim() const { return X.rows(); }
  bool has_jacobians() const { return !J.empty(); }
};

SampleSet generate_dataset(const Benchmark& b, Index n, std::uint64_t seed, bool with_jacobians = true);

}  // namespace rbno
