#pragma once

#include "rbno/core.hpp"
#include "rbno/moments.hpp"
#include "rbno/pde.hpp"
#include "rbno/polymap.hpp"
#include "rbno/reduction.hpp"
#include "rbno/surrogate.hpp"

#include <string>
#include <vector>

namespace rbno {

/// Normalized error: value = numerator / denominator.
struct ErrorReport {
  std::string name;
  double value = 0;
  double denominator = 1;
  Index n_test = 0;
  std::string provenance;

  double numerator() const { return value * denominator; }
};

ErrorReport make_report(std::string name, double numerator, double denominator, Index n_test);

// ---------------------------------------------------------------------------
// Generalization errors of a surrogate, with the terms of the error splitting
// y - y~ = (I-P)(y - F^) + U (q - phi(s)) and
// Jw - U Dphi W^T = (I-P) Jw + U (G - Dphi) W^T + P Jw (I - W W^T).

struct DecompositionTerms {
  double latent_value = 0;            // sum ||q - phi(s)||^2
  double output_reconstruction = 0;   // sum ||(I-P)(y - test mean)||^2
  double mean_shift = 0;              // n ||(I-P)(test mean - F^)||^2
  double latent_jacobian = 0;         // sum ||G - Dphi||_F^2
  double jacobian_output_reconstruction = 0;  // sum ||(I-P) Jw||^2
  double jacobian_input_reconstruction = 0;   // sum ||Jw (I - W W^T)||^2
  double jacobian_projected_input = 0;        // sum ||P Jw (I - W W^T)||^2

  double l2_bound() const { return latent_value + output_reconstruction + mean_shift; }
  double h1_bound() const {
    return latent_jacobian + jacobian_output_reconstruction + jacobian_input_reconstruction;
  }
  /// Exact value of the H1 numerator under the orthogonal splitting.
  double h1_exact() const {
    return latent_jacobian + jacobian_output_reconstruction + jacobian_projected_input;
  }
};

struct GeneralizationResult {
  ErrorReport l2, h1;  // h1 has n_test = 0 when no Jacobians were seen
  DecompositionTerms terms;
};

/// Streaming evaluation of one surrogate over test samples.
class GeneralizationAccumulator {
 public:
  GeneralizationAccumulator(const Surrogate& s, const Mesh1D& mesh);
  /// `jw` is the whitened test Jacobian or nullptr.
  void add(const Vec& x, const Vec& y, const Mat* jw);
  GeneralizationResult finalize() const;

 private:
  struct Residual {
    double n = 0;
    Vec mean;
    double m2 = 0;
    Residual& operator+=(const Residual& other);
  };

  const Surrogate* s_;
  const Mesh1D* mesh_;
  Index n_ = 0, n_jac_ = 0;
  PairwiseSum<double> l2_num_, l2_den_, h1_num_, h1_den_;
  PairwiseSum<double> latent_value_, latent_jacobian_, jac_out_, jac_in_, jac_proj_in_;
  PairwiseSum<Residual> residual_;
};

GeneralizationResult evaluate_surrogate(const SampleSet& test, const SpectralCovariance& cov, const Surrogate& s);

/// sum ||y - y~||^2 / sum ||y||^2.
ErrorReport l2_error(const SampleSet& test, const Surrogate& s, const Mesh1D& mesh);
/// sum ||Jw - Jw~||^2 / sum ||Jw||^2 with M-weighted outputs.
ErrorReport h1_semi_error(const SampleSet& test, const SpectralCovariance& cov, const Surrogate& s);

// ---------------------------------------------------------------------------
// Reconstruction errors.

enum class Reconstruction { Output, JacobianByOutput, JacobianByInput };
std::string reconstruction_name(Reconstruction q);

/// Quantities a basis can reconstruct: output bases give Output and
/// JacobianByOutput, input bases give JacobianByInput.
std::vector<Reconstruction> reconstructions_for(const ReducedBasis& b, bool with_jacobians);

/// Output: sum ||(I-P)(y - F^)||^2 / sum ||y - test mean||^2 with F^ the basis
/// mean.  Jacobian terms: sum ||(I-P) Jw||^2 or sum ||Jw (I - W W^T)||^2 over
/// sum ||Jw||^2.  Direct route over stored samples.
ErrorReport reconstruction_error(const SampleSet& test, const SpectralCovariance& cov, const ReducedBasis& b,
                                 Reconstruction q);
/// Same quantities from test-set moments via traces.
ErrorReport reconstruction_error(const Moments& test, const Mesh1D& mesh, const ReducedBasis& b, Reconstruction q);
std::vector<ErrorReport> reconstruction_errors(const Moments& test, const Mesh1D& mesh, const ReducedBasis& b);

/// Reconstruction error of `small` minus that of `reference` on the same test
/// moments (same kind and rank).
double excess_risk(const ReducedBasis& small, const ReducedBasis& reference, const Moments& test,
                   const Mesh1D& mesh, Reconstruction q);

/// Excess of Tr(A (I - P^)) over the optimal trailing sum when P^ projects on
/// the top r eigenvectors of A_hat, with the two upper bounds.
struct ProjectionBound {
  double excess = 0;
  double hs_distance = 0;
  double sqrt_form = 0;  // sqrt(2 r) ||A - A_hat||
  double gap_form = 0;   // 2 ||A - A_hat||^2 / (lambda_r - lambda_{r+1}), inf at zero gap
  double bound() const { return std::min(sqrt_form, gap_form); }
};
ProjectionBound projection_bound(const Mat& A, const Mat& A_hat, Index r);

/// ||a - b||_M^2.
double mean_estimator_error(const Vec& a, const Vec& b, const Mesh1D& mesh);

// ---------------------------------------------------------------------------
// Ridge functions and Poincare checks.

struct McEstimate {
  Vec mean, std_error;
};

/// (1/M) sum F(Q x + (I - Q) z_m), z_m ~ gamma, Q the Cameron-Martin projector of `in`.
McEstimate conditional_expectation_mc(const Benchmark& b, const ReducedBasis& in, const Vec& x, int inner,
                                      CounterRng& rng);
/// Same for a Hermite map with the leading r coordinates retained.
McEstimate conditional_expectation_mc(const HermiteMap& map, int r, const Vec& xi, int inner, CounterRng& rng);

/// One (lhs, rhs) pair per rank; throws NumericalError if lhs > rhs + 1e-12.
std::vector<PoincarePair> subspace_poincare_check(const HermiteMap& map, const std::vector<int>& ranks);

// ---------------------------------------------------------------------------
// Bound curves and CSV output.

struct BoundRow {
  Index r = 0;
  double measured = 0;  // per-sample mean reconstruction error (unnormalized)
  double trailing = 0;
  double scaled = 0;    // K * trailing
};
/// Measured reconstruction of `q` by truncations of `basis` next to its
/// trailing eigenvalue sums.
std::vector<BoundRow> bound_curves(const Moments& data, const Mesh1D& mesh, const ReducedBasis& basis,
                                   Reconstruction q, const std::vector<Index>& ranks, double K);

struct MetricRow {
  std::string metric, problem, basis_in, basis_out;
  Index rank = 0, n_train = 0;
  std::uint64_t seed = 0;
  double value = 0, denominator = 1;
};
std::string csv_header();
std::string csv_line(const MetricRow& row);

}  // namespace rbno
