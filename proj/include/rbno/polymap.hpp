#pragma once

#include "rbno/core.hpp"

#include <vector>

namespace rbno {

using MultiIndex = std::vector<int>;

/// Probabilists' Hermite polynomial normalized to unit Gaussian norm.
double hermite_eval(int n, double t);
/// Values H_0(t), ..., H_n(t).
Vec hermite_values(int n, double t);

struct HermiteTerm {
  MultiIndex alpha;
  Vec coef;
};

/// F(xi) = sum_alpha c_alpha prod_i H_{alpha_i}(xi_i) on standard Gaussian inputs.
struct HermiteMap {
  int dim_in = 0;
  Index dim_out = 0;
  std::vector<HermiteTerm> terms;

  int degree() const;
  /// Checks distinct multi-indices of the right length and finite coefficients.
  void validate() const;
};

int order(const MultiIndex& alpha);

Vec map_eval(const HermiteMap& map, const Vec& xi);
/// d_out x dim_in Jacobian.
Mat map_jacobian(const HermiteMap& map, const Vec& xi);
/// The map xi -> DF(xi) v as a Hermite map of one degree less.
HermiteMap directional_derivative(const HermiteMap& map, const Vec& v);

/// Keeps terms supported in `retained` (0-based coordinates).
HermiteMap conditional_expectation(const HermiteMap& map, const std::vector<int>& retained);

/// E||F||^2 = sum ||c_alpha||^2.
double l2_norm2(const HermiteMap& map);
/// E||DF||_F^2 = sum |alpha| ||c_alpha||^2.
double derivative_norm2(const HermiteMap& map);
/// Constant term c_0 (zero if absent).
Vec map_mean(const HermiteMap& map);

/// Quadratic forms: C_Y (output covariance), H_Y = E[DF DF^T],
/// H_X = E[DF^T DF], and Hess[k,l] = E<D(DF e_k), D(DF e_l)>_F.
struct HermiteForms {
  Mat C_Y, H_Y, H_X, hess;
};
HermiteForms hermite_forms(const HermiteMap& map);

/// Largest generalized eigenvalue of (A, B) restricted to the range of B.
double max_generalized_ratio(const Mat& A, const Mat& B);

struct InverseConstants {
  double K_D = 0, K_H = 0;              // exact, from the analytic forms
  double K_D_probe = 0, K_H_probe = 0;  // max over the probe set, analytic forms
  double K_D_mc = 0, K_H_mc = 0;        // max over the probe set, Monte Carlo forms
};

/// Probe set: canonical directions plus 64 random unit vectors.  The Monte
/// Carlo layer uses `n_mc` Gaussian samples drawn from `seed`.
InverseConstants verify_constants(const HermiteMap& map, int n_mc, std::uint64_t seed);

/// Random map with `n_terms` distinct multi-indices of order <= degree (one of
/// order exactly `degree`) and standard normal coefficients.
HermiteMap random_hermite_map(int dim_in, Index dim_out, int degree, int n_terms, CounterRng& rng);

/// Subspace Poincare sides for the retained set {0..r-1}:
/// lhs = sum over alpha not supported in the set of ||c_alpha||^2,
/// rhs = sum_alpha sum_{k >= r} alpha_k ||c_alpha||^2.
struct PoincarePair {
  int r;
  double lhs, rhs;
};
PoincarePair subspace_poincare(const HermiteMap& map, int r);

}  // namespace rbno
