#include "rbno/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace rbno {

ErrorReport make_report(std::string name, double numerator, double denominator, Index n_test) {
  require(denominator > 0, "error denominator must be positive");
  ErrorReport r;
  r.name = std::move(name);
  r.value = numerator / denominator;
  r.denominator = denominator;
  r.n_test = n_test;
  return r;
}

// ---------------------------------------------------------------------------

GeneralizationAccumulator::Residual& GeneralizationAccumulator::Residual::operator+=(const Residual& other) {
  const double total = n + other.n;
  const Vec delta = other.mean - mean;
  m2 += other.m2 + delta.squaredNorm() * n * other.n / total;
  mean += delta * (other.n / total);
  n = total;
  return *this;
}

GeneralizationAccumulator::GeneralizationAccumulator(const Surrogate& s, const Mesh1D& mesh) : s_(&s), mesh_(&mesh) {
  s.validate();
  require(s.out.dim() == mesh.dim(), "surrogate and mesh dimensions differ");
}

void GeneralizationAccumulator::add(const Vec& x, const Vec& y, const Mat* jw) {
  const Surrogate& s = *s_;
  const Mesh1D& mesh = *mesh_;
  require(x.size() == mesh.dim() && y.size() == mesh.dim(), "test sample dimension mismatch");
  const Vec latent_in = encode_input(s.in, x);
  const Vec phi = forward(s.net, latent_in);
  const Vec centered = y - s.out.mean;
  const Vec q = s.out.encoder * centered;
  const Vec err = centered - s.out.cols * phi;
  l2_num_.add(mesh.mass_frobenius2(err));
  l2_den_.add(mesh.mass_frobenius2(y));
  latent_value_.add((q - phi).squaredNorm());
  const Vec resid = centered - s.out.cols * q;
  residual_.add(Residual{1.0, mesh.chol_t_apply(resid), 0.0});
  ++n_;
  if (!jw) return;

  require(jw->rows() == mesh.dim() && jw->cols() == s.in.dim(), "test Jacobian shape mismatch");
  const Mat dphi = net_jacobian(s.net, latent_in);
  const Mat& W = s.in.frame;
  const Mat jW = *jw * W;                                 // d x r
  const Mat G = s.out.encoder * jW;                       // r x r
  const Mat proj = s.out.cols * (s.out.encoder * *jw);    // P Jw
  const Mat surrogate = s.out.cols * (dphi * W.transpose());
  h1_num_.add(mesh.mass_frobenius2(*jw - surrogate));
  h1_den_.add(mesh.mass_frobenius2(*jw));
  latent_jacobian_.add((G - dphi).squaredNorm());
  jac_out_.add(mesh.mass_frobenius2(*jw - proj));
  jac_in_.add(mesh.mass_frobenius2(*jw - jW * W.transpose()));
  jac_proj_in_.add(mesh.mass_frobenius2(proj - (proj * W) * W.transpose()));
  ++n_jac_;
}

GeneralizationResult GeneralizationAccumulator::finalize() const {
  require(n_ > 0, "no test samples");
  GeneralizationResult out;
  out.l2 = make_report("l2_error", l2_num_.total(), l2_den_.total(), n_);
  out.terms.latent_value = latent_value_.total();
  const Residual r = residual_.total();
  out.terms.output_reconstruction = r.m2;
  out.terms.mean_shift = r.n * r.mean.squaredNorm();
  if (n_jac_ > 0) {
    out.h1 = make_report("h1_semi_error", h1_num_.total(), h1_den_.total(), n_jac_);
    out.terms.latent_jacobian = latent_jacobian_.total();
    out.terms.jacobian_output_reconstruction = jac_out_.total();
    out.terms.jacobian_input_reconstruction = jac_in_.total();
    out.terms.jacobian_projected_input = jac_proj_in_.total();
  } else {
    out.h1.name = "h1_semi_error";
  }
  return out;
}

GeneralizationResult evaluate_surrogate(const SampleSet& test, const SpectralCovariance& cov, const Surrogate& s) {
  require(test.size() > 0, "empty test set");
  GeneralizationAccumulator acc(s, cov.mesh);
  for (Index k = 0; k < test.size(); ++k) {
    if (test.has_jacobians()) {
      const Mat jw = test.J[static_cast<std::size_t>(k)] * cov.unwhiten_matrix();
      acc.add(test.X.col(k), test.Y.col(k), &jw);
    } else {
      acc.add(test.X.col(k), test.Y.col(k), nullptr);
    }
  }
  return acc.finalize();
}

ErrorReport l2_error(const SampleSet& test, const Surrogate& s, const Mesh1D& mesh) {
  require(test.size() > 0, "empty test set");
  GeneralizationAccumulator acc(s, mesh);
  for (Index k = 0; k < test.size(); ++k) acc.add(test.X.col(k), test.Y.col(k), nullptr);
  return acc.finalize().l2;
}

ErrorReport h1_semi_error(const SampleSet& test, const SpectralCovariance& cov, const Surrogate& s) {
  require(test.has_jacobians(), "H1 error needs test Jacobians");
  return evaluate_surrogate(test, cov, s).h1;
}

// ---------------------------------------------------------------------------

std::string reconstruction_name(Reconstruction q) {
  switch (q) {
    case Reconstruction::Output: return "reconstruction_output";
    case Reconstruction::JacobianByOutput: return "reconstruction_jacobian_output";
    case Reconstruction::JacobianByInput: return "reconstruction_jacobian_input";
  }
  return "unknown";
}

std::vector<Reconstruction> reconstructions_for(const ReducedBasis& b, bool with_jacobians) {
  if (b.input_side()) return with_jacobians ? std::vector{Reconstruction::JacobianByInput} : std::vector<Reconstruction>{};
  if (with_jacobians) return {Reconstruction::Output, Reconstruction::JacobianByOutput};
  return {Reconstruction::Output};
}

namespace {

void check_side(const ReducedBasis& b, Reconstruction q) {
  if (q == Reconstruction::JacobianByInput) {
    require(b.input_side(), "input reconstruction needs an input basis");
  } else {
    require(!b.input_side(), "output reconstruction needs an output basis");
  }
  if (q == Reconstruction::Output) require(b.mean.size() == b.dim(), "output basis has no mean");
}

// sum ||(I - P) v||_M^2 over a nodal second-moment matrix S.
double output_residual_trace(const Mat& S, const Mesh1D& mesh, const ReducedBasis& b) {
  const Mat es = b.encoder * S;
  return mesh.M.cwiseProduct(S).sum() - es.cwiseProduct(b.encoder).sum();
}

}  // namespace

ErrorReport reconstruction_error(const SampleSet& test, const SpectralCovariance& cov, const ReducedBasis& b,
                                 Reconstruction q) {
  check_side(b, q);
  require(test.size() > 0, "empty test set");
  require(q == Reconstruction::Output || test.has_jacobians(), "Jacobian reconstruction needs Jacobians");
  const Mesh1D& mesh = cov.mesh;
  PairwiseSum<double> num, den;
  if (q == Reconstruction::Output) {
    const Vec test_mean = test.Y.rowwise().mean();
    for (Index k = 0; k < test.size(); ++k) {
      const Vec c = test.Y.col(k) - b.mean;
      num.add(mesh.mass_frobenius2(c - b.cols * (b.encoder * c)));
      den.add(mesh.mass_frobenius2(test.Y.col(k) - test_mean));
    }
  } else {
    for (const Mat& J : test.J) {
      const Mat jw = J * cov.unwhiten_matrix();
      const Mat resid = q == Reconstruction::JacobianByOutput ? Mat(jw - b.cols * (b.encoder * jw))
                                                              : Mat(jw - (jw * b.frame) * b.frame.transpose());
      num.add(mesh.mass_frobenius2(resid));
      den.add(mesh.mass_frobenius2(jw));
    }
  }
  return make_report(reconstruction_name(q), num.total(), den.total(), test.size());
}

ErrorReport reconstruction_error(const Moments& test, const Mesh1D& mesh, const ReducedBasis& b, Reconstruction q) {
  check_side(b, q);
  require(test.n > 0, "empty test moments");
  require(q == Reconstruction::Output || test.has_jacobians, "Jacobian reconstruction needs Jacobians");
  double num = 0, den = 0;
  switch (q) {
    case Reconstruction::Output: {
      const Vec shift = test.mean - b.mean;
      const Mat S = test.m2 + static_cast<double>(test.n) * shift * shift.transpose();
      num = output_residual_trace(S, mesh, b);
      den = mesh.M.cwiseProduct(test.m2).sum();
      break;
    }
    case Reconstruction::JacobianByOutput:
      num = output_residual_trace(test.h_out, mesh, b);
      den = mesh.M.cwiseProduct(test.h_out).sum();
      break;
    case Reconstruction::JacobianByInput:
      num = test.h_in.trace() - (b.frame.transpose() * test.h_in * b.frame).trace();
      den = test.h_in.trace();
      break;
  }
  return make_report(reconstruction_name(q), std::max(num, 0.0), den, test.n);
}

std::vector<ErrorReport> reconstruction_errors(const Moments& test, const Mesh1D& mesh, const ReducedBasis& b) {
  std::vector<ErrorReport> out;
  for (Reconstruction q : reconstructions_for(b, test.has_jacobians)) out.push_back(reconstruction_error(test, mesh, b, q));
  return out;
}

double excess_risk(const ReducedBasis& small, const ReducedBasis& reference, const Moments& test, const Mesh1D& mesh,
                   Reconstruction q) {
  require(small.kind == reference.kind && small.r == reference.r, "excess risk needs the same basis kind and rank");
  return reconstruction_error(test, mesh, small, q).value - reconstruction_error(test, mesh, reference, q).value;
}

ProjectionBound projection_bound(const Mat& A, const Mat& A_hat, Index r) {
  require(A.rows() == A.cols() && A.rows() == A_hat.rows() && A_hat.rows() == A_hat.cols(), "operator shapes");
  require(r >= 1 && r < A.rows(), "projection bound needs 1 <= r < d");
  const SymmetricEigen exact = descending_eigen(0.5 * (A + A.transpose()));
  const SymmetricEigen approx = descending_eigen(0.5 * (A_hat + A_hat.transpose()));
  const Mat u = approx.vectors.leftCols(r);
  ProjectionBound b;
  b.excess = exact.values.head(r).sum() - (u.transpose() * A * u).trace();
  b.hs_distance = (A - A_hat).norm();
  b.sqrt_form = std::sqrt(2.0 * static_cast<double>(r)) * b.hs_distance;
  const double gap = exact.values[r - 1] - exact.values[r];
  b.gap_form = gap > 0 ? 2 * b.hs_distance * b.hs_distance / gap : std::numeric_limits<double>::infinity();
  return b;
}

double mean_estimator_error(const Vec& a, const Vec& b, const Mesh1D& mesh) {
  require(a.size() == mesh.dim() && b.size() == mesh.dim(), "mean dimension mismatch");
  return mesh.mass_frobenius2(a - b);
}

// ---------------------------------------------------------------------------

namespace {

McEstimate finish(const PairwiseSum<Vec>& sum, const PairwiseSum<Vec>& sum2, int inner) {
  const double m = inner;
  McEstimate e;
  e.mean = sum.total() / m;
  const Vec var = (sum2.total() / m - e.mean.cwiseAbs2()).cwiseMax(0.0) * (m / std::max(m - 1, 1.0));
  e.std_error = (var / m).cwiseSqrt();
  return e;
}

}  // namespace

McEstimate conditional_expectation_mc(const Benchmark& b, const ReducedBasis& in, const Vec& x, int inner,
                                      CounterRng& rng) {
  require(in.input_side(), "conditional expectation needs an input basis");
  require(inner >= 1, "inner sample count must be positive");
  const Vec kept = in.cols * (in.encoder * x);
  if (in.r == in.dim()) {
    McEstimate e{solve(b.problem, x), Vec::Zero(x.size())};
    return e;
  }
  PairwiseSum<Vec> sum, sum2;
  for (int m = 0; m < inner; ++m) {
    const Vec z = sample_field(b.cov, rng);
    const Vec y = solve(b.problem, kept + z - in.cols * (in.encoder * z));
    sum.add(y);
    sum2.add(y.cwiseAbs2());
  }
  return finish(sum, sum2, inner);
}

McEstimate conditional_expectation_mc(const HermiteMap& map, int r, const Vec& xi, int inner, CounterRng& rng) {
  require(r >= 0 && r <= map.dim_in && xi.size() == map.dim_in, "conditional expectation shape mismatch");
  require(inner >= 1, "inner sample count must be positive");
  if (r == map.dim_in) return {map_eval(map, xi), Vec::Zero(map.dim_out)};
  PairwiseSum<Vec> sum, sum2;
  Vec z = xi;
  for (int m = 0; m < inner; ++m) {
    for (int k = r; k < map.dim_in; ++k) z[k] = rng.normal();
    const Vec f = map_eval(map, z);
    sum.add(f);
    sum2.add(f.cwiseAbs2());
  }
  return finish(sum, sum2, inner);
}

std::vector<PoincarePair> subspace_poincare_check(const HermiteMap& map, const std::vector<int>& ranks) {
  std::vector<PoincarePair> out;
  for (int r : ranks) {
    const PoincarePair p = subspace_poincare(map, r);
    if (p.lhs > p.rhs + 1e-12) {
      std::ostringstream os;
      os << "subspace Poincare inequality violated at r = " << r << ": " << p.lhs << " > " << p.rhs;
      throw NumericalError(os.str());
    }
    out.push_back(p);
  }
  return out;
}

std::vector<BoundRow> bound_curves(const Moments& data, const Mesh1D& mesh, const ReducedBasis& basis,
                                   Reconstruction q, const std::vector<Index>& ranks, double K) {
  std::vector<BoundRow> rows;
  const double n = static_cast<double>(data.n);
  for (Index r : ranks) {
    const ErrorReport e = reconstruction_error(data, mesh, truncate(basis, r), q);
    rows.push_back({r, e.numerator() / n, trailing_sum(basis, r), K * trailing_sum(basis, r)});
  }
  return rows;
}

std::string csv_header() { return "metric,problem,basis_in,basis_out,rank,n_train,seed,value,denominator"; }

std::string csv_line(const MetricRow& row) {
  std::ostringstream os;
  os << std::setprecision(17) << row.metric << ',' << row.problem << ',' << row.basis_in << ',' << row.basis_out
     << ',' << row.rank << ',' << row.n_train << ',' << row.seed << ',' << row.value << ',' << row.denominator;
  return os.str();
}

}  // namespace rbno
