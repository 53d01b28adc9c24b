#pragma once

#include "rbno/core.hpp"
#include "rbno/field.hpp"
#include "rbno/moments.hpp"
#include "rbno/pde.hpp"

#include <cstdint>
#include <string>

namespace rbno {

enum class BasisKind { InputPCA, OutputPCA, InputDIS, OutputDIS };
enum class BasisSource { Exact, Empirical };

std::string basis_name(BasisKind kind);
BasisKind parse_basis(const std::string& name);
inline bool is_input(BasisKind k) { return k == BasisKind::InputPCA || k == BasisKind::InputDIS; }

/// Rank-r encoder/decoder pair.
///
/// Input bases: cols = S W with W orthonormal in whitened coordinates, so the
/// columns are Cameron-Martin orthonormal; encoder = W^T S^+.
/// Output bases: cols = U with U^T M U = I; encoder = U^T M; frame = M^(1/2) U.
struct ReducedBasis {
  BasisKind kind = BasisKind::InputPCA;
  BasisSource source = BasisSource::Exact;
  Index n_samples = 0;
  std::uint64_t seed = 0;
  Index r = 0;
  Mat cols;     // d x r nodal decoder
  Mat frame;    // d x r orthonormal frame (W for inputs, M^(1/2) U for outputs)
  Mat encoder;  // r x d
  Vec eigs;     // full spectrum, descending, length d
  Vec mean;     // output mean for output bases, zero otherwise

  Index dim() const { return cols.rows(); }
  bool input_side() const { return is_input(kind); }
};

/// Exact input PCA from the covariance eigenpairs.
ReducedBasis input_pca(const SpectralCovariance& cov, Index r);

/// Empirical centered output PCA via a thin SVD of M^(1/2) dY / sqrt(N).
ReducedBasis output_pca(const SampleSet& set, const Mesh1D& mesh, Index r);
ReducedBasis output_pca(const Moments& m, const Mesh1D& mesh, Index r);

/// Empirical input DIS: eigenvectors of (1/N) sum Jw^T M Jw.
ReducedBasis input_dis(const SampleSet& set, const SpectralCovariance& cov, Index r);
ReducedBasis input_dis(const Moments& m, const SpectralCovariance& cov, Index r);

/// Empirical output DIS: eigenvectors of M^(1/2) ((1/N) sum Jw Jw^T) M^(1/2).
ReducedBasis output_dis(const SampleSet& set, const SpectralCovariance& cov, Index r);
ReducedBasis output_dis(const Moments& m, const Mesh1D& mesh, Index r);

/// Leading r' <= r columns of a basis.
ReducedBasis truncate(const ReducedBasis& basis, Index r);

Vec encode_input(const ReducedBasis& b, const Vec& x);
Vec decode_input(const ReducedBasis& b, const Vec& s);
Vec encode_output(const ReducedBasis& b, const Vec& y);
Vec decode_output(const ReducedBasis& b, const Vec& q);

/// G = U^T M J V from a nodal Jacobian.
Mat reduce_jacobian(const Mat& J, const ReducedBasis& out, const ReducedBasis& in);
/// Same from a whitened Jacobian, G = (M^(1/2) U)^T M^(1/2) Jw W.
Mat reduce_whitened_jacobian(const Mat& jw, const ReducedBasis& out, const ReducedBasis& in);

/// Sum of eigs beyond the leading r.
double trailing_sum(const ReducedBasis& b, Index r);

/// Max of |B col_i| over columns with nonzero eigenvalue, and |B mean - h| for
/// output bases.  When `samples` is given, the constraint is first checked on
/// them and a PreconditionError is raised if they violate it.
double constraint_check(const ReducedBasis& b, const Mat& B, const Vec& h, const Mat* samples = nullptr);

}  // namespace rbno
