#include "rbno/reduction.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace rbno {

std::string basis_name(BasisKind kind) {
  switch (kind) {
    case BasisKind::InputPCA: return "input_pca";
    case BasisKind::OutputPCA: return "output_pca";
    case BasisKind::InputDIS: return "input_dis";
    case BasisKind::OutputDIS: return "output_dis";
  }
  return "unknown";
}

BasisKind parse_basis(const std::string& name) {
  for (BasisKind k : {BasisKind::InputPCA, BasisKind::OutputPCA, BasisKind::InputDIS, BasisKind::OutputDIS})
    if (basis_name(k) == name) return k;
  throw PreconditionError("unknown basis kind '" + name + "'");
}

namespace {

// Relative eigenvalue floors below which values are rounding noise: dense
// symmetric eigensolvers resolve about eps * d * lambda_max, SVDs of factors
// about (eps * d * sigma_max)^2.
constexpr double kEigenFloor = 1e-14;
double svd_floor(Index d) {
  const double s = std::numeric_limits<double>::epsilon() * static_cast<double>(d);
  return s * s;
}

Vec clamp_small(Vec eigs, double floor) {
  const double top = eigs.size() ? eigs[0] : 0.0;
  for (Index i = 0; i < eigs.size(); ++i)
    if (!(top > 0) || eigs[i] < floor * top) eigs[i] = 0.0;
  return eigs;
}

void check_rank(Index r, Index d) { require(r >= 0 && r <= d, "rank must satisfy 0 <= r <= d"); }


// Output basis from an M^(1/2)-frame Z (orthonormal columns, descending).
// `refine` maps the leading nodal columns back into the data range (exact
// zeros at constrained dofs survive); M-orthonormalization follows.
using Refine = std::function<Mat(const Mat& cols)>;

ReducedBasis output_from_frame(BasisKind kind, const Mesh1D& mesh, const Mat& z, Vec eigs, double floor, Index r,
                               const Refine& refine) {
  ReducedBasis b;
  b.kind = kind;
  b.source = BasisSource::Empirical;
  b.r = r;
  b.eigs = clamp_small(std::move(eigs), floor);
  b.cols = mesh.inv_sqrt_mass * z.leftCols(r);
  Index active = 0;
  while (active < r && b.eigs[active] > 0) ++active;
  if (active > 0) {
    const Mat refined = refine(b.cols.leftCols(active));
    b.cols.leftCols(refined.cols()) = refined;
    const Mat gram = b.cols.transpose() * mesh.mass_apply(b.cols);
    const Eigen::LLT<Mat> llt(0.5 * (gram + gram.transpose()));
    if (llt.info() != Eigen::Success) throw NumericalError("output basis lost orthogonality");
    b.cols = llt.matrixU().solve<Eigen::OnTheRight>(b.cols);
  }
  for (Index i = 0; i < r; ++i) fix_sign(b.cols.col(i));
  b.frame = mesh.sqrt_mass * b.cols;
  b.encoder = mesh.mass_apply(b.cols).transpose();
  return b;
}

// One power step u <- Op M u / lambda.  Its rounding error grows like
// lambda_max / lambda, so only columns above kRefineFloor * lambda_max take it.
constexpr double kRefineFloor = 1e-6;

Refine power_step(const Mesh1D& mesh, const Vec& eigs, std::function<Mat(const Mat&)> op) {
  return [&mesh, &eigs, op = std::move(op)](const Mat& cols) -> Mat {
    Index k = 0;
    while (k < cols.cols() && eigs[k] >= kRefineFloor * eigs[0]) ++k;
    Mat out = op(mesh.mass_apply(cols.leftCols(k)));
    out *= eigs.head(k).cwiseInverse().asDiagonal();
    return out;
  };
}

// Triangular R with R^T R = sum of G^T G over the added blocks, accumulated
// by QR of [R; G_1; ...; G_b].  Singular values of R carry the spectrum
// without squaring the condition number.
class StackedQr {
 public:
  explicit StackedQr(Index d) : d_(d), stack_(Mat::Zero((kBatch + 1) * d, d)), rows_(d) {}
  void add(const Mat& g) {
    stack_.middleRows(rows_, g.rows()) = g;
    rows_ += g.rows();
    if (rows_ + d_ > stack_.rows()) flush();
  }
  Mat factor() {
    flush();
    return stack_.topRows(d_);
  }

 private:
  static constexpr Index kBatch = 8;
  void flush() {
    if (rows_ == d_) return;
    const Eigen::HouseholderQR<Mat> qr(stack_.topRows(rows_));
    stack_.topRows(d_) = qr.matrixQR().topRows(d_).triangularView<Eigen::Upper>();
    rows_ = d_;
  }
  Index d_;
  Mat stack_;
  Index rows_;
};

// Right singular vectors and squared singular values of R.
SymmetricEigen spectrum_of_factor(const Mat& r) {
  const Eigen::BDCSVD<Mat> svd(r, Eigen::ComputeFullV);
  return {svd.singularValues().cwiseAbs2(), svd.matrixV()};
}

ReducedBasis input_from_frame(BasisKind kind, const SpectralCovariance& cov, const Mat& w, Vec eigs, double floor,
                              Index r, BasisSource source) {
  ReducedBasis b;
  b.kind = kind;
  b.source = source;
  b.r = r;
  b.eigs = source == BasisSource::Exact ? std::move(eigs) : clamp_small(std::move(eigs), floor);
  b.frame = w.leftCols(r);
  b.cols = cov.unwhiten_matrix() * b.frame;
  for (Index i = 0; i < r; ++i) {
    const Vec before = b.cols.col(i);
    fix_sign(b.cols.col(i));
    if (b.cols.col(i).dot(before) < 0) b.frame.col(i) *= -1.0;
  }
  b.encoder = b.frame.transpose() * cov.whiten_matrix();
  b.mean = Vec::Zero(cov.dim());
  return b;
}

}  // namespace

ReducedBasis input_pca(const SpectralCovariance& cov, Index r) {
  check_rank(r, cov.dim());
  const Index d = cov.dim();
  return input_from_frame(BasisKind::InputPCA, cov, Mat::Identity(d, d), cov.mu, 0.0, r, BasisSource::Exact);
}

ReducedBasis output_pca(const SampleSet& set, const Mesh1D& mesh, Index r) {
  require(set.size() >= 2, "output PCA needs N >= 2");
  check_rank(r, mesh.dim());
  const double n = static_cast<double>(set.size());
  const Vec mean = set.Y.rowwise().mean();
  const Mat a = mesh.sqrt_mass * (set.Y.colwise() - mean) / std::sqrt(n);
  const Eigen::BDCSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeThinV);
  Vec eigs = Vec::Zero(mesh.dim());
  const Vec& sv = svd.singularValues();
  eigs.head(sv.size()) = sv.cwiseAbs2();
  // S^-1 u_i = dY v_i / (sqrt(N) sigma_i) lies in the data range exactly.
  const Refine refine = [&](const Mat& cols) -> Mat {
    const Index k = cols.cols();
    return (set.Y.colwise() - mean) * svd.matrixV().leftCols(k) * sv.head(k).cwiseInverse().asDiagonal() /
           std::sqrt(n);
  };
  ReducedBasis b = output_from_frame(BasisKind::OutputPCA, mesh, svd.matrixU(), eigs, svd_floor(mesh.dim()), r, refine);
  b.n_samples = set.size();
  b.seed = set.seed;
  b.mean = mean;
  return b;
}

ReducedBasis output_pca(const Moments& m, const Mesh1D& mesh, Index r) {
  require(m.n >= 2, "output PCA needs N >= 2");
  check_rank(r, mesh.dim());
  const Mat cov_y = m.m2 / static_cast<double>(m.n);
  const Mat c = mesh.sqrt_mass * cov_y * mesh.sqrt_mass;
  const SymmetricEigen e = descending_eigen(0.5 * (c + c.transpose()));
  const auto op = [&](const Mat& v) -> Mat { return cov_y * v; };
  ReducedBasis b = output_from_frame(BasisKind::OutputPCA, mesh, e.vectors, e.values, kEigenFloor, r, power_step(mesh, e.values, op));
  b.n_samples = m.n;
  b.mean = m.mean;
  return b;
}

ReducedBasis input_dis(const Moments& m, const SpectralCovariance& cov, Index r) {
  require(m.has_jacobians, "input DIS needs Jacobians");
  check_rank(r, cov.dim());
  const SymmetricEigen e = descending_eigen(m.h_in / static_cast<double>(m.n));
  ReducedBasis b = input_from_frame(BasisKind::InputDIS, cov, e.vectors, e.values, kEigenFloor, r, BasisSource::Empirical);
  b.n_samples = m.n;
  return b;
}

ReducedBasis input_dis(const SampleSet& set, const SpectralCovariance& cov, Index r) {
  require(set.has_jacobians(), "input DIS needs Jacobians");
  require(set.size() > 0, "input DIS needs samples");
  check_rank(r, cov.dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(set.size()));
  StackedQr qr(cov.dim());
  for (const Mat& J : set.J) qr.add(scale * cov.mesh.chol_t_apply(J * cov.unwhiten_matrix()));
  const SymmetricEigen e = spectrum_of_factor(qr.factor());
  ReducedBasis b = input_from_frame(BasisKind::InputDIS, cov, e.vectors, e.values, svd_floor(cov.dim()), r, BasisSource::Empirical);
  b.n_samples = set.size();
  b.seed = set.seed;
  return b;
}

ReducedBasis output_dis(const Moments& m, const Mesh1D& mesh, Index r) {
  require(m.has_jacobians, "output DIS needs Jacobians");
  check_rank(r, mesh.dim());
  const Mat h = m.h_out / static_cast<double>(m.n);
  const Mat c = mesh.sqrt_mass * h * mesh.sqrt_mass;
  const SymmetricEigen e = descending_eigen(0.5 * (c + c.transpose()));
  const auto op = [&](const Mat& v) -> Mat { return h * v; };
  ReducedBasis b = output_from_frame(BasisKind::OutputDIS, mesh, e.vectors, e.values, kEigenFloor, r, power_step(mesh, e.values, op));
  b.n_samples = m.n;
  b.mean = m.mean;
  return b;
}

ReducedBasis output_dis(const SampleSet& set, const SpectralCovariance& cov, Index r) {
  require(set.has_jacobians(), "output DIS needs Jacobians");
  require(set.size() > 0, "output DIS needs samples");
  const Mesh1D& mesh = cov.mesh;
  check_rank(r, mesh.dim());
  const double n = static_cast<double>(set.size());
  std::vector<Mat> jw;
  jw.reserve(set.J.size());
  StackedQr qr(mesh.dim());
  for (const Mat& J : set.J) {
    jw.push_back(J * cov.unwhiten_matrix());
    qr.add((mesh.sqrt_mass * jw.back()).transpose() / std::sqrt(n));
  }
  const SymmetricEigen e = spectrum_of_factor(qr.factor());
  const auto op = [&](const Mat& v) -> Mat {
    Mat out = Mat::Zero(v.rows(), v.cols());
    for (const Mat& g : jw) out.noalias() += g * (g.transpose() * v);
    return out / n;
  };
  ReducedBasis b = output_from_frame(BasisKind::OutputDIS, mesh, e.vectors, e.values, svd_floor(mesh.dim()), r, power_step(mesh, e.values, op));
  b.n_samples = set.size();
  b.mean = set.Y.rowwise().mean();
  b.seed = set.seed;
  return b;
}

ReducedBasis truncate(const ReducedBasis& basis, Index r) {
  require(r >= 0 && r <= basis.r, "truncate rank exceeds basis rank");
  ReducedBasis b = basis;
  b.r = r;
  b.cols = basis.cols.leftCols(r);
  b.frame = basis.frame.leftCols(r);
  b.encoder = basis.encoder.topRows(r);
  return b;
}

Vec encode_input(const ReducedBasis& b, const Vec& x) {
  require(b.input_side(), "encode_input needs an input basis");
  require(x.size() == b.dim(), "encode_input dimension mismatch");
  return b.encoder * x;
}

Vec decode_input(const ReducedBasis& b, const Vec& s) {
  require(b.input_side(), "decode_input needs an input basis");
  require(s.size() == b.r, "decode_input rank mismatch");
  return b.cols * s;
}

Vec encode_output(const ReducedBasis& b, const Vec& y) {
  require(!b.input_side(), "encode_output needs an output basis");
  require(y.size() == b.dim(), "encode_output dimension mismatch");
  return b.encoder * y;
}

Vec decode_output(const ReducedBasis& b, const Vec& q) {
  require(!b.input_side(), "decode_output needs an output basis");
  require(q.size() == b.r, "decode_output rank mismatch");
  return b.cols * q;
}

Mat reduce_jacobian(const Mat& J, const ReducedBasis& out, const ReducedBasis& in) {
  require(!out.input_side() && in.input_side(), "reduce_jacobian needs (output, input) bases");
  require(J.rows() == out.dim() && J.cols() == in.dim(), "reduce_jacobian dimension mismatch");
  return out.encoder * (J * in.cols);
}

Mat reduce_whitened_jacobian(const Mat& jw, const ReducedBasis& out, const ReducedBasis& in) {
  require(!out.input_side() && in.input_side(), "reduce_jacobian needs (output, input) bases");
  require(jw.rows() == out.dim() && jw.cols() == in.dim(), "reduce_jacobian dimension mismatch");
  return (out.encoder * jw) * in.frame;
}

double trailing_sum(const ReducedBasis& b, Index r) {
  require(r >= 0 && r <= b.eigs.size(), "trailing_sum rank out of range");
  return b.eigs.tail(b.eigs.size() - r).sum();
}

double constraint_check(const ReducedBasis& b, const Mat& B, const Vec& h, const Mat* samples) {
  require(B.cols() == b.dim() && B.rows() == h.size(), "constraint dimension mismatch");
  if (samples) {
    const double scale = std::max(1.0, samples->cwiseAbs().maxCoeff());
    const double data_violation = ((B * *samples).colwise() - h).cwiseAbs().maxCoeff();
    require(data_violation <= 1e-10 * scale, "samples do not satisfy the constraint");
  }
  double worst = 0.0;
  for (Index i = 0; i < b.r; ++i)
    if (b.eigs[i] > 0) worst = std::max(worst, (B * b.cols.col(i)).cwiseAbs().maxCoeff());
  if (!b.input_side() && b.mean.size() == b.dim())
    worst = std::max(worst, (B * b.mean - h).cwiseAbs().maxCoeff());
  return worst;
}

}  // namespace rbno
