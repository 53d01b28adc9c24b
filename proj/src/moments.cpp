#include "rbno/moments.hpp"

namespace rbno {

DatasetMoments::MeanM2& DatasetMoments::MeanM2::operator+=(const MeanM2& other) {
  const double total = n + other.n;
  const Vec delta = other.mean - mean;
  const double w = n * other.n / total;
  if (m2.size() == 0) m2 = Mat::Zero(mean.size(), mean.size());
  if (other.m2.size() != 0) m2 += other.m2;
  m2.selfadjointView<Eigen::Lower>().rankUpdate(delta, w);
  mean += delta * (other.n / total);
  n = total;
  return *this;
}

DatasetMoments::DatasetMoments(const Mesh1D& mesh, bool with_jacobians)
    : mesh_(&mesh), with_jacobians_(with_jacobians) {
  if (with_jacobians_) {
    const Index d = mesh.dim();
    batch_in_.resize(d, kBatch * d);
    batch_out_.resize(d, kBatch * d);
  }
}

void DatasetMoments::add(const Vec& y) {
  require(!with_jacobians_, "this accumulator expects Jacobians");
  require(y.size() == mesh_->dim(), "moments dimension mismatch");
  values_.add(MeanM2{1.0, y, Mat()});
  y2_.add(y.dot(mesh_->mass_apply(y).col(0)));
  ++n_;
}

void DatasetMoments::add(const Vec& y, const Mat& jw) {
  if (!with_jacobians_) return add(y);
  const Index d = mesh_->dim();
  require(y.size() == d && jw.rows() == d && jw.cols() == d, "moments dimension mismatch");
  values_.add(MeanM2{1.0, y, Mat()});
  y2_.add(y.dot(mesh_->mass_apply(y).col(0)));
  const Mat c = mesh_->chol_t_apply(jw);
  j2_.add(c.squaredNorm());
  batch_in_.middleCols(pending_ * d, d) = c.transpose();
  batch_out_.middleCols(pending_ * d, d) = jw;
  ++pending_;
  ++n_;
  if (pending_ == kBatch) flush();
}

void DatasetMoments::flush() {
  if (pending_ == 0) return;
  const Index d = mesh_->dim();
  const Index cols = pending_ * d;
  for (auto [batch, sum] : {std::pair{&batch_in_, &h_in_}, std::pair{&batch_out_, &h_out_}}) {
    Mat h = Mat::Zero(d, d);
    h.selfadjointView<Eigen::Lower>().rankUpdate(batch->leftCols(cols));
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    sum->add(std::move(h));
  }
  pending_ = 0;
}

Moments DatasetMoments::finalize() {
  require(n_ > 0, "moments of an empty dataset");
  flush();
  Moments out;
  const Index d = mesh_->dim();
  out.n = n_;
  const MeanM2 v = values_.total();
  out.mean = v.mean;
  out.m2 = v.m2.size() ? v.m2 : Mat::Zero(d, d);
  out.m2.triangularView<Eigen::StrictlyUpper>() = out.m2.transpose();
  out.sum_y2 = y2_.total();
  out.has_jacobians = with_jacobians_;
  if (with_jacobians_) {
    out.h_in = h_in_.total();
    out.h_out = h_out_.total();
    out.sum_j2 = j2_.total();
  }
  return out;
}

Moments moments_of(const SampleSet& set, const SpectralCovariance& cov) {
  DatasetMoments acc(cov.mesh, set.has_jacobians());
  for (Index k = 0; k < set.size(); ++k) {
    if (set.has_jacobians()) {
      acc.add(set.Y.col(k), set.J[static_cast<std::size_t>(k)] * cov.unwhiten_matrix());
    } else {
      acc.add(set.Y.col(k));
    }
  }
  return acc.finalize();
}

}  // namespace rbno
