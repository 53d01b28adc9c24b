#pragma once

#include "rbno/core.hpp"
#include "rbno/field.hpp"
#include "rbno/pde.hpp"

namespace rbno {

/// Finalized first and second moments of a dataset.
struct Moments {
  Index n = 0;
  Vec mean;     // output mean
  Mat m2;       // sum of (y - mean)(y - mean)^T
  Mat h_in;     // sum of Jw^T M Jw (whitened input side)
  Mat h_out;    // sum of Jw Jw^T (nodal output side, M not applied)
  double sum_y2 = 0;  // sum of ||y||_M^2
  double sum_j2 = 0;  // sum of ||Jw||_M^2 (HS norm from E to Y)
  bool has_jacobians = false;
};

/// Streaming accumulator for `Moments`.  Sums are pairwise so the result
/// depends only on the sample sequence, with O(log n) rounding growth.
class DatasetMoments {
 public:
  DatasetMoments(const Mesh1D& mesh, bool with_jacobians);

  /// Adds one sample; `jw` is the whitened Jacobian (ignored without Jacobians).
  void add(const Vec& y, const Mat& jw);
  void add(const Vec& y);

  Index count() const { return n_; }
  /// Totals over everything added so far.
  Moments finalize();

 private:
  struct MeanM2 {
    double n = 0;
    Vec mean;
    Mat m2;
    MeanM2& operator+=(const MeanM2& other);
  };

  void flush();

  const Mesh1D* mesh_;
  bool with_jacobians_;
  Index n_ = 0;
  PairwiseSum<MeanM2> values_;
  PairwiseSum<Mat> h_in_, h_out_;
  PairwiseSum<double> y2_, j2_;
  // Pending Jacobian blocks, reduced with one symmetric rank-k update.
  static constexpr int kBatch = 8;
  Mat batch_in_, batch_out_;
  int pending_ = 0;
};

Moments moments_of(const SampleSet& set, const SpectralCovariance& cov);

}  // namespace rbno
