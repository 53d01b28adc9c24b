#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rbno {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine failed (singular factorization, NaN loss, ...).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Stored artifact failed a checksum or digest comparison.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

// ---------------------------------------------------------------------------
// Counter-based random numbers.
//
// Every draw is a pure function of (seed, stream, counter), so datasets and
// training runs are reproducible bit for bit and independent of the order in
// which samples are produced.

std::uint64_t splitmix64(std::uint64_t x);

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream);

  /// Open-interval uniform on (0, 1) for the given counter.
  double uniform_at(std::uint64_t counter) const;
  /// Standard normal by inverse CDF of `uniform_at(counter)`.
  double normal_at(std::uint64_t counter) const;

  /// Sequential draws advance an internal counter.
  double uniform();
  double normal();
  Vec normal_vector(Index n);
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  /// Independent child stream (e.g. one per sample).
  CounterRng substream(std::uint64_t id) const;

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

double standard_normal_quantile(double u);

// ---------------------------------------------------------------------------
// Pairwise (cascade) summation of vectors or matrices.  The partial sums form
// a binary counter, so memory is O(log n) terms and the rounding error grows
// like O(log n) instead of O(n).
template <typename T>
class PairwiseSum {
 public:
  void add(T value) {
    std::size_t weight = 1;
    while (!levels_.empty() && levels_.back().second == weight) {
      value += levels_.back().first;
      weight *= 2;
      levels_.pop_back();
    }
    levels_.emplace_back(std::move(value), weight);
    ++count_;
  }

  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }

  /// Sum of everything added so far (smallest partials first).
  T total() const {
    if (levels_.empty()) throw PreconditionError("PairwiseSum::total on empty sum");
    T acc = levels_.back().first;
    for (std::size_t i = levels_.size() - 1; i-- > 0;) acc += levels_[i].first;
    return acc;
  }

 private:
  std::vector<std::pair<T, std::size_t>> levels_;
  std::size_t count_ = 0;
};

// ---------------------------------------------------------------------------
// Dense linear algebra helpers shared by several modules.

/// Flip a vector so that its largest-magnitude entry is positive.  Entries
/// within a relative 1e-9 of the maximum are ties; the first one wins.
void fix_sign(Eigen::Ref<Vec> v);

/// Symmetric eigendecomposition with eigenvalues in descending order.  Equal
/// eigenvalues keep ascending original index; each vector goes through
/// `fix_sign`.
struct SymmetricEigen {
  Vec values;
  Mat vectors;
};
SymmetricEigen descending_eigen(const Mat& symmetric);

/// Symmetric square root and inverse square root of an SPD matrix.
struct SpdRoots {
  Mat sqrt;
  Mat inv_sqrt;
};
SpdRoots spd_roots(const Mat& spd);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Tridiagonal LU factorization with partial pivoting (LAPACK dgttrf).
class TridiagonalLu {
 public:
  /// `lower`, `diag`, `upper` have lengths n-1, n, n-1.
  TridiagonalLu(Vec lower, Vec diag, Vec upper);

  Index size() const { return diag_.size(); }
  /// Solves A X = B in place for any number of right-hand sides.
  void solve_in_place(Eigen::Ref<Mat> rhs) const;
  Vec solve(const Vec& rhs) const;

 private:
  Vec lower_, diag_, upper_, upper2_;
  std::vector<int> pivots_;  // lapack_int
};

}  // namespace rbno
