#include "rbno/core.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rbno {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(splitmix64(splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL))) {}

double CounterRng::uniform_at(std::uint64_t counter) const {
  const std::uint64_t v = splitmix64(key_ ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal_quantile(double u) {
  require(u > 0.0 && u < 1.0, "normal quantile needs u in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

double CounterRng::normal_at(std::uint64_t counter) const {
  return standard_normal_quantile(uniform_at(counter));
}

double CounterRng::uniform() { return uniform_at(counter_++); }
double CounterRng::normal() { return normal_at(counter_++); }

Vec CounterRng::normal_vector(Index n) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

std::uint64_t CounterRng::below(std::uint64_t bound) {
  require(bound > 0, "CounterRng::below needs a positive bound");
  // Multiply-shift reduction; the bias is negligible for shuffle-sized bounds.
  const std::uint64_t v = splitmix64(key_ ^ splitmix64(counter_++ + 0x632be59bd9b4e019ULL));
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(v) * bound) >> 64);
}

CounterRng CounterRng::substream(std::uint64_t id) const {
  CounterRng child(key_, id);
  return child;
}

void fix_sign(Eigen::Ref<Vec> v) {
  if (v.size() == 0) return;
  // Entries within a relative 1e-9 of the maximum count as ties; the first
  // one decides, so mirror-symmetric modes get a stable sign.
  const double top = v.cwiseAbs().maxCoeff();
  Index arg = 0;
  while (std::abs(v[arg]) < top * (1.0 - 1e-9)) ++arg;
  if (v[arg] < 0.0) v = -v;
}

SymmetricEigen descending_eigen(const Mat& symmetric) {
  require(symmetric.rows() == symmetric.cols(), "descending_eigen needs a square matrix");
  Eigen::SelfAdjointEigenSolver<Mat> solver(symmetric);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver did not converge");
  const Index n = symmetric.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Vec& ev = solver.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return ev[a] > ev[b]; });
  SymmetricEigen out{Vec(n), Mat(n, n)};
  for (Index j = 0; j < n; ++j) {
    out.values[j] = ev[order[static_cast<std::size_t>(j)]];
    out.vectors.col(j) = solver.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    fix_sign(out.vectors.col(j));
  }
  return out;
}

SpdRoots spd_roots(const Mat& spd) {
  Eigen::SelfAdjointEigenSolver<Mat> solver(spd);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed in spd_roots");
  if (solver.eigenvalues().minCoeff() <= 0.0) throw NumericalError("matrix is not positive definite");
  const Mat& v = solver.eigenvectors();
  const Vec s = solver.eigenvalues().array().sqrt();
  SpdRoots out;
  out.sqrt = v * s.asDiagonal() * v.transpose();
  out.inv_sqrt = v * s.cwiseInverse().asDiagonal() * v.transpose();
  out.sqrt = 0.5 * (out.sqrt + out.sqrt.transpose()).eval();
  out.inv_sqrt = 0.5 * (out.inv_sqrt + out.inv_sqrt.transpose()).eval();
  return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope needs two or more matching points");
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0 && y[i] > 0, "loglog_slope needs positive data");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  require(sxx > 0, "loglog_slope needs distinct abscissae");
  return sxy / sxx;
}

TridiagonalLu::TridiagonalLu(Vec lower, Vec diag, Vec upper)
    : lower_(std::move(lower)), diag_(std::move(diag)), upper_(std::move(upper)) {
  const Index n = diag_.size();
  require(n >= 1 && lower_.size() == n - 1 && upper_.size() == n - 1, "tridiagonal band sizes");
  upper2_ = Vec::Zero(std::max<Index>(n - 2, 1));
  pivots_.assign(static_cast<std::size_t>(n), 0);
  const lapack_int info = LAPACKE_dgttrf(static_cast<lapack_int>(n), lower_.data(), diag_.data(),
                                         upper_.data(), upper2_.data(), pivots_.data());
  if (info != 0) throw NumericalError("tridiagonal factorization failed (singular matrix)");
}

void TridiagonalLu::solve_in_place(Eigen::Ref<Mat> rhs) const {
  require(rhs.rows() == size(), "tridiagonal solve dimension mismatch");
  if (rhs.cols() == 0) return;
  const lapack_int info = LAPACKE_dgttrs(
      LAPACK_COL_MAJOR, 'N', static_cast<lapack_int>(size()), static_cast<lapack_int>(rhs.cols()),
      lower_.data(), diag_.data(), upper_.data(), upper2_.data(), pivots_.data(), rhs.data(),
      static_cast<lapack_int>(rhs.outerStride()));
  if (info != 0) throw NumericalError("tridiagonal back-substitution failed");
}

Vec TridiagonalLu::solve(const Vec& rhs) const {
  Mat x = rhs;
  solve_in_place(x);
  return x.col(0);
}

}  // namespace rbno
