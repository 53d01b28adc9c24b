#include "doctest.h"
#include "rbno/core.hpp"

#include <cmath>

using namespace rbno;

TEST_CASE("counter rng is a pure function of seed, stream and counter") {
  CounterRng a(7, 3), b(7, 3), c(7, 4), d(8, 3);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
  CHECK(c.uniform_at(0) != a.uniform_at(0));
  CHECK(d.uniform_at(0) != a.uniform_at(0));
  CHECK(a.uniform_at(5) == CounterRng(7, 3).uniform_at(5));
}

TEST_CASE("normal stream has unit variance and zero mean") {
  CounterRng rng(11, 0);
  const int n = 200000;
  double s = 0, s2 = 0, s4 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(n));
  CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("normal quantile matches known values") {
  CHECK(standard_normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(standard_normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(standard_normal_quantile(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-13));
  CHECK_THROWS_AS(standard_normal_quantile(0.0), PreconditionError);
}

TEST_CASE("below draws every residue") {
  CounterRng rng(1, 1);
  int counts[7] = {0};
  for (int i = 0; i < 7000; ++i) counts[rng.below(7)]++;
  for (int c : counts) CHECK(c > 800);
}

TEST_CASE("pairwise sum equals naive sum and tolerates reordering") {
  PairwiseSum<double> ps;
  double naive = 0;
  for (int i = 1; i <= 1000; ++i) {
    ps.add(1.0 / i);
    naive += 1.0 / i;
  }
  CHECK(ps.count() == 1000);
  CHECK(ps.total() == doctest::Approx(naive).epsilon(1e-14));

  PairwiseSum<Vec> pv;
  pv.add(Vec::Ones(3));
  pv.add(2 * Vec::Ones(3));
  pv.add(3 * Vec::Ones(3));
  CHECK((pv.total() - 6 * Vec::Ones(3)).norm() == 0.0);
  PairwiseSum<double> empty;
  CHECK_THROWS_AS(empty.total(), PreconditionError);
}

TEST_CASE("fix_sign makes the largest entry positive") {
  Vec v(3);
  v << 0.1, -0.9, 0.5;
  fix_sign(v);
  CHECK(v[1] == 0.9);
  CHECK(v[0] == -0.1);
}

TEST_CASE("descending eigen sorts and reconstructs") {
  CounterRng rng(3, 0);
  Mat a(6, 6);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  const Mat s = a * a.transpose();
  const SymmetricEigen e = descending_eigen(s);
  for (Index i = 1; i < 6; ++i) CHECK(e.values[i] <= e.values[i - 1]);
  CHECK((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - s).norm() < 1e-10 * s.norm());
}

TEST_CASE("spd roots square back") {
  Mat m(3, 3);
  m << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const SpdRoots r = spd_roots(m);
  CHECK((r.sqrt * r.sqrt - m).norm() < 1e-12);
  CHECK((r.sqrt * r.inv_sqrt - Mat::Identity(3, 3)).norm() < 1e-12);
}

TEST_CASE("loglog slope recovers a power law") {
  std::vector<double> x{1, 2, 4, 8}, y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -1.5));
  CHECK(loglog_slope(x, y) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope({1}, {1}), PreconditionError);
}

TEST_CASE("tridiagonal LU agrees with a dense solve") {
  const Index n = 9;
  Vec lo = Vec::LinSpaced(n - 1, 1.0, 3.0), di = Vec::Constant(n, 0.5), up = Vec::LinSpaced(n - 1, -2.0, 2.0);
  Mat dense = Mat::Zero(n, n);
  dense.diagonal() = di;
  dense.diagonal(-1) = lo;
  dense.diagonal(1) = up;
  TridiagonalLu lu(lo, di, up);
  Mat rhs = Mat::Random(n, 4);
  Mat x = rhs;
  lu.solve_in_place(x);
  CHECK((dense * x - rhs).norm() < 1e-11 * rhs.norm());
  CHECK_THROWS_AS(TridiagonalLu(Vec::Zero(1), Vec::Zero(2), Vec::Zero(1)), NumericalError);
}
