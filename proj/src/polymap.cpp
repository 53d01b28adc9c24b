#include "rbno/polymap.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace rbno {

double hermite_eval(int n, double t) {
  require(n >= 0, "Hermite degree must be non-negative");
  return hermite_values(n, t)[n];
}

Vec hermite_values(int n, double t) {
  require(n >= 0, "Hermite degree must be non-negative");
  Vec h(n + 1);
  h[0] = 1.0;
  if (n >= 1) h[1] = t;
  for (int k = 1; k < n; ++k) h[k + 1] = (t * h[k] - std::sqrt(static_cast<double>(k)) * h[k - 1]) / std::sqrt(k + 1.0);
  return h;
}

int order(const MultiIndex& alpha) {
  int s = 0;
  for (int a : alpha) s += a;
  return s;
}

int HermiteMap::degree() const {
  int n = 0;
  for (const HermiteTerm& t : terms) n = std::max(n, order(t.alpha));
  return n;
}

void HermiteMap::validate() const {
  std::set<MultiIndex> seen;
  for (const HermiteTerm& t : terms) {
    require(static_cast<int>(t.alpha.size()) == dim_in, "multi-index length must equal dim_in");
    for (int a : t.alpha) require(a >= 0, "multi-index entries must be non-negative");
    require(t.coef.size() == dim_out, "coefficient length must equal dim_out");
    require(t.coef.allFinite(), "coefficients must be finite");
    require(seen.insert(t.alpha).second, "multi-indices must be distinct");
  }
}

namespace {

// Per-coordinate Hermite tables, table(i, n) = H_n(xi_i).
Mat hermite_table(const HermiteMap& map, const Vec& xi) {
  require(xi.size() == map.dim_in, "input length must equal dim_in");
  const int n = std::max(map.degree(), 0);
  Mat table(map.dim_in, n + 1);
  for (int i = 0; i < map.dim_in; ++i) table.row(i) = hermite_values(n, xi[i]).transpose();
  return table;
}

double basis_value(const Mat& table, const MultiIndex& alpha) {
  double v = 1.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) v *= table(static_cast<Index>(i), alpha[i]);
  return v;
}

// Gradient blocks: for each beta, the d_out x dim_in matrix whose column k is
// sqrt(beta_k + 1) c_{beta + e_k}, so that DF = sum_beta G_beta H_beta.
std::map<MultiIndex, Mat> gradient_blocks(const HermiteMap& map) {
  std::map<MultiIndex, Mat> blocks;
  for (const HermiteTerm& t : map.terms) {
    for (int k = 0; k < map.dim_in; ++k) {
      if (t.alpha[k] == 0) continue;
      MultiIndex beta = t.alpha;
      beta[k] -= 1;
      auto [it, fresh] = blocks.try_emplace(beta, Mat());
      if (fresh) it->second = Mat::Zero(map.dim_out, map.dim_in);
      it->second.col(k) += std::sqrt(static_cast<double>(t.alpha[k])) * t.coef;
    }
  }
  return blocks;
}

}  // namespace

Vec map_eval(const HermiteMap& map, const Vec& xi) {
  const Mat table = hermite_table(map, xi);
  Vec out = Vec::Zero(map.dim_out);
  for (const HermiteTerm& t : map.terms) out += basis_value(table, t.alpha) * t.coef;
  return out;
}

Mat map_jacobian(const HermiteMap& map, const Vec& xi) {
  const Mat table = hermite_table(map, xi);
  Mat jac = Mat::Zero(map.dim_out, map.dim_in);
  for (const HermiteTerm& t : map.terms) {
    for (int k = 0; k < map.dim_in; ++k) {
      if (t.alpha[k] == 0) continue;
      MultiIndex lowered = t.alpha;
      lowered[k] -= 1;
      jac.col(k) += std::sqrt(static_cast<double>(t.alpha[k])) * basis_value(table, lowered) * t.coef;
    }
  }
  return jac;
}

HermiteMap directional_derivative(const HermiteMap& map, const Vec& v) {
  require(v.size() == map.dim_in, "direction length must equal dim_in");
  HermiteMap out{map.dim_in, map.dim_out, {}};
  for (const auto& [beta, block] : gradient_blocks(map)) out.terms.push_back({beta, block * v});
  return out;
}

HermiteMap conditional_expectation(const HermiteMap& map, const std::vector<int>& retained) {
  std::vector<bool> keep(static_cast<std::size_t>(map.dim_in), false);
  for (int i : retained) {
    require(i >= 0 && i < map.dim_in, "retained coordinate out of range");
    keep[static_cast<std::size_t>(i)] = true;
  }
  HermiteMap out{map.dim_in, map.dim_out, {}};
  for (const HermiteTerm& t : map.terms) {
    bool inside = true;
    for (int k = 0; k < map.dim_in; ++k)
      if (t.alpha[k] > 0 && !keep[static_cast<std::size_t>(k)]) inside = false;
    if (inside) out.terms.push_back(t);
  }
  return out;
}

double l2_norm2(const HermiteMap& map) {
  double s = 0;
  for (const HermiteTerm& t : map.terms) s += t.coef.squaredNorm();
  return s;
}

double derivative_norm2(const HermiteMap& map) {
  double s = 0;
  for (const HermiteTerm& t : map.terms) s += order(t.alpha) * t.coef.squaredNorm();
  return s;
}

Vec map_mean(const HermiteMap& map) {
  for (const HermiteTerm& t : map.terms)
    if (order(t.alpha) == 0) return t.coef;
  return Vec::Zero(map.dim_out);
}

HermiteForms hermite_forms(const HermiteMap& map) {
  HermiteForms f;
  f.C_Y = Mat::Zero(map.dim_out, map.dim_out);
  f.H_Y = Mat::Zero(map.dim_out, map.dim_out);
  for (const HermiteTerm& t : map.terms) {
    const int n = order(t.alpha);
    if (n == 0) continue;
    f.C_Y += t.coef * t.coef.transpose();
    f.H_Y += n * (t.coef * t.coef.transpose());
  }
  f.H_X = Mat::Zero(map.dim_in, map.dim_in);
  f.hess = Mat::Zero(map.dim_in, map.dim_in);
  for (const auto& [beta, block] : gradient_blocks(map)) {
    const Mat g = block.transpose() * block;
    f.H_X += g;
    f.hess += order(beta) * g;
  }
  return f;
}

double max_generalized_ratio(const Mat& A, const Mat& B) {
  require(A.rows() == B.rows() && A.cols() == B.cols() && A.rows() == A.cols(), "form shapes must match");
  const SymmetricEigen e = descending_eigen(0.5 * (B + B.transpose()));
  if (e.values.size() == 0 || e.values[0] <= 0) return 0.0;
  Index rank = 0;
  while (rank < e.values.size() && e.values[rank] > 1e-12 * e.values[0]) ++rank;
  const Mat w = e.vectors.leftCols(rank) * e.values.head(rank).cwiseSqrt().cwiseInverse().asDiagonal();
  const Mat reduced = w.transpose() * A * w;
  return descending_eigen(0.5 * (reduced + reduced.transpose())).values[0];
}

namespace {

std::vector<Vec> probe_set(Index dim, CounterRng& rng) {
  std::vector<Vec> probes;
  for (Index i = 0; i < dim; ++i) probes.push_back(Vec::Unit(dim, i));
  for (int j = 0; j < 64; ++j) {
    Vec u = rng.normal_vector(dim);
    probes.push_back(u / u.norm());
  }
  return probes;
}

double probe_max(const Mat& A, const Mat& B, const std::vector<Vec>& probes) {
  const double floor = 1e-12 * std::max(B.trace(), 1e-300);
  double best = 0.0;
  for (const Vec& u : probes) {
    const double den = u.dot(B * u);
    if (den > floor) best = std::max(best, u.dot(A * u) / den);
  }
  return best;
}

}  // namespace

InverseConstants verify_constants(const HermiteMap& map, int n_mc, std::uint64_t seed) {
  require(n_mc >= 10000, "verify_constants needs n_mc >= 1e4");
  map.validate();
  InverseConstants out;
  const HermiteForms f = hermite_forms(map);
  out.K_D = max_generalized_ratio(f.H_Y, f.C_Y);
  out.K_H = max_generalized_ratio(f.hess, f.H_X);

  CounterRng probe_rng(seed, 0);
  const std::vector<Vec> out_probes = probe_set(map.dim_out, probe_rng);
  const std::vector<Vec> in_probes = probe_set(map.dim_in, probe_rng);
  out.K_D_probe = probe_max(f.H_Y, f.C_Y, out_probes);
  out.K_H_probe = probe_max(f.hess, f.H_X, in_probes);

  // Monte Carlo estimates of the same four forms.
  std::vector<HermiteMap> partials;
  for (int k = 0; k < map.dim_in; ++k) partials.push_back(directional_derivative(map, Vec::Unit(map.dim_in, k)));
  const Vec mean = map_mean(map);
  Mat cy = Mat::Zero(map.dim_out, map.dim_out), hy = cy;
  Mat hx = Mat::Zero(map.dim_in, map.dim_in), hs = hx;
  CounterRng rng(seed, 1);
  std::vector<Mat> second(static_cast<std::size_t>(map.dim_in));
  for (int s = 0; s < n_mc; ++s) {
    const Vec xi = rng.normal_vector(map.dim_in);
    const Vec dev = map_eval(map, xi) - mean;
    const Mat jac = map_jacobian(map, xi);
    cy += dev * dev.transpose();
    hy += jac * jac.transpose();
    hx += jac.transpose() * jac;
    for (int k = 0; k < map.dim_in; ++k) second[static_cast<std::size_t>(k)] = map_jacobian(partials[static_cast<std::size_t>(k)], xi);
    for (int k = 0; k < map.dim_in; ++k)
      for (int l = 0; l < map.dim_in; ++l)
        hs(k, l) += second[static_cast<std::size_t>(k)].cwiseProduct(second[static_cast<std::size_t>(l)]).sum();
  }
  out.K_D_mc = probe_max(hy, cy, out_probes);
  out.K_H_mc = probe_max(hs, hx, in_probes);
  return out;
}

HermiteMap random_hermite_map(int dim_in, Index dim_out, int degree, int n_terms, CounterRng& rng) {
  require(dim_in >= 1 && dim_in <= 12 && degree >= 0 && degree <= 4, "random maps need dim_in <= 12, degree <= 4");
  std::vector<MultiIndex> all, top;
  MultiIndex alpha(static_cast<std::size_t>(dim_in), 0);
  // Enumerate multi-indices of order <= degree in lexicographic order.
  const auto visit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == dim_in) {
      all.push_back(alpha);
      if (remaining == 0) top.push_back(alpha);
      return;
    }
    for (int a = 0; a <= remaining; ++a) {
      alpha[static_cast<std::size_t>(pos)] = a;
      self(self, pos + 1, remaining - a);
    }
    alpha[static_cast<std::size_t>(pos)] = 0;
  };
  visit(visit, 0, degree);
  require(n_terms >= 1 && n_terms <= static_cast<int>(all.size()), "too many terms requested");
  std::set<MultiIndex> chosen{top[rng.below(top.size())]};
  while (static_cast<int>(chosen.size()) < n_terms) chosen.insert(all[rng.below(all.size())]);
  HermiteMap map{dim_in, dim_out, {}};
  for (const MultiIndex& a : chosen) map.terms.push_back({a, rng.normal_vector(dim_out)});
  return map;
}

PoincarePair subspace_poincare(const HermiteMap& map, int r) {
  require(r >= 0 && r <= map.dim_in, "Poincare rank out of range");
  PoincarePair p{r, 0.0, 0.0};
  for (const HermiteTerm& t : map.terms) {
    const double c2 = t.coef.squaredNorm();
    int tail = 0;
    for (int k = r; k < map.dim_in; ++k) tail += t.alpha[static_cast<std::size_t>(k)];
    if (tail > 0) p.lhs += c2;
    p.rhs += tail * c2;
  }
  return p;
}

}  // namespace rbno
