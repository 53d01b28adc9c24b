// Acceptance run: one PASS/FAIL line per criterion.  Pass criterion numbers
// as arguments to run a subset (criterion 3 also needs 5 and 8 for the
// training gates).

#include "rbno/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

using namespace rbno;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void progress(const std::string& msg) { std::cerr << "  .. " << msg << std::endl; }

// Shared state between criteria.
struct State {
  Vec semilinear_input_dis_eigs;
  Vec semilinear_input_pca_eigs;
  std::vector<double> gate_errors;
  std::vector<EvaluatedRun> generalization;
  bool generalization_done = false;
};

// 1 and 2: identities and fan optimality on N = 1000 training sets.
Outcome identities_and_fan(State& st, bool fan) {
  Outcome o;
  o.pass = true;
  double worst = 0;
  int fan_losses = 0, fan_trials = 0;
  double min_margin = std::numeric_limits<double>::infinity();
  for (ProblemKind kind : {ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers}) {
    const Benchmark b = make_benchmark(kind, 256);
    const SampleSet set = generate_dataset(b, 1000, 1);
    const Mesh1D& mesh = b.cov.mesh;
    if (!fan) {
      const ReducedBasis op = output_pca(set, mesh, 30);
      const ReducedBasis od = output_dis(set, b.cov, 30);
      const ReducedBasis id = input_dis(set, b.cov, 30);
      if (kind == ProblemKind::SemilinearElliptic) {
        st.semilinear_input_dis_eigs = id.eigs;
        st.semilinear_input_pca_eigs = b.cov.mu;
      }
      for (Index r : {5, 10, 30}) {
        const std::pair<const ReducedBasis*, Reconstruction> cases[] = {
            {&op, Reconstruction::Output}, {&od, Reconstruction::JacobianByOutput}, {&id, Reconstruction::JacobianByInput}};
        for (const auto& [basis, q] : cases) {
          const double measured = reconstruction_error(set, b.cov, truncate(*basis, r), q).value;
          const double predicted = trailing_sum(*basis, r) / basis->eigs.sum();
          const double rel = std::abs(measured - predicted) / std::max(predicted, 1e-300);
          worst = std::max(worst, rel);
          if (!(rel <= 1e-8)) o.pass = false;
        }
      }
    } else {
      const Index r = 10;
      const Mat C = set.Y.colwise() - set.Y.rowwise().mean();
      const double total = mesh.mass_frobenius2(C);
      auto error_of = [&](const Mat& U) { return total - (U.transpose() * mesh.mass_apply(C)).squaredNorm(); };
      const double pca = error_of(output_pca(set, mesh, r).cols);
      CounterRng rng(77, static_cast<std::uint64_t>(kind));
      for (int t = 0; t < 50; ++t) {
        Mat G(mesh.dim(), r);
        for (Index i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
        const Mat gram = G.transpose() * mesh.mass_apply(G);
        const Mat U = G * Eigen::LLT<Mat>(gram).matrixU().solve(Mat::Identity(r, r));
        const double err = error_of(U);
        ++fan_trials;
        if (!(pca < err)) ++fan_losses;
        min_margin = std::min(min_margin, err / pca);
      }
    }
  }
  if (!fan) {
    o.detail = "max relative deviation from trailing sums " + fmt(worst) + " (r in {5,10,30}, both problems)";
  } else {
    o.pass = fan_losses == 0;
    o.detail = std::to_string(fan_trials - fan_losses) + "/" + std::to_string(fan_trials) +
               " random projections beaten, min error ratio random/pca " + fmt(min_margin);
  }
  return o;
}

// 3: PDE Jacobians by central differences plus every recorded training gate.
Outcome jacobian_gate(const State& st) {
  Outcome o;
  double worst_pde = 0;
  for (ProblemKind kind : {ProblemKind::SemilinearElliptic, ProblemKind::SteadyBurgers}) {
    const Benchmark b = make_benchmark(kind, 256);
    PdeProblem tight = b.problem;
    tight.newton_rtol = 1e-14;
    for (std::uint64_t k = 0; k < 5; ++k) {
      const Vec x = generate_sample(b, 31, k, kValues).x;
      const Vec y = solve(tight, x);
      const Mat J = jacobian(tight, x, y);
      CounterRng rng(31, 100 + k);
      const double eps = 1e-5 * x.norm();
      for (int t = 0; t < 10; ++t) {
        Vec v = rng.normal_vector(x.size());
        v /= v.norm();
        const Vec fd = (solve(tight, Vec(x + eps * v), y) - solve(tight, Vec(x - eps * v), y)) / (2 * eps);
        const Vec jv = J * v;
        worst_pde = std::max(worst_pde, (fd - jv).norm() / jv.norm());
      }
    }
  }
  const double worst_net =
      st.gate_errors.empty() ? std::numeric_limits<double>::infinity()
                             : *std::max_element(st.gate_errors.begin(), st.gate_errors.end());
  o.pass = worst_pde < 1e-5 && worst_net < kGradientGate;
  o.detail = "PDE Jacobian max rel error " + fmt(worst_pde) + " (100 directions), loss gradient max rel error " +
             fmt(worst_net) + " over " + std::to_string(st.gate_errors.size()) + " gated runs";
  return o;
}

// 4: Hermite constants and subspace Poincare.
Outcome hermite_suite() {
  Outcome o;
  o.pass = true;
  double worst_kd = -1e300, worst_kh = -1e300, worst_gap = -1e300, worst_eq = 0;
  for (const TheoryRow& r : theory_suite(100, 4242)) {
    worst_kd = std::max(worst_kd, r.k_d - r.degree);
    worst_kh = std::max(worst_kh, r.k_h - (r.degree - 1));
    worst_gap = std::max(worst_gap, r.poincare_max_gap);
    if (r.degree == 1) worst_eq = std::max(worst_eq, r.linear_equality_error);
  }
  o.pass = worst_kd <= 1e-9 && worst_kh <= 1e-9 && worst_gap <= 1e-12 && worst_eq <= 1e-12;
  o.detail = "max(K_D - n) " + fmt(worst_kd) + ", max(K_H - (n-1)) " + fmt(worst_kh) + ", max Poincare gap " +
             fmt(worst_gap) + ", degree-1 equality error " + fmt(worst_eq) + " (100 maps)";
  return o;
}

// 5: boundary values of Burgers surrogates with output PCA or output DIS.
Outcome constraint_preservation(State& st) {
  Outcome o;
  ExperimentConfig cfg = preset("desk", ProblemKind::SteadyBurgers);
  cfg.train_sizes = {250};
  cfg.pairs = {{BasisKind::InputDIS, BasisKind::OutputPCA}, {BasisKind::InputDIS, BasisKind::OutputDIS}};
  cfg.schedule.epochs = 100;
  cfg.schedule.halvings = {75, 80, 85, 90, 95};
  const Benchmark b = make_benchmark(cfg);
  const std::vector<TrainedRun> runs = train_seed(b, cfg, 1, 10, progress);
  double worst = 0;
  for (const TrainedRun& r : runs) {
    st.gate_errors.push_back(r.gradient_error);
    for (std::uint64_t k = 0; k < 100; ++k) {
      const Vec y = predict(r.surrogate, generate_sample(b, cfg.test_seed, k, kValues).x);
      const double scale = y.cwiseAbs().maxCoeff();
      worst = std::max({worst, std::abs(y[0]) / scale, std::abs(y[y.size() - 1]) / scale});
    }
  }
  o.pass = worst < 1e-9;
  o.detail = "max |y~(boundary)| / ||y~||_inf = " + fmt(worst) + " over 100 inputs x {output_pca, output_dis}";
  return o;
}

// 6 and 7: sampling-error rates.
struct Rates {
  ExcessStudy study;
  bool done = false;
};

Rates& rates() {
  static Rates r;
  if (!r.done) {
    const ExperimentConfig cfg = preset("desk", ProblemKind::SemilinearElliptic);
    const Benchmark b = make_benchmark(cfg);
    progress("streaming " + std::to_string(cfg.reference_size) + " reference samples");
    const Moments ref = prefix_moments(b, cfg.reference_seed, {cfg.reference_size}, true)[0];
    progress("excess study over " + std::to_string(cfg.seeds.size()) + " seeds");
    r.study = excess_study(b, ref, cfg.excess_sizes, cfg.seeds, cfg.excess_rank);
    r.done = true;
  }
  return r;
}

Outcome excess_rates() {
  Outcome o;
  const ExcessStudy& s = rates().study;
  auto in_band = [](double v) { return v >= -1.4 && v <= -0.6; };
  o.pass = in_band(s.slope_output_pca) && in_band(s.slope_output_dis) && in_band(s.slope_input_dis);
  o.detail = "slopes: output PCA " + fmt(s.slope_output_pca) + ", output DIS " + fmt(s.slope_output_dis) +
             ", input DIS " + fmt(s.slope_input_dis) + " (band [-1.4,-0.6])";
  return o;
}

Outcome mean_rate() {
  Outcome o;
  const double s = rates().study.slope_mean;
  o.pass = s >= -1.3 && s <= -0.7;
  o.detail = "mean-estimator slope " + fmt(s) + " (band [-1.3,-0.7])";
  return o;
}

// 8 and 10: generalization study.
std::vector<EvaluatedRun>& generalization(State& st) {
  if (!st.generalization_done) {
    const ExperimentConfig cfg = preset("desk", ProblemKind::SemilinearElliptic);
    const Benchmark b = make_benchmark(cfg);
    st.generalization = generalization_study(b, cfg, 10, progress);
    for (const EvaluatedRun& r : st.generalization) st.gate_errors.push_back(r.run.gradient_error);
    st.generalization_done = true;
  }
  return st.generalization;
}

Outcome generalization_ordering(State& st) {
  Outcome o;
  const std::vector<EvaluatedRun>& runs = generalization(st);
  std::map<std::pair<std::string, Index>, std::vector<double>> l2, h1;
  bool loss_ok = true;
  for (const EvaluatedRun& r : runs) {
    const auto key = std::make_pair(pair_name(r.run.id.pair), r.run.id.n_train);
    l2[key].push_back(r.result.l2.value);
    h1[key].push_back(r.result.h1.value);
    if (!(r.run.history.back() <= r.run.initial_loss)) loss_ok = false;
  }
  std::ostringstream d;
  bool dis_wins = true;
  for (BasisKind out : {BasisKind::OutputPCA, BasisKind::OutputDIS}) {
    const double dis = median(h1[{pair_name({BasisKind::InputDIS, out}), 1000}]);
    const double pca = median(h1[{pair_name({BasisKind::InputPCA, out}), 1000}]);
    if (!(dis < pca)) dis_wins = false;
    d << "H1@1000 " << basis_name(out) << ": DIS " << fmt(dis) << " vs PCA " << fmt(pca) << "; ";
  }
  bool l2_decreases = true;
  for (const BasisPair& p : all_pairs()) {
    const double small = median(l2[{pair_name(p), 250}]);
    const double large = median(l2[{pair_name(p), 4000}]);
    if (!(large < small)) l2_decreases = false;
    d << "L2 " << pair_name(p) << " " << fmt(small) << "->" << fmt(large) << "; ";
  }
  d << "final<=initial loss on all " << runs.size() << " runs: " << (loss_ok ? "yes" : "no");
  o.pass = dis_wins && l2_decreases && loss_ok;
  o.detail = d.str();
  return o;
}

Outcome decomposition(State& st) {
  Outcome o;
  const std::vector<EvaluatedRun>& runs = generalization(st);
  double worst_l2 = -1e300, worst_h1 = -1e300;
  for (const EvaluatedRun& r : runs) {
    const GeneralizationResult& g = r.result;
    worst_l2 = std::max(worst_l2, g.l2.value - g.terms.l2_bound() / g.l2.denominator);
    worst_h1 = std::max(worst_h1, g.h1.value - g.terms.h1_bound() / g.h1.denominator);
  }
  o.pass = !runs.empty() && worst_l2 <= 1e-9 && worst_h1 <= 1e-9;
  o.detail = "max(measured - bound): L2 " + fmt(worst_l2) + ", H1 " + fmt(worst_h1) + " over " +
             std::to_string(runs.size()) + " surrogates (relative errors)";
  return o;
}

// 9: eigenvalue decay of input DIS against input PCA.
Outcome eigen_decay(State& st) {
  Outcome o;
  if (st.semilinear_input_dis_eigs.size() == 0) {
    const Benchmark b = make_benchmark(ProblemKind::SemilinearElliptic, 256);
    st.semilinear_input_dis_eigs = input_dis(moments_of(generate_dataset(b, 1000, 1), b.cov), b.cov, 1).eigs;
    st.semilinear_input_pca_eigs = b.cov.mu;
  }
  std::vector<double> i_s, dis, pca;
  for (int i = 5; i <= 50; ++i) {
    i_s.push_back(i);
    dis.push_back(st.semilinear_input_dis_eigs[i - 1]);
    pca.push_back(st.semilinear_input_pca_eigs[i - 1]);
  }
  const double sd = loglog_slope(i_s, dis), sp = loglog_slope(i_s, pca);
  o.pass = sd <= sp - 0.5;
  o.detail = "log-log slope over i in [5,50]: input DIS " + fmt(sd) + ", input PCA " + fmt(sp);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  State st;
  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria = {
      {1, {"exact empirical reconstruction identities", [&] { return identities_and_fan(st, false); }}},
      {2, {"output PCA beats random projections", [&] { return identities_and_fan(st, true); }}},
      {4, {"Hermite constants and subspace Poincare", [] { return hermite_suite(); }}},
      {5, {"Burgers boundary constraints preserved", [&] { return constraint_preservation(st); }}},
      {6, {"excess-risk rates", [] { return excess_rates(); }}},
      {7, {"mean-estimator rate", [] { return mean_rate(); }}},
      {8, {"generalization ordering", [&] { return generalization_ordering(st); }}},
      {9, {"input DIS spectrum decays faster than input PCA", [&] { return eigen_decay(st); }}},
      {10, {"error decomposition bounds", [&] { return decomposition(st); }}},
      {3, {"Jacobian and gradient finite-difference gates", [&] { return jacobian_gate(st); }}},
  };
  // Criterion 3 runs last so it sees every training gate.
  const std::vector<int> order = {1, 2, 4, 5, 6, 7, 8, 9, 10, 3};
  std::map<int, Outcome> results;
  for (int id : order) {
    if (!wanted.count(id)) continue;
    const auto& [title, fn] = criteria.at(id);
    std::cerr << "criterion " << id << ": " << title << std::endl;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    o.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  " << (o.pass ? "PASS" : "FAIL") << " (" << fmt(o.seconds) << " s) " << o.detail << std::endl;
    results[id] = o;
  }

  bool all = true;
  for (const auto& [id, o] : results) {
    std::printf("CRITERION %d: %s | %s | %.1f s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), o.seconds);
    all = all && o.pass;
  }
  std::fflush(stdout);
  return all ? 0 : 1;
}
