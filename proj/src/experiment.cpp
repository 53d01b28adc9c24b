#include "rbno/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace rbno {

NetworkSettings default_network(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::SemilinearElliptic: return {6, 2, Activation::Softplus, 1e-3};
    case ProblemKind::SteadyBurgers: return {4, 2, Activation::Softplus, 2.5e-4};
  }
  throw PreconditionError("unknown problem");
}

std::string pair_name(const BasisPair& p) { return basis_name(p.in) + "-" + basis_name(p.out); }

std::vector<BasisPair> all_pairs() {
  return {{BasisKind::InputPCA, BasisKind::OutputPCA},
          {BasisKind::InputPCA, BasisKind::OutputDIS},
          {BasisKind::InputDIS, BasisKind::OutputPCA},
          {BasisKind::InputDIS, BasisKind::OutputDIS}};
}

namespace {

std::string normalization_name(Normalization n) { return n == Normalization::PerSample ? "per_sample" : "uniform"; }

Normalization parse_normalization(const std::string& s) {
  if (s == "per_sample") return Normalization::PerSample;
  if (s == "uniform") return Normalization::Uniform;
  throw PreconditionError("unknown normalization '" + s + "'");
}

bool ascending_positive(const std::vector<Index>& v) {
  if (v.empty() || v.front() < 1) return false;
  return std::is_sorted(v.begin(), v.end()) && std::adjacent_find(v.begin(), v.end()) == v.end();
}

}  // namespace

void ExperimentConfig::validate() const {
  const Index d = n_el + 1;
  require(n_el >= 2, "n_el must be at least 2");
  require(cov.a_delta > 0 && cov.a_I > 0 && cov.alpha > 0, "covariance coefficients must be positive");
  require(ascending_positive(train_sizes), "train_sizes must be positive, distinct and ascending");
  require(ascending_positive(excess_sizes), "excess_sizes must be positive, distinct and ascending");
  require(test_size >= 1 && reference_size >= 1, "test and reference sizes must be positive");
  require(!ranks.empty(), "ranks must not be empty");
  for (Index r : ranks) require(r >= 1 && r <= d, "rank " + std::to_string(r) + " outside [1, d]");
  require(excess_rank >= 1 && excess_rank < d, "excess_rank outside [1, d)");
  require(!pairs.empty(), "pairs must not be empty");
  for (const BasisPair& p : pairs) require(is_input(p.in) && !is_input(p.out), "pair " + pair_name(p) + " is not input-output");
  require(network.depth >= 2 && network.width_multiple >= 1 && network.lr0 > 0, "invalid network settings");
  schedule.validate(schedule.batch_size);
  for (Index n : train_sizes) require(n >= schedule.batch_size, "train sizes must be at least the batch size");
  std::set<std::uint64_t> all{test_seed, reference_seed};
  require(all.size() == 2, "test and reference seeds must differ");
  for (const auto* list : {&seeds, &train_seeds}) {
    require(!list->empty(), "seed lists must not be empty");
    std::set<std::uint64_t> distinct(list->begin(), list->end());
    require(distinct.size() == list->size(), "seeds must be distinct");
    for (std::uint64_t s : *list) require(!all.count(s), "seed " + std::to_string(s) + " collides with the test or reference stream");
  }
  require(bound_constant > 0, "bound_constant must be positive");
}

Json ExperimentConfig::to_json() const {
  Json pj = Json::array();
  for (const BasisPair& p : pairs) pj.push_back({basis_name(p.in), basis_name(p.out)});
  return {{"problem", problem_name(problem)},
          {"covariance", {{"a_delta", cov.a_delta}, {"a_I", cov.a_I}, {"alpha", cov.alpha}}},
          {"n_el", n_el},
          {"train_sizes", train_sizes},
          {"test_size", test_size},
          {"reference_size", reference_size},
          {"excess_sizes", excess_sizes},
          {"excess_rank", excess_rank},
          {"ranks", ranks},
          {"pairs", pj},
          {"network",
           {{"depth", network.depth},
            {"width_multiple", network.width_multiple},
            {"activation", activation_name(network.activation)},
            {"lr0", network.lr0}}},
          {"schedule",
           {{"epochs", schedule.epochs},
            {"batch_size", schedule.batch_size},
            {"halvings", schedule.halvings},
            {"beta1", schedule.beta1},
            {"beta2", schedule.beta2},
            {"eps", schedule.eps},
            {"normalization", normalization_name(schedule.normalization)},
            {"tau_rel", schedule.tau_rel}}},
          {"seeds", seeds},
          {"train_seeds", train_seeds},
          {"test_seed", test_seed},
          {"reference_seed", reference_seed},
          {"bound_constant", bound_constant},
          {"output_dir", output_dir}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  try {
    // Missing keys fall back to the desk preset of the named problem.
    ExperimentConfig c = preset("desk", parse_problem(j.at("problem").get<std::string>()));
    if (j.contains("covariance")) {
      const Json& cj = j["covariance"];
      c.cov = {cj.value("a_delta", c.cov.a_delta), cj.value("a_I", c.cov.a_I), cj.value("alpha", c.cov.alpha)};
    }
    c.n_el = j.value("n_el", c.n_el);
    c.train_sizes = j.value("train_sizes", c.train_sizes);
    c.test_size = j.value("test_size", c.test_size);
    c.reference_size = j.value("reference_size", c.reference_size);
    c.excess_sizes = j.value("excess_sizes", c.excess_sizes);
    c.excess_rank = j.value("excess_rank", c.excess_rank);
    c.ranks = j.value("ranks", c.ranks);
    if (j.contains("pairs")) {
      c.pairs.clear();
      for (const Json& p : j["pairs"])
        c.pairs.push_back({parse_basis(p.at(0).get<std::string>()), parse_basis(p.at(1).get<std::string>())});
    }
    if (j.contains("network")) {
      const Json& n = j["network"];
      c.network.depth = n.value("depth", c.network.depth);
      c.network.width_multiple = n.value("width_multiple", c.network.width_multiple);
      c.network.activation = parse_activation(n.value("activation", activation_name(c.network.activation)));
      c.network.lr0 = n.value("lr0", c.network.lr0);
    }
    c.schedule.lr0 = c.network.lr0;
    if (j.contains("schedule")) {
      const Json& s = j["schedule"];
      c.schedule.epochs = s.value("epochs", c.schedule.epochs);
      c.schedule.batch_size = s.value("batch_size", c.schedule.batch_size);
      c.schedule.halvings = s.value("halvings", c.schedule.halvings);
      c.schedule.beta1 = s.value("beta1", c.schedule.beta1);
      c.schedule.beta2 = s.value("beta2", c.schedule.beta2);
      c.schedule.eps = s.value("eps", c.schedule.eps);
      c.schedule.normalization =
          parse_normalization(s.value("normalization", normalization_name(c.schedule.normalization)));
      c.schedule.tau_rel = s.value("tau_rel", c.schedule.tau_rel);
    }
    c.seeds = j.value("seeds", c.seeds);
    c.train_seeds = j.value("train_seeds", c.train_seeds);
    c.test_seed = j.value("test_seed", c.test_seed);
    c.reference_seed = j.value("reference_seed", c.reference_seed);
    c.bound_constant = j.value("bound_constant", c.bound_constant);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw PreconditionError(std::string("malformed config: ") + e.what());
  }
}

std::string ExperimentConfig::digest() const {
  Json j = to_json();
  j.erase("output_dir");
  return json_digest(j);
}

ExperimentConfig preset(const std::string& name, ProblemKind problem) {
  ExperimentConfig c;
  c.problem = problem;
  c.cov = default_covariance(problem);
  c.n_el = 256;
  c.network = default_network(problem);
  c.pairs = all_pairs();
  c.ranks = {10, 20, 30};
  c.excess_sizes = {80, 160, 320, 640};
  c.excess_rank = 10;
  c.reference_size = 20000;
  c.test_size = 4000;
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  c.train_seeds = {1, 2, 3, 4, 5};
  if (name == "desk") {
    c.train_sizes = {250, 1000, 4000};
    c.schedule = desk_schedule(c.network.lr0);
  } else if (name == "full") {
    c.train_sizes = {640, 1000, 2000, 4000, 8000, 16000};
    c.schedule = full_schedule(c.network.lr0);
    c.train_seeds = c.seeds;
  } else {
    throw PreconditionError("unknown preset '" + name + "' (expected desk or full)");
  }
  return c;
}

Benchmark make_benchmark(const ExperimentConfig& cfg) {
  const Mesh1D mesh = assemble_mesh(cfg.n_el);
  return {make_problem(cfg.problem, mesh), build_covariance(mesh, cfg.cov.a_delta, cfg.cov.a_I, cfg.cov.alpha)};
}

std::vector<Moments> prefix_moments(const Benchmark& b, std::uint64_t seed, const std::vector<Index>& sizes,
                                    bool with_jacobians) {
  require(ascending_positive(sizes), "prefix sizes must be positive, distinct and ascending");
  DatasetMoments acc(b.cov.mesh, with_jacobians);
  std::vector<Moments> out;
  std::size_t next = 0;
  for_each_sample(b, seed, 0, static_cast<std::uint64_t>(sizes.back()), with_jacobians ? kWhitenedJacobian : kValues,
                  [&](std::uint64_t k, const Sample& s) {
                    if (with_jacobians)
                      acc.add(s.y, s.Jw);
                    else
                      acc.add(s.y);
                    if (static_cast<Index>(k) + 1 == sizes[next]) {
                      out.push_back(acc.finalize());
                      ++next;
                    }
                  });
  return out;
}

ReducedBasis basis_from_moments(BasisKind kind, const Moments& m, const SpectralCovariance& cov, Index r) {
  switch (kind) {
    case BasisKind::InputPCA: return input_pca(cov, r);
    case BasisKind::OutputPCA: return output_pca(m, cov.mesh, r);
    case BasisKind::InputDIS: return input_dis(m, cov, r);
    case BasisKind::OutputDIS: return output_dis(m, cov.mesh, r);
  }
  throw PreconditionError("unknown basis kind");
}

ExcessStudy excess_study(const Benchmark& b, const Moments& reference, const std::vector<Index>& sizes,
                         const std::vector<std::uint64_t>& seeds, Index rank) {
  require(reference.has_jacobians, "reference moments need Jacobians");
  require(!seeds.empty(), "excess study needs seeds");
  const Mesh1D& mesh = b.cov.mesh;
  const ReducedBasis ref_op = output_pca(reference, mesh, rank);
  const ReducedBasis ref_od = output_dis(reference, mesh, rank);
  const ReducedBasis ref_id = input_dis(reference, b.cov, rank);
  ExcessStudy study;
  study.sizes = sizes;
  for (std::uint64_t seed : seeds) {
    const std::vector<Moments> ms = prefix_moments(b, seed, sizes, true);
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      ExcessRow row;
      row.seed = seed;
      row.n = sizes[i];
      row.output_pca = excess_risk(output_pca(ms[i], mesh, rank), ref_op, reference, mesh, Reconstruction::Output);
      row.output_dis =
          excess_risk(output_dis(ms[i], mesh, rank), ref_od, reference, mesh, Reconstruction::JacobianByOutput);
      row.input_dis =
          excess_risk(input_dis(ms[i], b.cov, rank), ref_id, reference, mesh, Reconstruction::JacobianByInput);
      row.mean_error = mean_estimator_error(ms[i].mean, reference.mean, mesh);
      study.rows.push_back(row);
    }
  }
  const std::vector<double> xs(sizes.begin(), sizes.end());
  auto slope = [&](double ExcessRow::*field) {
    std::vector<double> ys(sizes.size(), 0.0);
    for (const ExcessRow& row : study.rows) {
      const auto i = static_cast<std::size_t>(std::find(sizes.begin(), sizes.end(), row.n) - sizes.begin());
      ys[i] += row.*field / static_cast<double>(seeds.size());
    }
    return loglog_slope(xs, ys);
  };
  study.slope_output_pca = slope(&ExcessRow::output_pca);
  study.slope_output_dis = slope(&ExcessRow::output_dis);
  study.slope_input_dis = slope(&ExcessRow::input_dis);
  study.slope_mean = slope(&ExcessRow::mean_error);
  return study;
}

std::string RunId::name() const {
  std::ostringstream os;
  os << pair_name(pair) << "_r" << rank << "_n" << n_train << "_s" << seed;
  return os.str();
}

namespace {

EncodedData subset(const EncodedData& data, Index n) {
  n = std::min(n, data.size());
  return {data.S.leftCols(n), data.Q.leftCols(n), std::vector<Mat>(data.G.begin(), data.G.begin() + n)};
}

}  // namespace

std::vector<TrainedRun> train_seed(const Benchmark& b, const ExperimentConfig& cfg, std::uint64_t seed, Index rank,
                                   const Progress& progress) {
  const std::vector<Index>& sizes = cfg.train_sizes;
  const std::vector<Moments> ms = prefix_moments(b, seed, sizes, true);

  // Bases per (size, kind), then training tuples per (size, pair).
  std::vector<std::map<BasisKind, ReducedBasis>> bases(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i)
    for (const BasisPair& p : cfg.pairs)
      for (BasisKind k : {p.in, p.out})
        if (!bases[i].count(k)) bases[i].emplace(k, basis_from_moments(k, ms[i], b.cov, rank));

  std::vector<std::vector<EncodedData>> data(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i)
    for (std::size_t p = 0; p < cfg.pairs.size(); ++p)
      data[i].push_back({Mat(rank, sizes[i]), Mat(rank, sizes[i]), std::vector<Mat>(static_cast<std::size_t>(sizes[i]))});
  for_each_sample(b, seed, 0, static_cast<std::uint64_t>(sizes.back()), kWhitenedJacobian,
                  [&](std::uint64_t k, const Sample& s) {
                    const auto col = static_cast<Index>(k);
                    for (std::size_t i = 0; i < sizes.size(); ++i) {
                      if (col >= sizes[i]) continue;
                      for (std::size_t p = 0; p < cfg.pairs.size(); ++p) {
                        EncodedData& e = data[i][p];
                        encode_sample(bases[i].at(cfg.pairs[p].in), bases[i].at(cfg.pairs[p].out), s.x, s.y, s.Jw,
                                      e.S.col(col), e.Q.col(col), e.G[k]);
                      }
                    }
                  });

  std::vector<TrainedRun> runs;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    for (std::size_t p = 0; p < cfg.pairs.size(); ++p) {
      TrainedRun run;
      run.id = {cfg.pairs[p], rank, sizes[i], seed};
      LatentNetwork net =
          make_network(rank, cfg.network.depth, cfg.network.width_multiple * rank, cfg.network.activation);
      xavier_init(net, seed);
      TrainingSchedule schedule = cfg.schedule;
      schedule.lr0 = cfg.network.lr0;
      schedule.seed = seed;

      const EncodedData gate_data = subset(data[i][p], 200);
      run.gradient_error = gradient_check(net, gate_data, make_weights(gate_data, schedule.normalization, schedule.tau_rel),
                                          {}, 50, 1e-6, seed);
      if (!(run.gradient_error < kGradientGate))
        throw NumericalError(run.id.name() + ": gradient check failed (relative error " +
                             std::to_string(run.gradient_error) + ")");
      if (progress) progress("training " + run.id.name());
      TrainResult tr;
      try {
        tr = train(std::move(net), data[i][p], schedule);
      } catch (const Divergence& e) {
        throw NumericalError(run.id.name() + ": " + e.what());
      }
      run.initial_loss = tr.initial_loss;
      run.history = std::move(tr.history);
      run.surrogate = {bases[i].at(cfg.pairs[p].in), bases[i].at(cfg.pairs[p].out), std::move(tr.net)};
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

std::vector<GeneralizationResult> evaluate_runs(const Benchmark& b, const std::vector<const Surrogate*>& surrogates,
                                                std::uint64_t test_seed, Index n) {
  std::vector<GeneralizationAccumulator> acc;
  acc.reserve(surrogates.size());
  for (const Surrogate* s : surrogates) acc.emplace_back(*s, b.cov.mesh);
  for_each_sample(b, test_seed, 0, static_cast<std::uint64_t>(n), kWhitenedJacobian, [&](std::uint64_t, const Sample& s) {
    for (GeneralizationAccumulator& a : acc) a.add(s.x, s.y, &s.Jw);
  });
  std::vector<GeneralizationResult> out;
  for (const GeneralizationAccumulator& a : acc) out.push_back(a.finalize());
  return out;
}

std::vector<EvaluatedRun> generalization_study(const Benchmark& b, const ExperimentConfig& cfg, Index rank,
                                               const Progress& progress) {
  std::vector<TrainedRun> runs;
  for (std::uint64_t seed : cfg.train_seeds) {
    std::vector<TrainedRun> r = train_seed(b, cfg, seed, rank, progress);
    std::move(r.begin(), r.end(), std::back_inserter(runs));
  }
  if (progress) progress("evaluating " + std::to_string(runs.size()) + " surrogates");
  std::vector<const Surrogate*> ptrs;
  for (const TrainedRun& r : runs) ptrs.push_back(&r.surrogate);
  std::vector<GeneralizationResult> results = evaluate_runs(b, ptrs, cfg.test_seed, cfg.test_size);
  std::vector<EvaluatedRun> out;
  for (std::size_t i = 0; i < runs.size(); ++i) out.push_back({std::move(runs[i]), std::move(results[i])});
  return out;
}

std::vector<TheoryRow> theory_suite(int count, std::uint64_t seed) {
  require(count >= 1, "theory suite needs at least one map");
  CounterRng rng(seed, 0);
  std::vector<TheoryRow> rows;
  for (int m = 0; m < count; ++m) {
    TheoryRow row;
    row.map = m;
    row.degree = 1 + m % 4;
    row.dim_in = 2 + static_cast<int>(rng.below(5));
    const HermiteMap map = random_hermite_map(row.dim_in, 3, row.degree, row.degree == 1 ? row.dim_in : 6, rng);
    const HermiteForms f = hermite_forms(map);
    row.k_d = max_generalized_ratio(f.H_Y, f.C_Y);
    row.k_h = max_generalized_ratio(f.hess, f.H_X);
    row.poincare_max_gap = -std::numeric_limits<double>::infinity();
    for (int r = 0; r <= row.dim_in; ++r) {
      const PoincarePair p = subspace_poincare(map, r);
      row.poincare_max_gap = std::max(row.poincare_max_gap, p.lhs - p.rhs);
      if (row.degree == 1) row.linear_equality_error = std::max(row.linear_equality_error, std::abs(p.lhs - p.rhs));
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rbno
