// Command-line driver: generate data, build bases, train surrogates and
// emit metric tables.  Exit codes: 0 success, 1 usage, 2 numerical failure,
// 3 integrity (corrupt or missing artifact).

#include "rbno/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

using namespace rbno;

namespace {

constexpr int kUsage = 1, kNumerical = 2, kIntegrity = 3;

struct Options {
  std::string config_file;
  std::string preset = "desk";
  std::string problem = "semilinear";
  std::string out;
};

struct Context {
  ExperimentConfig cfg;
  std::string digest;
  fs::path workspace;
  Benchmark bench;
};

void log(const std::string& msg) { std::cerr << "[rbno] " << msg << std::endl; }

Context make_context(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw PreconditionError("cannot read config " + o.config_file);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::exception& e) {
      throw PreconditionError("config " + o.config_file + " is not valid JSON: " + e.what());
    }
    cfg = ExperimentConfig::from_json(j);
  } else {
    cfg = preset(o.preset, parse_problem(o.problem));
  }
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (cfg.output_dir.empty()) {
    const char* env = std::getenv("RBNO_OUTPUT_ROOT");
    cfg.output_dir = env && *env ? env : "rbno_output";
  }
  cfg.validate();
  Context c{cfg, cfg.digest(), {}, make_benchmark(cfg)};
  c.workspace = fs::path(cfg.output_dir) / c.digest.substr(0, 16);
  fs::create_directories(c.workspace);
  std::ofstream(c.workspace / "config.json") << cfg.to_json().dump(2) << "\n";
  return c;
}

/// Fails with an integrity error unless `dir` is a committed artifact made
/// under the current config.
void require_artifact(const Context& c, const fs::path& dir, const std::string& kind) {
  if (!artifact_exists(dir))
    throw IntegrityError("missing artifact " + dir.string() + " (config digest " + c.digest + ")");
  const ArtifactReader r(dir, kind);
  if (r.config_digest() != c.digest)
    throw IntegrityError(dir.string() + " was produced under config digest " + r.config_digest() +
                         ", current digest is " + c.digest);
}

/// True and prints a notice when a valid artifact is already present.
bool already_done(const Context& c, const fs::path& dir, const std::string& kind) {
  if (!artifact_exists(dir)) return false;
  require_artifact(c, dir, kind);
  ArtifactReader(dir, kind).verify_all();
  std::cout << "exists: " << dir.string() << "\n";
  return true;
}

fs::path data_dir(const Context& c, const std::string& arg) {
  const fs::path p(arg);
  if (fs::exists(p)) return p;
  return c.workspace / "data" / arg;
}

/// Streams a stored set through the whitened-Jacobian moments.
Moments stored_moments(const Context& c, const fs::path& dir, bool need_jacobians) {
  require_artifact(c, dir, "sample_set");
  const SampleSetInfo info = read_sample_set_info(dir);
  if (need_jacobians && !info.has_jacobians)
    throw PreconditionError(dir.string() + " has no Jacobians");
  DatasetMoments acc(c.bench.cov.mesh, info.has_jacobians);
  for_each_stored_sample(dir, [&](const StoredSample& s) {
    if (s.J)
      acc.add(s.y, (*s.J) * c.bench.cov.unwhiten_matrix());
    else
      acc.add(s.y);
  });
  return acc.finalize();
}

void write_csv(const Context& c, const std::string& suite, const std::vector<MetricRow>& rows, const Json& inputs) {
  const fs::path dir = c.workspace / "metrics";
  fs::create_directories(dir);
  const fs::path path = dir / (suite + ".csv");
  {
    std::ofstream out(path.string() + ".tmp");
    out << csv_header() << "\n";
    for (const MetricRow& r : rows) out << csv_line(r) << "\n";
    if (!out) throw Error("write failed: " + path.string());
  }
  fs::rename(path.string() + ".tmp", path);
  std::ofstream(dir / (suite + ".json")) << Json{{"config_digest", c.digest}, {"suite", suite}, {"inputs", inputs},
                                                 {"csv_sha256", sha256_file(path)}}.dump(2)
                                         << "\n";
  std::cout << "wrote " << path.string() << " (" << rows.size() << " rows)\n";
}

// ---------------------------------------------------------------------------

int cmd_generate(const Context& c, Index n, std::uint64_t seed, bool values_only) {
  require(n >= 1, "--n must be positive");
  const fs::path dir = c.workspace / "data" / ("n" + std::to_string(n) + "_s" + std::to_string(seed) + (values_only ? "_values" : ""));
  if (already_done(c, dir, "sample_set")) return 0;
  log("generating " + std::to_string(n) + " samples of " + problem_name(c.cfg.problem) + " (seed " +
      std::to_string(seed) + ")");
  generate_sample_set(dir, c.bench, n, seed, !values_only, c.digest);
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}

std::vector<BasisKind> kinds_from(const std::string& arg) {
  if (arg == "all") return {BasisKind::InputPCA, BasisKind::OutputPCA, BasisKind::InputDIS, BasisKind::OutputDIS};
  return {parse_basis(arg)};
}

Index max_rank(const Context& c) { return *std::max_element(c.cfg.ranks.begin(), c.cfg.ranks.end()); }

void check_rank(const Context& c, Index r) {
  require(r >= 1 && r <= c.bench.cov.dim(),
          "rank " + std::to_string(r) + " outside [1, " + std::to_string(c.bench.cov.dim()) + "]");
}

int cmd_basis(const Context& c, const std::string& data, const std::string& kind, std::optional<Index> rank,
              bool reference) {
  const Index r = rank.value_or(max_rank(c));
  check_rank(c, r);
  const std::vector<BasisKind> kinds = kinds_from(kind);
  fs::path dir;
  std::optional<Moments> m;
  if (reference) {
    dir = c.workspace / "reference";
    const fs::path mdir = dir / "moments";
    if (!already_done(c, mdir, "moments")) {
      log("streaming " + std::to_string(c.cfg.reference_size) + " reference samples");
      m = prefix_moments(c.bench, c.cfg.reference_seed, {c.cfg.reference_size}, true)[0];
      save_moments(mdir, *m, c.digest, {{"seed", c.cfg.reference_seed}});
    } else {
      m = load_moments(mdir);
    }
  } else {
    require(!data.empty(), "basis needs --data or --reference");
    const fs::path src = data_dir(c, data);
    dir = c.workspace / "bases" / src.filename();
    bool need_jac = false;
    for (BasisKind k : kinds) need_jac |= k == BasisKind::InputDIS || k == BasisKind::OutputDIS;
    m = stored_moments(c, src, need_jac);
  }
  for (BasisKind k : kinds) {
    const fs::path out = dir / (basis_name(k) + "_r" + std::to_string(r));
    if (already_done(c, out, "basis")) continue;
    ReducedBasis b = basis_from_moments(k, *m, c.bench.cov, r);
    save_basis(out, b, c.digest);
    std::cout << "wrote " << out.string() << "\n";
  }
  return 0;
}

std::vector<BasisPair> pairs_from(const Context& c, const std::string& arg) {
  if (arg == "all") return c.cfg.pairs;
  const auto colon = arg.find(':');
  require(colon != std::string::npos, "--pair expects IN:OUT or all");
  const BasisPair p{parse_basis(arg.substr(0, colon)), parse_basis(arg.substr(colon + 1))};
  require(is_input(p.in) && !is_input(p.out), "--pair expects an input basis then an output basis");
  return {p};
}

int cmd_train(const Context& c, const std::string& data, const std::string& pair_arg, std::vector<Index> ranks,
              std::optional<std::uint64_t> seed_arg) {
  if (ranks.empty()) ranks = c.cfg.ranks;
  for (Index r : ranks) check_rank(c, r);
  const std::vector<BasisPair> pairs = pairs_from(c, pair_arg);
  const std::uint64_t seed = seed_arg.value_or(c.cfg.train_seeds.front());
  const fs::path src = data_dir(c, data);
  require_artifact(c, src, "sample_set");
  const SampleSetInfo info = read_sample_set_info(src);
  require(info.has_jacobians, src.string() + " has no Jacobians");

  // Runs in a fixed order: rank, then pair.
  std::vector<RunId> todo;
  for (Index r : ranks)
    for (const BasisPair& p : pairs) {
      RunId id{p, r, info.n, seed};
      if (!already_done(c, c.workspace / "runs" / id.name() / "network", "network")) todo.push_back(id);
    }
  if (todo.empty()) return 0;

  const Moments m = stored_moments(c, src, true);
  std::vector<Surrogate> surrogates;
  std::vector<EncodedData> data_sets;
  for (const RunId& id : todo) {
    surrogates.push_back({basis_from_moments(id.pair.in, m, c.bench.cov, id.rank),
                          basis_from_moments(id.pair.out, m, c.bench.cov, id.rank), {}});
    data_sets.push_back({Mat(id.rank, info.n), Mat(id.rank, info.n), std::vector<Mat>(static_cast<std::size_t>(info.n))});
  }
  for_each_stored_sample(src, [&](const StoredSample& s) {
    const Mat jw = (*s.J) * c.bench.cov.unwhiten_matrix();
    for (std::size_t i = 0; i < todo.size(); ++i) {
      EncodedData& e = data_sets[i];
      encode_sample(surrogates[i].in, surrogates[i].out, s.x, s.y, jw, e.S.col(s.k), e.Q.col(s.k),
                    e.G[static_cast<std::size_t>(s.k)]);
    }
  });

  for (std::size_t i = 0; i < todo.size(); ++i) {
    const RunId& id = todo[i];
    const fs::path dir = c.workspace / "runs" / id.name();
    LatentNetwork net = make_network(id.rank, c.cfg.network.depth, c.cfg.network.width_multiple * id.rank,
                                     c.cfg.network.activation);
    xavier_init(net, seed);
    TrainingSchedule schedule = c.cfg.schedule;
    schedule.lr0 = c.cfg.network.lr0;
    schedule.seed = seed;
    const EncodedData& d = data_sets[i];
    const Index n_gate = std::min<Index>(200, d.size());
    const EncodedData gate{d.S.leftCols(n_gate), d.Q.leftCols(n_gate),
                           std::vector<Mat>(d.G.begin(), d.G.begin() + n_gate)};
    const double gerr =
        gradient_check(net, gate, make_weights(gate, schedule.normalization, schedule.tau_rel), {}, 50, 1e-6, seed);
    if (!(gerr < kGradientGate))
      throw NumericalError(id.name() + ": gradient check failed (relative error " + std::to_string(gerr) + ")");
    std::ostringstream note;
    note << "training " << id.name() << " (gradient check " << std::scientific << std::setprecision(2) << gerr << ")";
    log(note.str());
    TrainResult tr;
    try {
      tr = train(std::move(net), d, schedule);
    } catch (const Divergence& e) {
      throw NumericalError(id.name() + ": " + e.what());
    }
    save_basis(dir / "input_basis", surrogates[i].in, c.digest);
    save_basis(dir / "output_basis", surrogates[i].out, c.digest);
    {
      std::ofstream h(dir / "history.csv");
      h << "epoch,loss\n";
      h.precision(17);
      for (std::size_t e = 0; e < tr.history.size(); ++e) h << e + 1 << "," << tr.history[e] << "\n";
    }
    save_network(dir / "network", tr.net, tr.history, c.digest,
                 {{"run", id.name()},
                  {"pair", pair_name(id.pair)},
                  {"n_train", id.n_train},
                  {"seed", id.seed},
                  {"data_seed", info.seed},
                  {"gradient_error", gerr},
                  {"initial_loss", tr.initial_loss},
                  {"schedule_digest", json_digest(c.cfg.to_json()["schedule"])}});
    std::cout << "wrote " << dir.string() << " (loss " << tr.initial_loss << " -> " << tr.history.back() << ")\n";
  }
  return 0;
}

std::string problem_label(const Context& c) { return problem_name(c.cfg.problem); }

std::vector<MetricRow> suite_reconstruction(const Context& c, const std::string& data, const std::string& test) {
  require(!data.empty() && !test.empty(), "the reconstruction suite needs --data and --test");
  const fs::path src = data_dir(c, data);
  const fs::path tdir = data_dir(c, test);
  const Index r = max_rank(c);
  std::vector<ReducedBasis> bases;
  for (BasisKind k : kinds_from("all")) {
    const fs::path b = c.workspace / "bases" / src.filename() / (basis_name(k) + "_r" + std::to_string(r));
    require_artifact(c, b, "basis");
    bases.push_back(load_basis(b));
  }
  const Moments test_m = stored_moments(c, tdir, false);
  const SampleSetInfo info = read_sample_set_info(src);
  std::vector<MetricRow> rows;
  for (const ReducedBasis& full : bases) {
    for (Index rank : c.cfg.ranks) {
      const ReducedBasis b = truncate(full, rank);
      const std::string in = b.input_side() ? basis_name(b.kind) : "-";
      const std::string out = b.input_side() ? "-" : basis_name(b.kind);
      for (Reconstruction q : reconstructions_for(b, test_m.has_jacobians)) {
        const ErrorReport e = reconstruction_error(test_m, c.bench.cov.mesh, b, q);
        rows.push_back({"reconstruction_" + reconstruction_name(q), problem_label(c), in, out, rank, info.n, info.seed,
                        e.value, e.denominator});
      }
      const double total = full.eigs.sum();
      rows.push_back({"trailing_eigenvalue_fraction", problem_label(c), in, out, rank, info.n, info.seed,
                      trailing_sum(full, rank) / total, total});
    }
  }
  return rows;
}

std::vector<MetricRow> suite_excess(const Context& c) {
  const fs::path mdir = c.workspace / "reference" / "moments";
  require_artifact(c, mdir, "moments");
  const Moments ref = load_moments(mdir);
  log("excess study over " + std::to_string(c.cfg.seeds.size()) + " seeds");
  const ExcessStudy s = excess_study(c.bench, ref, c.cfg.excess_sizes, c.cfg.seeds, c.cfg.excess_rank);
  std::vector<MetricRow> rows;
  const std::string p = problem_label(c);
  const Index r = c.cfg.excess_rank;
  for (const ExcessRow& e : s.rows) {
    rows.push_back({"excess_output_reconstruction", p, "-", "output_pca", r, e.n, e.seed, e.output_pca, 1.0});
    rows.push_back({"excess_jacobian_by_output", p, "-", "output_dis", r, e.n, e.seed, e.output_dis, 1.0});
    rows.push_back({"excess_jacobian_by_input", p, "input_dis", "-", r, e.n, e.seed, e.input_dis, 1.0});
    rows.push_back({"mean_estimator_error", p, "-", "-", 0, e.n, e.seed, e.mean_error, 1.0});
  }
  rows.push_back({"slope_excess_output_reconstruction", p, "-", "output_pca", r, 0, 0, s.slope_output_pca, 1.0});
  rows.push_back({"slope_excess_jacobian_by_output", p, "-", "output_dis", r, 0, 0, s.slope_output_dis, 1.0});
  rows.push_back({"slope_excess_jacobian_by_input", p, "input_dis", "-", r, 0, 0, s.slope_input_dis, 1.0});
  rows.push_back({"slope_mean_estimator_error", p, "-", "-", 0, 0, 0, s.slope_mean, 1.0});
  return rows;
}

std::vector<MetricRow> suite_generalization(const Context& c, const std::string& test) {
  require(!test.empty(), "the generalization suite needs --test");
  const fs::path tdir = data_dir(c, test);
  require_artifact(c, tdir, "sample_set");
  const fs::path runs_dir = c.workspace / "runs";
  std::vector<fs::path> run_dirs;
  if (fs::is_directory(runs_dir))
    for (const auto& e : fs::directory_iterator(runs_dir))
      if (e.is_directory()) run_dirs.push_back(e.path());
  if (run_dirs.empty()) throw IntegrityError("missing artifact " + runs_dir.string() + " (config digest " + c.digest + ")");
  std::sort(run_dirs.begin(), run_dirs.end());

  std::vector<Surrogate> surrogates;
  std::vector<Json> metas;
  for (const fs::path& d : run_dirs) {
    for (const char* part : {"network", "input_basis", "output_basis"})
      require_artifact(c, d / part, std::string(part) == "network" ? "network" : "basis");
    surrogates.push_back({load_basis(d / "input_basis"), load_basis(d / "output_basis"), load_network(d / "network")});
    surrogates.back().validate();
    metas.push_back(ArtifactReader(d / "network", "network").meta());
  }
  std::vector<GeneralizationAccumulator> acc;
  for (const Surrogate& s : surrogates) acc.emplace_back(s, c.bench.cov.mesh);
  log("evaluating " + std::to_string(acc.size()) + " surrogates");
  for_each_stored_sample(tdir, [&](const StoredSample& s) {
    const Mat jw = s.J ? Mat((*s.J) * c.bench.cov.unwhiten_matrix()) : Mat();
    for (GeneralizationAccumulator& a : acc) a.add(s.x, s.y, s.J ? &jw : nullptr);
  });
  std::vector<MetricRow> rows;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const GeneralizationResult g = acc[i].finalize();
    const Surrogate& s = surrogates[i];
    const Json& m = metas[i];
    MetricRow base{"", problem_label(c), basis_name(s.in.kind), basis_name(s.out.kind), s.net.r,
                   m.at("n_train").get<Index>(), m.at("seed").get<std::uint64_t>(), 0, 1};
    auto add = [&](const std::string& name, double value, double denom) {
      MetricRow r = base;
      r.metric = name;
      r.value = value;
      r.denominator = denom;
      rows.push_back(r);
    };
    add("l2_error", g.l2.value, g.l2.denominator);
    add("l2_decomposition_bound", g.terms.l2_bound() / g.l2.denominator, g.l2.denominator);
    if (g.h1.n_test > 0) {
      add("h1_error", g.h1.value, g.h1.denominator);
      add("h1_decomposition_bound", g.terms.h1_bound() / g.h1.denominator, g.h1.denominator);
    }
  }
  return rows;
}

std::vector<MetricRow> suite_theory(const Context& c) {
  std::vector<MetricRow> rows;
  for (const TheoryRow& t : theory_suite(100, c.cfg.seeds.front())) {
    const auto seed = static_cast<std::uint64_t>(t.map);
    rows.push_back({"hermite_k_d", "hermite", "-", "-", t.dim_in, t.degree, seed, t.k_d, double(t.degree)});
    rows.push_back({"hermite_k_h", "hermite", "-", "-", t.dim_in, t.degree, seed, t.k_h, double(t.degree - 1)});
    rows.push_back({"poincare_max_gap", "hermite", "-", "-", t.dim_in, t.degree, seed, t.poincare_max_gap, 1.0});
  }
  return rows;
}

int cmd_evaluate(const Context& c, const std::string& suite, const std::string& data, const std::string& test) {
  std::vector<MetricRow> rows;
  Json inputs = {{"data", data}, {"test", test}};
  if (suite == "reconstruction")
    rows = suite_reconstruction(c, data, test);
  else if (suite == "excess")
    rows = suite_excess(c);
  else if (suite == "generalization")
    rows = suite_generalization(c, test);
  else if (suite == "theory")
    rows = suite_theory(c);
  else
    throw PreconditionError("unknown suite '" + suite + "'");
  write_csv(c, suite, rows, inputs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-basis neural operator experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_file, "JSON experiment config (overrides --preset/--problem)");
  app.add_option("--preset", o.preset, "desk or full")->check(CLI::IsMember({"desk", "full"}));
  app.add_option("--problem", o.problem, "semilinear or burgers")->check(CLI::IsMember({"semilinear", "burgers"}));
  app.add_option("--out", o.out, "output root (default: $RBNO_OUTPUT_ROOT or ./rbno_output)");

  Index gen_n = 0;
  std::uint64_t gen_seed = 0;
  bool values_only = false;
  auto* gen = app.add_subcommand("generate", "generate a sample set");
  gen->add_option("--n", gen_n, "number of samples")->required();
  gen->add_option("--seed", gen_seed, "sample stream seed")->required();
  gen->add_flag("--values-only", values_only, "skip Jacobians");

  std::string data, kind = "all", test, pair = "all", suite;
  std::optional<Index> rank;
  bool reference = false;
  auto* basis = app.add_subcommand("basis", "compute reduced bases");
  basis->add_option("--data", data, "sample set directory or name under <workspace>/data");
  basis->add_option("--kind", kind, "all, input_pca, output_pca, input_dis or output_dis");
  basis->add_option("--rank", rank, "rank (default: largest configured rank)");
  basis->add_flag("--reference", reference, "stream the large reference set and build proxy bases");

  std::vector<Index> ranks;
  std::optional<std::uint64_t> train_seed_arg;
  auto* tr = app.add_subcommand("train", "train surrogates on a sample set");
  tr->add_option("--data", data, "training sample set")->required();
  tr->add_option("--pair", pair, "IN:OUT basis pair or all");
  tr->add_option("--rank", ranks, "ranks (default: configured ranks)");
  tr->add_option("--seed", train_seed_arg, "initialization and shuffling seed");

  auto* ev = app.add_subcommand("evaluate", "emit a metrics CSV");
  ev->add_option("--suite", suite, "reconstruction, excess, generalization or theory")
      ->required()
      ->check(CLI::IsMember({"reconstruction", "excess", "generalization", "theory"}));
  ev->add_option("--data", data, "training sample set (reconstruction suite)");
  ev->add_option("--test", test, "test sample set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const Context c = make_context(o);
    if (gen->parsed()) return cmd_generate(c, gen_n, gen_seed, values_only);
    if (basis->parsed()) return cmd_basis(c, data, kind, rank, reference);
    if (tr->parsed()) return cmd_train(c, data, pair, ranks, train_seed_arg);
    if (ev->parsed()) return cmd_evaluate(c, suite, data, test);
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const PreconditionError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
