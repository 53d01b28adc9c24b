#pragma once

#include "rbno/io.hpp"
#include "rbno/metrics.hpp"

#include <functional>
#include <string>
#include <vector>

namespace rbno {

/// Latent network hyperparameters; the width is a multiple of the rank.
struct NetworkSettings {
  int depth = 6;
  int width_multiple = 2;
  Activation activation = Activation::Softplus;
  double lr0 = 1e-3;
};

/// Default network settings per benchmark problem.
NetworkSettings default_network(ProblemKind kind);

struct BasisPair {
  BasisKind in = BasisKind::InputPCA;
  BasisKind out = BasisKind::OutputPCA;
};
std::string pair_name(const BasisPair& p);
/// The four input/output combinations in a fixed order.
std::vector<BasisPair> all_pairs();

struct ExperimentConfig {
  ProblemKind problem = ProblemKind::SemilinearElliptic;
  CovarianceParams cov{};
  int n_el = 256;
  std::vector<Index> train_sizes;
  Index test_size = 0;
  Index reference_size = 0;
  std::vector<Index> excess_sizes;
  Index excess_rank = 10;
  std::vector<Index> ranks;
  std::vector<BasisPair> pairs;
  NetworkSettings network;
  TrainingSchedule schedule;
  std::vector<std::uint64_t> seeds;        // sampling-error study
  std::vector<std::uint64_t> train_seeds;  // generalization study
  std::uint64_t test_seed = 1001;
  std::uint64_t reference_seed = 2002;
  double bound_constant = 1.0;
  std::string output_dir;

  /// Ranks within [1, d], sizes positive, seeds distinct and disjoint from
  /// the test and reference streams.
  void validate() const;
  Json to_json() const;
  static ExperimentConfig from_json(const Json& j);
  /// Digest of the configuration without `output_dir`.
  std::string digest() const;
};

/// `desk` or `full` sizes for one problem.
ExperimentConfig preset(const std::string& name, ProblemKind problem);

/// Problem and input measure described by a config.
Benchmark make_benchmark(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Streamed dataset moments.

/// Moments of the prefixes [0, N) of one sample stream for every N in
/// `sizes` (ascending), in a single pass.
std::vector<Moments> prefix_moments(const Benchmark& b, std::uint64_t seed, const std::vector<Index>& sizes,
                                    bool with_jacobians);

/// Rank-r basis of the given kind from dataset moments (input PCA is exact).
ReducedBasis basis_from_moments(BasisKind kind, const Moments& m, const SpectralCovariance& cov, Index r);

// ---------------------------------------------------------------------------
// Sampling-error study: excess reconstruction risk and the mean estimator
// against a large reference set, over nested sample sizes and seeds.

struct ExcessRow {
  std::uint64_t seed = 0;
  Index n = 0;
  double output_pca = 0;   // output reconstruction excess
  double output_dis = 0;   // Jacobian-by-output excess
  double input_dis = 0;    // Jacobian-by-input excess
  double mean_error = 0;   // ||F^_N - F^_ref||_M^2
};

struct ExcessStudy {
  std::vector<ExcessRow> rows;
  std::vector<Index> sizes;
  /// Log-log slopes of the seed-averaged quantities against N.
  double slope_output_pca = 0, slope_output_dis = 0, slope_input_dis = 0, slope_mean = 0;
};

/// Excess risks are measured on the reference moments, which stand in for
/// the population.
ExcessStudy excess_study(const Benchmark& b, const Moments& reference, const std::vector<Index>& sizes,
                         const std::vector<std::uint64_t>& seeds, Index rank);

// ---------------------------------------------------------------------------
// Generalization study: train surrogates for each (pair, N, seed) and
// evaluate them in one streamed pass over the test set.

struct RunId {
  BasisPair pair;
  Index rank = 0;
  Index n_train = 0;
  std::uint64_t seed = 0;
  std::string name() const;
};

struct TrainedRun {
  RunId id;
  Surrogate surrogate;
  double gradient_error = 0;  // finite-difference gate on the initial network
  double initial_loss = 0;
  std::vector<double> history;
};

struct EvaluatedRun {
  TrainedRun run;
  GeneralizationResult result;
};

/// Relative finite-difference error allowed before a run may train.
inline constexpr double kGradientGate = 1e-5;

using Progress = std::function<void(const std::string&)>;

/// Trains every run of one seed.  Throws NumericalError when the gradient
/// gate fails and Divergence when training blows up.
std::vector<TrainedRun> train_seed(const Benchmark& b, const ExperimentConfig& cfg, std::uint64_t seed,
                                   Index rank, const Progress& progress = {});

/// Evaluates surrogates over `n` test samples of the given stream.
std::vector<GeneralizationResult> evaluate_runs(const Benchmark& b, const std::vector<const Surrogate*>& surrogates,
                                                std::uint64_t test_seed, Index n);

std::vector<EvaluatedRun> generalization_study(const Benchmark& b, const ExperimentConfig& cfg, Index rank,
                                               const Progress& progress = {});

// ---------------------------------------------------------------------------
// Hermite-map theory suite.

struct TheoryRow {
  int map = 0;
  int degree = 0;
  int dim_in = 0;
  double k_d = 0, k_h = 0;
  double poincare_max_gap = 0;  // max over r of lhs - rhs (should be <= 0)
  double linear_equality_error = 0;  // |lhs - rhs| max, degree-1 maps only
};

/// `count` random maps with degrees cycling through 1..4.
std::vector<TheoryRow> theory_suite(int count, std::uint64_t seed);

}  // namespace rbno
