#pragma once

#include "rbno/core.hpp"
#include "rbno/moments.hpp"
#include "rbno/pde.hpp"
#include "rbno/reduction.hpp"
#include "rbno/surrogate.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace rbno {

namespace fs = std::filesystem;
using Json = nlohmann::json;

/// Hex SHA-256 of a byte string or of a file's contents.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// SHA-256 of the canonical (sorted-key, compact) JSON serialization.
std::string json_digest(const Json& j);

/// Row-major little-endian float64 matrix file.  Returns the file checksum.
std::string write_matrix(const fs::path& path, const Mat& m);
Mat read_matrix(const fs::path& path, Index rows, Index cols);

/// Directory artifact: `manifest.json` plus binary blobs.  The manifest lists
/// every blob with its shape and checksum and carries the config digest.
class ArtifactWriter {
 public:
  ArtifactWriter(fs::path dir, std::string kind, std::string config_digest);
  ~ArtifactWriter();
  void add_matrix(const std::string& name, const Mat& m);
  /// Blob written in row blocks of `cols` columns; closed by `commit`.
  void open_stream(const std::string& name, Index cols);
  void append(const std::string& name, const Mat& rows);
  Json& meta() { return meta_; }
  /// Writes the manifest last, through a temporary file and rename, so a
  /// complete manifest implies complete blobs.
  void commit();

 private:
  struct Stream;
  fs::path dir_;
  Json manifest_, meta_;
  std::map<std::string, std::unique_ptr<Stream>> streams_;
};

class ArtifactReader {
 public:
  /// Loads the manifest; throws IntegrityError when missing or malformed and
  /// when `kind` does not match.
  ArtifactReader(fs::path dir, const std::string& kind);
  const Json& meta() const { return meta_; }
  const std::string& config_digest() const { return digest_; }
  bool has(const std::string& name) const;
  /// Reads a blob and verifies its checksum (IntegrityError on mismatch).
  Mat matrix(const std::string& name) const;
  /// Checks every blob without keeping it.
  void verify_all() const;
  /// Reads row blocks of `block_rows` rows in order.  Call `verify_all`
  /// first: blocks are not checksummed individually.
  void for_each_block(const std::string& name, Index block_rows, const std::function<void(Index, const Mat&)>& fn) const;

 private:
  fs::path dir_;
  Json manifest_, meta_;
  std::string digest_;
};

/// True when `dir` holds a committed manifest.
bool artifact_exists(const fs::path& dir);

// Typed artifacts.  Sample sets store X and Y as N x d and J as (N d) x d,
// each sample's Jacobian in d consecutive rows.

void save_sample_set(const fs::path& dir, const SampleSet& set, const std::string& config_digest);
SampleSet load_sample_set(const fs::path& dir);

/// Generates samples [0, n) of a seed stream straight to disk, one sample at
/// a time, in the same layout as `save_sample_set`.
void generate_sample_set(const fs::path& dir, const Benchmark& b, Index n, std::uint64_t seed, bool with_jacobians,
                         const std::string& config_digest);

/// Visits stored samples in order with their nodal Jacobian (nullptr when the
/// set has none) after verifying every checksum.  Memory stays O(d^2).
struct StoredSample {
  Index k;
  Vec x, y;
  const Mat* J;
};
struct SampleSetInfo {
  ProblemKind problem;
  CovarianceParams cov_params;
  int n_el;
  std::uint64_t seed;
  Index n, dim;
  bool has_jacobians;
  std::string config_digest;
};
SampleSetInfo read_sample_set_info(const fs::path& dir);
void for_each_stored_sample(const fs::path& dir, const std::function<void(const StoredSample&)>& fn);

void save_basis(const fs::path& dir, const ReducedBasis& b, const std::string& config_digest);
ReducedBasis load_basis(const fs::path& dir);

void save_network(const fs::path& dir, const LatentNetwork& net, const std::vector<double>& history,
                  const std::string& config_digest, const Json& extra = Json::object());
LatentNetwork load_network(const fs::path& dir);

void save_moments(const fs::path& dir, const Moments& m, const std::string& config_digest, const Json& extra = Json::object());
Moments load_moments(const fs::path& dir);

}  // namespace rbno
