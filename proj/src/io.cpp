#include "rbno/io.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

namespace rbno {

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1)
      throw NumericalError("SHA-256 initialization failed");
  }
  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw NumericalError("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), out, &len) != 1) throw NumericalError("SHA-256 finalization failed");
    std::ostringstream s;
    for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << int(out[i]);
    return s.str();
  }

 private:
  std::unique_ptr<EVP_MD_CTX, void (*)(EVP_MD_CTX*)> ctx_;
};

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Json basis_meta(const ReducedBasis& b) {
  return {{"basis", basis_name(b.kind)},
          {"source", b.source == BasisSource::Exact ? "exact" : "empirical"},
          {"n_samples", b.n_samples},
          {"seed", b.seed},
          {"rank", b.r},
          {"dim", b.dim()}};
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot read " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string json_digest(const Json& j) { return sha256_hex(j.dump()); }

std::string write_matrix(const fs::path& path, const Mat& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  const auto bytes = static_cast<std::size_t>(rm.size()) * sizeof(double);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(bytes));
    if (!out) throw Error("write failed: " + path.string());
  }
  Sha256 h;
  h.update(rm.data(), bytes);
  return h.hex();
}

Mat read_matrix(const fs::path& path, Index rows, Index cols) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IntegrityError("missing blob " + path.string());
  const auto want = static_cast<std::streamoff>(rows * cols) * static_cast<std::streamoff>(sizeof(double));
  if (in.tellg() != want) throw IntegrityError("blob " + path.string() + " has the wrong size");
  in.seekg(0);
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), want);
  if (!in) throw IntegrityError("short read on " + path.string());
  return rm;
}

struct ArtifactWriter::Stream {
  std::ofstream out;
  Sha256 hash;
  Index rows = 0, cols = 0;
};

ArtifactWriter::~ArtifactWriter() = default;

ArtifactWriter::ArtifactWriter(fs::path dir, std::string kind, std::string config_digest)
    : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  fs::remove(dir_ / "manifest.json");
  manifest_ = {{"kind", std::move(kind)}, {"config_digest", std::move(config_digest)}, {"blobs", Json::object()}};
  meta_ = Json::object();
}

void ArtifactWriter::add_matrix(const std::string& name, const Mat& m) {
  const std::string file = name + ".bin";
  const std::string sum = write_matrix(dir_ / file, m);
  manifest_["blobs"][name] = {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}, {"sha256", sum}};
}

void ArtifactWriter::open_stream(const std::string& name, Index cols) {
  require(!streams_.count(name) && !manifest_["blobs"].contains(name), "blob " + name + " already written");
  auto st = std::make_unique<Stream>();
  st->cols = cols;
  st->out.open(dir_ / (name + ".bin"), std::ios::binary | std::ios::trunc);
  if (!st->out) throw Error("cannot write " + (dir_ / (name + ".bin")).string());
  streams_.emplace(name, std::move(st));
}

void ArtifactWriter::append(const std::string& name, const Mat& rows) {
  auto it = streams_.find(name);
  require(it != streams_.end(), "no open stream " + name);
  Stream& st = *it->second;
  require(rows.cols() == st.cols, "row block width mismatch for " + name);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = rows;
  const auto bytes = static_cast<std::size_t>(rm.size()) * sizeof(double);
  st.out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(bytes));
  if (!st.out) throw Error("write failed for blob " + name);
  st.hash.update(rm.data(), bytes);
  st.rows += rows.rows();
}

void ArtifactWriter::commit() {
  for (auto& [name, st] : streams_) {
    st->out.close();
    if (!st->out) throw Error("write failed for blob " + name);
    manifest_["blobs"][name] = {{"file", name + ".bin"}, {"rows", st->rows}, {"cols", st->cols}, {"sha256", st->hash.hex()}};
  }
  streams_.clear();
  manifest_["meta"] = meta_;
  write_text_atomic(dir_ / "manifest.json", manifest_.dump(2) + "\n");
}

bool artifact_exists(const fs::path& dir) { return fs::is_regular_file(dir / "manifest.json"); }

ArtifactReader::ArtifactReader(fs::path dir, const std::string& kind) : dir_(std::move(dir)) {
  std::ifstream in(dir_ / "manifest.json");
  if (!in) throw IntegrityError("missing manifest in " + dir_.string());
  try {
    manifest_ = Json::parse(in);
    if (manifest_.at("kind").get<std::string>() != kind)
      throw IntegrityError(dir_.string() + " holds a " + manifest_.at("kind").get<std::string>() + ", expected " +
                           kind);
    meta_ = manifest_.at("meta");
    digest_ = manifest_.at("config_digest").get<std::string>();
    (void)manifest_.at("blobs").items();
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed manifest in " + dir_.string() + ": " + e.what());
  }
}

bool ArtifactReader::has(const std::string& name) const { return manifest_["blobs"].contains(name); }

Mat ArtifactReader::matrix(const std::string& name) const {
  if (!has(name)) throw IntegrityError("manifest in " + dir_.string() + " lists no blob " + name);
  const Json& e = manifest_["blobs"][name];
  const fs::path path = dir_ / e.at("file").get<std::string>();
  const Mat m = read_matrix(path, e.at("rows").get<Index>(), e.at("cols").get<Index>());
  Sha256 h;
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  h.update(rm.data(), static_cast<std::size_t>(rm.size()) * sizeof(double));
  if (h.hex() != e.at("sha256").get<std::string>()) throw IntegrityError("checksum mismatch for " + path.string());
  return m;
}

void ArtifactReader::verify_all() const {
  for (const auto& [name, e] : manifest_["blobs"].items()) {
    const fs::path path = dir_ / e.at("file").get<std::string>();
    if (!fs::is_regular_file(path)) throw IntegrityError("missing blob " + path.string());
    if (sha256_file(path) != e.at("sha256").get<std::string>())
      throw IntegrityError("checksum mismatch for " + path.string());
  }
}

void ArtifactReader::for_each_block(const std::string& name, Index block_rows,
                                    const std::function<void(Index, const Mat&)>& fn) const {
  if (!has(name)) throw IntegrityError("manifest in " + dir_.string() + " lists no blob " + name);
  const Json& e = manifest_["blobs"][name];
  const Index rows = e.at("rows").get<Index>(), cols = e.at("cols").get<Index>();
  require(block_rows >= 1 && rows % block_rows == 0, "block size must divide the blob rows");
  const fs::path path = dir_ / e.at("file").get<std::string>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("missing blob " + path.string());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> block(block_rows, cols);
  const auto bytes = static_cast<std::streamsize>(block.size() * static_cast<Index>(sizeof(double)));
  Mat m;
  for (Index b = 0; b < rows / block_rows; ++b) {
    in.read(reinterpret_cast<char*>(block.data()), bytes);
    if (!in) throw IntegrityError("short read on " + path.string());
    m = block;
    fn(b, m);
  }
}

namespace {

Json sample_set_meta(ProblemKind problem, const CovarianceParams& c, int n_el, std::uint64_t seed, Index n, Index d,
                     const std::vector<int>& iterations) {
  return {{"problem", problem_name(problem)}, {"a_delta", c.a_delta}, {"a_I", c.a_I}, {"alpha", c.alpha},
          {"n_el", n_el}, {"seed", seed}, {"n", n}, {"dim", d}, {"iterations", iterations}};
}

}  // namespace

void generate_sample_set(const fs::path& dir, const Benchmark& b, Index n, std::uint64_t seed, bool with_jacobians,
                         const std::string& config_digest) {
  require(n >= 1, "sample count must be positive");
  const Index d = b.problem.dim();
  ArtifactWriter w(dir, "sample_set", config_digest);
  w.open_stream("X", d);
  w.open_stream("Y", d);
  if (with_jacobians) w.open_stream("J", d);
  std::vector<int> iterations;
  for_each_sample(b, seed, 0, static_cast<std::uint64_t>(n), with_jacobians ? kNodalJacobian : kValues,
                  [&](std::uint64_t k, const Sample& s) {
                    try {
                      w.append("X", s.x.transpose());
                      w.append("Y", s.y.transpose());
                      if (with_jacobians) w.append("J", s.J);
                    } catch (const Error& e) {
                      throw Error("sample " + std::to_string(k) + ": " + e.what());
                    }
                    iterations.push_back(s.iterations);
                  });
  w.meta() = sample_set_meta(b.problem.kind, {b.cov.a_delta, b.cov.a_I, b.cov.alpha}, b.problem.mesh.n_el, seed, n, d,
                             iterations);
  w.commit();
}

SampleSetInfo read_sample_set_info(const fs::path& dir) {
  ArtifactReader r(dir, "sample_set");
  try {
    const Json& m = r.meta();
    return {parse_problem(m.at("problem").get<std::string>()),
            {m.at("a_delta").get<double>(), m.at("a_I").get<double>(), m.at("alpha").get<double>()},
            m.at("n_el").get<int>(),
            m.at("seed").get<std::uint64_t>(),
            m.at("n").get<Index>(),
            m.at("dim").get<Index>(),
            r.has("J"),
            r.config_digest()};
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed sample-set metadata in " + dir.string() + ": " + e.what());
  } catch (const PreconditionError& e) {
    throw IntegrityError("malformed sample-set metadata in " + dir.string() + ": " + e.what());
  }
}

void for_each_stored_sample(const fs::path& dir, const std::function<void(const StoredSample&)>& fn) {
  const SampleSetInfo info = read_sample_set_info(dir);
  ArtifactReader r(dir, "sample_set");
  r.verify_all();
  const Mat X = r.matrix("X").transpose();
  const Mat Y = r.matrix("Y").transpose();
  if (X.cols() != info.n || Y.cols() != info.n) throw IntegrityError("sample count mismatch in " + dir.string());
  if (info.has_jacobians) {
    r.for_each_block("J", info.dim, [&](Index k, const Mat& J) { fn({k, X.col(k), Y.col(k), &J}); });
  } else {
    for (Index k = 0; k < info.n; ++k) fn({k, X.col(k), Y.col(k), nullptr});
  }
}

void save_sample_set(const fs::path& dir, const SampleSet& set, const std::string& config_digest) {
  ArtifactWriter w(dir, "sample_set", config_digest);
  const Index n = set.size(), d = set.dim();
  w.add_matrix("X", set.X.transpose());
  w.add_matrix("Y", set.Y.transpose());
  if (set.has_jacobians()) {
    Mat J(n * d, d);
    for (Index k = 0; k < n; ++k) J.middleRows(k * d, d) = set.J[static_cast<std::size_t>(k)];
    w.add_matrix("J", J);
  }
  w.meta() = sample_set_meta(set.problem, set.cov_params, set.n_el, set.seed, n, d, set.iterations);
  w.commit();
}

SampleSet load_sample_set(const fs::path& dir) {
  ArtifactReader r(dir, "sample_set");
  const Json& m = r.meta();
  SampleSet set;
  try {
    set.problem = parse_problem(m.at("problem").get<std::string>());
    set.cov_params = {m.at("a_delta").get<double>(), m.at("a_I").get<double>(), m.at("alpha").get<double>()};
    set.n_el = m.at("n_el").get<int>();
    set.seed = m.at("seed").get<std::uint64_t>();
    set.iterations = m.at("iterations").get<std::vector<int>>();
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed sample-set metadata in " + dir.string() + ": " + e.what());
  }
  set.X = r.matrix("X").transpose();
  set.Y = r.matrix("Y").transpose();
  if (r.has("J")) {
    const Mat J = r.matrix("J");
    const Index d = set.dim();
    set.J.reserve(static_cast<std::size_t>(set.size()));
    for (Index k = 0; k < set.size(); ++k) set.J.push_back(J.middleRows(k * d, d));
  }
  return set;
}

void save_basis(const fs::path& dir, const ReducedBasis& b, const std::string& config_digest) {
  ArtifactWriter w(dir, "basis", config_digest);
  w.add_matrix("cols", b.cols);
  w.add_matrix("frame", b.frame);
  w.add_matrix("encoder", b.encoder);
  w.add_matrix("eigs", b.eigs);
  w.add_matrix("mean", b.mean);
  w.meta() = basis_meta(b);
  w.commit();
}

ReducedBasis load_basis(const fs::path& dir) {
  ArtifactReader r(dir, "basis");
  ReducedBasis b;
  try {
    const Json& m = r.meta();
    b.kind = parse_basis(m.at("basis").get<std::string>());
    b.source = m.at("source").get<std::string>() == "exact" ? BasisSource::Exact : BasisSource::Empirical;
    b.n_samples = m.at("n_samples").get<Index>();
    b.seed = m.at("seed").get<std::uint64_t>();
    b.r = m.at("rank").get<Index>();
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed basis metadata in " + dir.string() + ": " + e.what());
  }
  b.cols = r.matrix("cols");
  b.frame = r.matrix("frame");
  b.encoder = r.matrix("encoder");
  b.eigs = r.matrix("eigs");
  b.mean = r.matrix("mean");
  return b;
}

void save_network(const fs::path& dir, const LatentNetwork& net, const std::vector<double>& history,
                  const std::string& config_digest, const Json& extra) {
  ArtifactWriter w(dir, "network", config_digest);
  w.add_matrix("params", net.params());
  w.add_matrix("history", Eigen::Map<const Vec>(history.data(), static_cast<Index>(history.size())));
  Json meta = extra;
  meta["r"] = net.r;
  meta["width"] = net.width;
  meta["depth"] = net.depth;
  meta["activation"] = activation_name(net.activation);
  w.meta() = meta;
  w.commit();
}

LatentNetwork load_network(const fs::path& dir) {
  ArtifactReader r(dir, "network");
  LatentNetwork net;
  try {
    const Json& m = r.meta();
    net = make_network(m.at("r").get<Index>(), m.at("depth").get<int>(), m.at("width").get<Index>(),
                       parse_activation(m.at("activation").get<std::string>()));
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed network metadata in " + dir.string() + ": " + e.what());
  }
  const Vec theta = r.matrix("params");
  if (theta.size() != net.n_params()) throw IntegrityError("parameter count mismatch in " + dir.string());
  net.set_params(theta);
  return net;
}

void save_moments(const fs::path& dir, const Moments& m, const std::string& config_digest, const Json& extra) {
  ArtifactWriter w(dir, "moments", config_digest);
  w.add_matrix("mean", m.mean);
  w.add_matrix("m2", m.m2);
  if (m.has_jacobians) {
    w.add_matrix("h_in", m.h_in);
    w.add_matrix("h_out", m.h_out);
  }
  Json meta = extra;
  meta["n"] = m.n;
  meta["sum_y2"] = m.sum_y2;
  meta["sum_j2"] = m.sum_j2;
  meta["has_jacobians"] = m.has_jacobians;
  w.meta() = meta;
  w.commit();
}

Moments load_moments(const fs::path& dir) {
  ArtifactReader r(dir, "moments");
  Moments m;
  try {
    const Json& meta = r.meta();
    m.n = meta.at("n").get<Index>();
    m.sum_y2 = meta.at("sum_y2").get<double>();
    m.sum_j2 = meta.at("sum_j2").get<double>();
    m.has_jacobians = meta.at("has_jacobians").get<bool>();
  } catch (const Json::exception& e) {
    throw IntegrityError("malformed moments metadata in " + dir.string() + ": " + e.what());
  }
  m.mean = r.matrix("mean");
  m.m2 = r.matrix("m2");
  if (m.has_jacobians) {
    m.h_in = r.matrix("h_in");
    m.h_out = r.matrix("h_out");
  }
  return m;
}

}  // namespace rbno
