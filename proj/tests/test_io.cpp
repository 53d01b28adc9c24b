#include "doctest.h"
#include "rbno/io.hpp"

#include <fstream>

using namespace rbno;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rbno_test_io_" + name);
  fs::remove_all(p);
  return p;
}

void flip_byte(const fs::path& file, std::streamoff at) {
  std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(at);
  char c = 0;
  f.get(c);
  f.seekp(at);
  f.put(static_cast<char>(c ^ 0x01));
}

}  // namespace

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(json_digest(Json{{"b", 1}, {"a", 2}}) == json_digest(Json{{"a", 2}, {"b", 1}}));
}

TEST_CASE("matrix blobs are row-major little-endian float64") {
  const fs::path dir = scratch("blob");
  fs::create_directories(dir);
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const std::string sum = write_matrix(dir / "m.bin", m);
  CHECK(sum == sha256_file(dir / "m.bin"));
  std::ifstream in(dir / "m.bin", std::ios::binary);
  double first[3];
  in.read(reinterpret_cast<char*>(first), sizeof(first));
  CHECK(first[0] == 1.0);
  CHECK(first[1] == 2.0);
  CHECK(first[2] == 3.0);
  CHECK(read_matrix(dir / "m.bin", 2, 3) == m);
  CHECK_THROWS_AS(read_matrix(dir / "m.bin", 3, 3), IntegrityError);
  fs::remove_all(dir);
}

TEST_CASE("sample set, basis and network round trips") {
  const Benchmark bench = make_benchmark(ProblemKind::SteadyBurgers, 16);
  const SampleSet set = generate_dataset(bench, 5, 3);
  const fs::path dir = scratch("roundtrip");
  CHECK_FALSE(artifact_exists(dir / "data"));
  save_sample_set(dir / "data", set, "digest-1");
  CHECK(artifact_exists(dir / "data"));
  const SampleSet back = load_sample_set(dir / "data");
  CHECK(back.X == set.X);
  CHECK(back.Y == set.Y);
  REQUIRE(back.J.size() == set.J.size());
  for (std::size_t k = 0; k < set.J.size(); ++k) CHECK(back.J[k] == set.J[k]);
  CHECK(back.problem == set.problem);
  CHECK(back.seed == 3);
  CHECK(back.iterations == set.iterations);
  CHECK(ArtifactReader(dir / "data", "sample_set").config_digest() == "digest-1");

  const ReducedBasis b = output_dis(set, bench.cov, 4);
  save_basis(dir / "basis", b, "digest-1");
  const ReducedBasis bb = load_basis(dir / "basis");
  CHECK(bb.kind == b.kind);
  CHECK(bb.r == 4);
  CHECK(bb.cols == b.cols);
  CHECK(bb.encoder == b.encoder);
  CHECK(bb.eigs == b.eigs);
  CHECK(bb.mean == b.mean);

  LatentNetwork net = make_network(4, 3, 8, Activation::GeLU);
  xavier_init(net, 9);
  save_network(dir / "net", net, {1.0, 0.5}, "digest-1", Json{{"run", "x"}});
  const LatentNetwork nb = load_network(dir / "net");
  CHECK(nb.params() == net.params());
  CHECK(nb.activation == Activation::GeLU);
  CHECK(ArtifactReader(dir / "net", "network").meta().at("run") == "x");
  CHECK_THROWS_AS(load_basis(dir / "net"), IntegrityError);

  const Moments m = moments_of(set, bench.cov);
  save_moments(dir / "moments", m, "digest-1");
  const Moments mb = load_moments(dir / "moments");
  CHECK(mb.n == 5);
  CHECK(mb.mean == m.mean);
  CHECK(mb.m2 == m.m2);
  CHECK(mb.h_in == m.h_in);
  CHECK(mb.h_out == m.h_out);
  CHECK(mb.sum_y2 == m.sum_y2);
  CHECK(mb.sum_j2 == m.sum_j2);
  fs::remove_all(dir);
}

TEST_CASE("streamed generation matches the in-memory layout") {
  const Benchmark bench = make_benchmark(ProblemKind::SemilinearElliptic, 12);
  const fs::path a = scratch("stream_a"), b = scratch("stream_b");
  const SampleSet set = generate_dataset(bench, 6, 4);
  save_sample_set(a, set, "d");
  generate_sample_set(b, bench, 6, 4, true, "d");
  for (const char* blob : {"X.bin", "Y.bin", "J.bin"}) CHECK(sha256_file(a / blob) == sha256_file(b / blob));
  CHECK(ArtifactReader(a, "sample_set").meta() == ArtifactReader(b, "sample_set").meta());
  const SampleSetInfo info = read_sample_set_info(b);
  CHECK(info.n == 6);
  CHECK(info.has_jacobians);
  CHECK(info.config_digest == "d");
  Index visited = 0;
  for_each_stored_sample(b, [&](const StoredSample& s) {
    CHECK(s.x == set.X.col(s.k));
    CHECK(s.y == set.Y.col(s.k));
    REQUIRE(s.J != nullptr);
    CHECK(*s.J == set.J[static_cast<std::size_t>(s.k)]);
    ++visited;
  });
  CHECK(visited == 6);
  generate_sample_set(a, bench, 3, 4, false, "d");
  for_each_stored_sample(a, [&](const StoredSample& s) { CHECK(s.J == nullptr); });
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("corruption is detected") {
  const Benchmark bench = make_benchmark(ProblemKind::SemilinearElliptic, 8);
  const fs::path dir = scratch("corrupt");
  save_sample_set(dir, generate_dataset(bench, 3, 1), "d");
  ArtifactReader(dir, "sample_set").verify_all();
  flip_byte(dir / "Y.bin", 17);
  CHECK_THROWS_AS(ArtifactReader(dir, "sample_set").verify_all(), IntegrityError);
  CHECK_THROWS_AS(load_sample_set(dir), IntegrityError);
  fs::remove(dir / "manifest.json");
  CHECK_THROWS_AS(load_sample_set(dir), IntegrityError);
  std::ofstream(dir / "manifest.json") << "{not json";
  CHECK_THROWS_AS(load_sample_set(dir), IntegrityError);
  fs::remove_all(dir);
}
