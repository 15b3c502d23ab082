#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "doctest.h"
#include "magr/dataset.hpp"
#include "magr/error.hpp"
#include "magr/evaluation.hpp"
#include "magr/kernels.hpp"
#include "test_util.hpp"

using namespace magr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "magr_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::trunc) << text;
}

DatasetPaths three_node_files(const std::string& edges) {
  DatasetPaths paths;
  paths.features_v = scratch("fv.csv");
  paths.features_t = scratch("ft.csv");
  paths.edges = scratch("edges.txt");
  write_text(paths.features_v, "1,0\n0,1\n1,1\n");
  write_text(paths.features_t, "0,1\n1,0\n1,1\n");
  write_text(paths.edges, edges);
  return paths;
}

MagDataset with_edges(std::size_t n, std::vector<Edge> edges) {
  MagDataset ds;
  ds.features_v = DenseMatrix(n, 2, 1.0);
  ds.features_t = DenseMatrix(n, 2, 1.0);
  ds.edges = std::move(edges);
  ds.split = assign_split(n, SplitConfig{});
  return ds;
}

}  // namespace

TEST_CASE("load_dataset parses features and edges") {
  const auto ds = load_dataset(three_node_files("0 1\n1 2\n"), SplitConfig{});
  CHECK(ds.num_nodes() == 3);
  CHECK(ds.edges.size() == 2);
}

TEST_CASE("load_dataset drops self-loops and duplicate pairs") {
  LoadReport report;
  const auto a = load_dataset(three_node_files("0 1\n0 0\n"), SplitConfig{}, &report);
  CHECK(a.edges.size() == 1);
  CHECK(report.edges.self_loops_dropped == 1);
  const auto b = load_dataset(three_node_files("# comment\n0 1\n1 0\n"), SplitConfig{}, &report);
  CHECK(b.edges.size() == 1);
  CHECK(b.edges[0] == Edge{0, 1});
  CHECK(report.edges.duplicates_dropped == 1);
}

TEST_CASE("load_dataset errors") {
  CHECK_THROWS_AS(load_dataset(three_node_files("0 5\n"), SplitConfig{}), Error);
  CHECK_THROWS_AS(load_dataset(three_node_files("0 x\n"), SplitConfig{}), Error);
  auto paths = three_node_files("0 1\n");
  write_text(paths.features_t, "0,1\n1,0\n");
  try {
    load_dataset(paths, SplitConfig{});
    FAIL("expected a row-count error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("split assignment partitions nodes deterministically") {
  const auto a = assign_split(101, SplitConfig{});
  CHECK(a == assign_split(101, SplitConfig{}));
  std::size_t counts[3] = {0, 0, 0};
  for (Split s : a) ++counts[static_cast<int>(s)];
  CHECK(counts[0] + counts[1] + counts[2] == 101);
  CHECK(std::abs(static_cast<double>(counts[0]) - 60.6) <= 1.0);
  CHECK(std::abs(static_cast<double>(counts[1]) - 20.2) <= 1.0);
  SplitConfig other;
  other.seed = 44;
  CHECK(assign_split(101, other) != a);
  SplitConfig bad;
  bad.train = 0.7;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("generate_synthetic zero mismatch and zero noise gives equal features") {
  SynthConfig cfg;
  cfg.num_nodes = 40;
  cfg.theta = 0.0;
  cfg.sigma_v = cfg.sigma_t = 0.0;
  const auto ds = generate_synthetic(cfg);
  CHECK(ds.features_v == ds.features_t);
}

TEST_CASE("generate_synthetic without cross-class edges") {
  SynthConfig cfg;
  cfg.num_nodes = 60;
  cfg.num_classes = 2;
  cfg.p_in = 0.3;
  cfg.p_out = 0.0;
  const auto ds = generate_synthetic(cfg);
  REQUIRE(ds.categories);
  CHECK(!ds.edges.empty());
  for (const auto& e : ds.edges) CHECK((*ds.categories)[e.u] == (*ds.categories)[e.v]);
  for (std::size_t i = 0; i < 60; ++i) CHECK((*ds.categories)[i] == static_cast<int>(i % 2));
}

TEST_CASE("generate_synthetic mismatch lowers cross-modal kNN overlap") {
  SynthConfig cfg;
  cfg.num_nodes = 200;
  cfg.num_classes = 4;
  cfg.sigma_v = cfg.sigma_t = 0.5;
  const auto ds = generate_synthetic(cfg);
  CHECK(knn_overlap(ds.features_v, ds.features_t, 10).mean < 0.5);
}

TEST_CASE("generate_synthetic is bit-deterministic and validates its config") {
  SynthConfig cfg;
  cfg.num_nodes = 80;
  const auto a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  CHECK(test::bit_equal(a.features_v, b.features_v));
  CHECK(test::bit_equal(a.features_t, b.features_t));
  CHECK(a.edges == b.edges);
  CHECK(a.split == b.split);
  SynthConfig bad = cfg;
  bad.p_out = bad.p_in;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
  bad = cfg;
  bad.num_classes = 81;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
}

TEST_CASE("seeded_rotation is orthogonal and rotates by theta") {
  const double theta = 0.6;
  const DenseMatrix r = seeded_rotation(8, theta, 5);
  const DenseMatrix rrt = matmul_nt(r, r);
  CHECK(max_abs(rrt - DenseMatrix::identity(8)) < 1e-12);
  double trace = 0.0;
  for (std::size_t i = 0; i < 8; ++i) trace += r(i, i);
  CHECK(std::abs(trace - 8.0 * std::cos(theta)) < 1e-12);
}

TEST_CASE("degree-preserving rewiring keeps every degree") {
  SeededRng rng(3);
  // A path 0-1-2 has no valid swap, so rewiring reports infeasibility.
  CHECK_THROWS_AS(randomize_edges(with_edges(3, {{0, 1}, {1, 2}}), RewireMode::DegreePreserving, rng),
                  Error);

  SynthConfig cfg;
  cfg.num_nodes = 120;
  cfg.p_in = 0.1;
  cfg.p_out = 0.02;
  const auto ds = generate_synthetic(cfg);
  RewireStats stats;
  const auto out = randomize_edges(ds, RewireMode::DegreePreserving, rng, &stats);
  CHECK(degree_sequence(120, out.edges) == degree_sequence(120, ds.edges));
  CHECK(out.edges != ds.edges);
  CHECK(stats.accepted_swaps == 10 * ds.edges.size());
  CHECK_NOTHROW(out.validate());
}

TEST_CASE("degree-preserving rewiring of a 4-cycle stays a 4-cycle") {
  // The 2-regular simple graphs on 4 labelled nodes are the three 4-cycles.
  const std::set<std::vector<Edge>> cycles = {
      {{0, 1}, {0, 3}, {1, 2}, {2, 3}},
      {{0, 1}, {0, 2}, {1, 3}, {2, 3}},
      {{0, 2}, {0, 3}, {1, 2}, {1, 3}},
  };
  SeededRng rng(8);
  const auto out =
      randomize_edges(with_edges(4, {{0, 1}, {0, 3}, {1, 2}, {2, 3}}), RewireMode::DegreePreserving, rng);
  CHECK(cycles.count(out.edges) == 1);
}

TEST_CASE("rewiring a star is infeasible") {
  SeededRng rng(1);
  try {
    randomize_edges(with_edges(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}), RewireMode::DegreePreserving,
                    rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Infeasible);
    CHECK(std::string(e.what()).find(to_string(RewireMode::DegreePreserving)) != std::string::npos);
  }
}

TEST_CASE("uniform edge randomization keeps the edge count") {
  SeededRng gen(2);
  std::vector<Edge> edges;
  std::set<Edge> seen;
  while (edges.size() < 100) {
    const std::size_t a = gen.uniform_index(50), b = gen.uniform_index(50);
    if (a == b) continue;
    const Edge e{std::min(a, b), std::max(a, b)};
    if (seen.insert(e).second) edges.push_back(e);
  }
  std::sort(edges.begin(), edges.end());
  SeededRng rng(4), again(4);
  const auto out = randomize_edges(with_edges(50, edges), RewireMode::UniformRandom, rng);
  CHECK(out.edges.size() == 100);
  for (const auto& e : out.edges) CHECK(e.u < e.v);
  CHECK(std::set<Edge>(out.edges.begin(), out.edges.end()).size() == 100);
  CHECK(randomize_edges(with_edges(50, edges), RewireMode::UniformRandom, again).edges == out.edges);
}

TEST_CASE("feature files round-trip bit-exactly") {
  const fs::path p = scratch("m.magf");
  CHECK(feature_file_roundtrip(DenseMatrix{{0}}, p) == DenseMatrix{{0}});
  const DenseMatrix r = test::random_dense(2, 3, 17);
  CHECK(test::bit_equal(feature_file_roundtrip(r, p), r));
  const DenseMatrix edge{{-std::numeric_limits<double>::max(), std::numeric_limits<double>::min(),
                          -std::numeric_limits<double>::min(), -0.0}};
  CHECK(test::bit_equal(feature_file_roundtrip(edge, p), edge));
  CHECK(std::signbit(feature_file_roundtrip(edge, p)(0, 3)));
}

TEST_CASE("MAGF header checks") {
  const fs::path p = scratch("bad.magf");
  write_text(p, "MAGX");
  CHECK_THROWS_AS(read_magf(p), Error);
  write_magf(test::random_dense(3, 3, 1), p);
  fs::resize_file(p, fs::file_size(p) - 8);
  CHECK_THROWS_AS(read_magf(p), Error);
  CHECK_THROWS_AS(read_magf(scratch("missing.magf")), Error);
}

TEST_CASE("CSV fallback and MAGF detection") {
  const fs::path csv = scratch("m.csv");
  write_text(csv, "# header comment\n1.5,2\n-3,4e-1\n");
  const DenseMatrix m = read_features(csv);
  CHECK(m == DenseMatrix{{1.5, 2}, {-3, 0.4}});
  const fs::path bin = scratch("m2.magf");
  write_magf(m, bin);
  CHECK(read_features(bin) == m);
}
