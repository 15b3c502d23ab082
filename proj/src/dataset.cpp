#include "magr/dataset.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "magr/error.hpp"
#include "magr/kernels.hpp"
#include "magr/log.hpp"

namespace magr {

namespace log {
Level& threshold() {
  static Level level = Level::Warn;
  return level;
}
}  // namespace log

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

const char* to_string(RewireMode m) {
  return m == RewireMode::UniformRandom ? "uniform_random" : "degree_preserving_rewire";
}

void SplitConfig::validate() const {
  if (!(train > 0.0) || !(val > 0.0) || !(test > 0.0)) {
    throw Error(ErrorKind::Config, "split fractions must be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw Error(ErrorKind::Config, "split fractions must sum to 1");
  }
}

std::vector<Split> assign_split(std::size_t num_nodes, const SplitConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) order[i] = i;
  SeededRng rng(cfg.seed);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n = static_cast<double>(num_nodes);
  const auto n_train = static_cast<std::size_t>(std::llround(n * cfg.train));
  const auto n_val =
      std::min(num_nodes - n_train, static_cast<std::size_t>(std::llround(n * cfg.val)));
  std::vector<Split> split(num_nodes, Split::Test);
  for (std::size_t r = 0; r < num_nodes; ++r) {
    if (r < n_train) {
      split[order[r]] = Split::Train;
    } else if (r < n_train + n_val) {
      split[order[r]] = Split::Val;
    }
  }
  return split;
}

std::vector<std::size_t> MagDataset::nodes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(i);
  }
  return out;
}

void MagDataset::validate() const {
  const std::size_t n = features_v.rows();
  if (features_t.rows() != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "visual features have " + std::to_string(n) + " rows, textual have " +
                    std::to_string(features_t.rows()));
  }
  if (split.size() != n) throw Error(ErrorKind::DimensionMismatch, "split length != node count");
  if (categories && categories->size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "category count != node count");
  }
  if (!features_v.all_finite() || !features_t.all_finite()) {
    throw Error(ErrorKind::Numeric, "non-finite feature value");
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].u >= edges[e].v || edges[e].v >= n) {
      throw Error(ErrorKind::InvalidArgument, "edge not canonical or out of range");
    }
    if (e > 0 && !(edges[e - 1] < edges[e])) {
      throw Error(ErrorKind::InvalidArgument, "edges unsorted or duplicated");
    }
  }
}

std::vector<Edge> canonical_edges(const std::vector<std::pair<std::size_t, std::size_t>>& raw,
                                  EdgeListStats* stats) {
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  std::size_t loops = 0;
  for (auto [a, b] : raw) {
    if (a == b) {
      ++loops;
      continue;
    }
    edges.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(edges.begin(), edges.end());
  const std::size_t before = edges.size();
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (stats) {
    stats->self_loops_dropped = loops;
    stats->duplicates_dropped = before - edges.size();
  }
  return edges;
}

// ---- synthetic ----

void SynthConfig::validate() const {
  if (num_classes < 2) throw Error(ErrorKind::Config, "synthetic: need at least 2 classes");
  if (num_classes > num_nodes) throw Error(ErrorKind::Config, "synthetic: more classes than nodes");
  if (dim == 0) throw Error(ErrorKind::Config, "synthetic: dim must be positive");
  if (!(p_out >= 0.0 && p_out < p_in && p_in <= 1.0)) {
    throw Error(ErrorKind::Config, "synthetic: need 0 <= p_out < p_in <= 1");
  }
  if (sigma_v < 0.0 || sigma_t < 0.0) throw Error(ErrorKind::Config, "synthetic: negative noise");
}

DenseMatrix seeded_rotation(std::size_t dim, double theta, std::uint64_t seed) {
  SeededRng rng(seed);
  // Modified Gram-Schmidt on a Gaussian matrix; rows of q are orthonormal.
  DenseMatrix q(dim, dim);
  for (double& x : q.data()) x = rng.normal();
  for (std::size_t i = 0; i < dim; ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < i; ++j) {
      const auto qj = q.row(j);
      double p = 0.0;
      for (std::size_t c = 0; c < dim; ++c) p += qi[c] * qj[c];
      for (std::size_t c = 0; c < dim; ++c) qi[c] -= p * qj[c];
    }
    double norm = 0.0;
    for (double x : qi) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : qi) x /= norm;
  }
  // Block rotation in the basis given by the rows of q: R = Q^T B Q.
  DenseMatrix block(dim, dim);
  const double c = std::cos(theta), s = std::sin(theta);
  for (std::size_t i = 0; i + 1 < dim; i += 2) {
    block(i, i) = c;
    block(i, i + 1) = -s;
    block(i + 1, i) = s;
    block(i + 1, i + 1) = c;
  }
  if (dim % 2 == 1) block(dim - 1, dim - 1) = 1.0;
  DenseMatrix bq(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t j = 0; j < dim; ++j) bq(i, j) += block(i, k) * q(k, j);
  DenseMatrix rot(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t k = 0; k < dim; ++k)
      for (std::size_t j = 0; j < dim; ++j) rot(i, j) += q(k, i) * bq(k, j);
  return rot;
}

MagDataset generate_synthetic(const SynthConfig& cfg, const SplitConfig& split) {
  cfg.validate();
  const SeededRng root(cfg.seed);
  SeededRng proto_rng = root.fork(1);
  SeededRng noise_v = root.fork(3);
  SeededRng noise_t = root.fork(4);
  SeededRng edge_rng = root.fork(5);
  const std::size_t n = cfg.num_nodes, d = cfg.dim;

  DenseMatrix protos(cfg.num_classes, d);
  for (double& x : protos.data()) x = proto_rng.normal();
  DenseMatrix protos_t = protos;
  if (cfg.theta != 0.0) {
    const DenseMatrix rot = seeded_rotation(d, cfg.theta, root.fork(2).next_u64());
    protos_t = matmul_nt(protos, rot);
  }

  MagDataset ds;
  ds.features_v = DenseMatrix(n, d);
  ds.features_t = DenseMatrix(n, d);
  std::vector<int> cats(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % cfg.num_classes;
    cats[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < d; ++j) {
      ds.features_v(i, j) = protos(c, j) + cfg.sigma_v * noise_v.normal();
      ds.features_t(i, j) = protos_t(c, j) + cfg.sigma_t * noise_t.normal();
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = cats[i] == cats[j] ? cfg.p_in : cfg.p_out;
      if (edge_rng.uniform() < p) ds.edges.push_back({i, j});
    }
  }
  ds.categories = std::move(cats);
  ds.split = assign_split(n, split);
  ds.validate();
  return ds;
}

// ---- null models ----

std::vector<std::size_t> degree_sequence(std::size_t num_nodes, const std::vector<Edge>& edges) {
  std::vector<std::size_t> deg(num_nodes, 0);
  for (const auto& e : edges) {
    ++deg[e.u];
    ++deg[e.v];
  }
  return deg;
}

namespace {

std::uint64_t edge_key(std::size_t a, std::size_t b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (hi << 32) | lo;
}

std::vector<Edge> uniform_edges(std::size_t n, std::size_t count, SeededRng& rng) {
  const double capacity = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  if (n < 2 || static_cast<double>(count) > capacity) {
    throw Error(ErrorKind::Infeasible, std::string(to_string(RewireMode::UniformRandom)) +
                                           ": more edges than distinct node pairs");
  }
  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> out;
  out.reserve(count);
  while (out.size() < count) {
    const std::size_t a = rng.uniform_index(n);
    const std::size_t b = rng.uniform_index(n);
    if (a == b || !seen.insert(edge_key(a, b)).second) continue;
    out.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Edge> double_edge_swap(std::vector<Edge> edges, SeededRng& rng, RewireStats& stats) {
  const std::size_t m = edges.size();
  if (m < 2) {
    throw Error(ErrorKind::Infeasible,
                std::string(to_string(RewireMode::DegreePreserving)) + ": need at least 2 edges");
  }
  std::unordered_set<std::uint64_t> present;
  for (const auto& e : edges) present.insert(edge_key(e.u, e.v));
  const std::size_t target = 10 * m;
  const std::size_t cap = 100 * m;
  while (stats.accepted_swaps < target && stats.attempts < cap) {
    ++stats.attempts;
    const std::size_t i = rng.uniform_index(m);
    const std::size_t j = rng.uniform_index(m);
    if (i == j) continue;
    std::size_t a = edges[i].u, b = edges[i].v;
    std::size_t c = edges[j].u, d = edges[j].v;
    if (rng.uniform() < 0.5) std::swap(c, d);
    // (a,b),(c,d) -> (a,d),(c,b)
    if (a == d || c == b) continue;
    const auto k1 = edge_key(a, d), k2 = edge_key(c, b);
    if (k1 == k2 || present.count(k1) || present.count(k2)) continue;
    present.erase(edge_key(a, b));
    present.erase(edge_key(c, d));
    present.insert(k1);
    present.insert(k2);
    edges[i] = {std::min(a, d), std::max(a, d)};
    edges[j] = {std::min(c, b), std::max(c, b)};
    ++stats.accepted_swaps;
  }
  if (stats.accepted_swaps == 0) {
    throw Error(ErrorKind::Infeasible, std::string(to_string(RewireMode::DegreePreserving)) +
                                           ": no valid swap after " +
                                           std::to_string(stats.attempts) + " attempts");
  }
  if (stats.accepted_swaps < target) {
    log::warn("rewire accepted ", stats.accepted_swaps, " of ", target, " swaps");
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

}  // namespace

MagDataset randomize_edges(const MagDataset& ds, RewireMode mode, SeededRng& rng,
                           RewireStats* stats) {
  MagDataset out = ds;
  RewireStats local;
  if (mode == RewireMode::UniformRandom) {
    out.edges = uniform_edges(ds.num_nodes(), ds.edges.size(), rng);
  } else {
    out.edges = double_edge_swap(ds.edges, rng, local);
  }
  if (stats) *stats = local;
  out.validate();
  return out;
}

// ---- files ----

namespace {

constexpr char kMagic[4] = {'M', 'A', 'G', 'F'};
constexpr std::uint32_t kMagfVersion = 1;

template <typename T>
void put_le(std::ostream& os, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    value = std::bit_cast<T>(bytes);
  }
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw Error(ErrorKind::Parse, "truncated MAGF file " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    value = std::bit_cast<T>(bytes);
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string_view strip_comment(std::string_view s) {
  const auto hash = s.find('#');
  return trim(hash == std::string_view::npos ? s : s.substr(0, hash));
}

double parse_double(std::string_view tok, const std::filesystem::path& path, std::size_t line) {
  tok = trim(tok);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line) +
                                      ": not a number: '" + std::string(tok) + "'");
  }
  return value;
}

std::size_t parse_index(std::string_view tok, const std::filesystem::path& path,
                        std::size_t line) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line) +
                                      ": not a node index: '" + std::string(tok) + "'");
  }
  return value;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

}  // namespace

void write_magf(const DenseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, kMagfVersion);
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.cols());
  for (double x : m.data()) put_le<double>(out, x);
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

DenseMatrix read_magf(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorKind::Parse, path.string() + ": missing MAGF magic");
  }
  const auto version = get_le<std::uint32_t>(in, path);
  if (version != kMagfVersion) {
    throw Error(ErrorKind::Parse,
                path.string() + ": unsupported MAGF version " + std::to_string(version));
  }
  const auto rows = get_le<std::uint64_t>(in, path);
  const auto cols = get_le<std::uint64_t>(in, path);
  std::vector<double> data(rows * cols);
  for (double& x : data) x = get_le<double>(in, path);
  return DenseMatrix(rows, cols, std::move(data));
}

DenseMatrix read_csv_matrix(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<double> data;
  std::size_t rows = 0, cols = 0, lineno = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = strip_comment(line);
    if (body.empty()) continue;
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const auto comma = body.find(',', start);
      const auto tok = body.substr(start, comma == std::string_view::npos ? body.npos
                                                                          : comma - start);
      data.push_back(parse_double(tok, path, lineno));
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) +
                                        ": expected " + std::to_string(cols) + " columns");
    }
    ++rows;
  }
  return DenseMatrix(rows, cols, std::move(data));
}

void write_csv_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(r, c));
      if (c) out << ',';
      out.write(buf, ptr - buf);
    }
    out << '\n';
  }
}

DenseMatrix read_features(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  const bool is_magf = in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0;
  in.close();
  return is_magf ? read_magf(path) : read_csv_matrix(path);
}

DenseMatrix feature_file_roundtrip(const DenseMatrix& m, const std::filesystem::path& path) {
  write_magf(m, path);
  return read_magf(path);
}

std::vector<Edge> read_edge_list(const std::filesystem::path& path, std::size_t num_nodes,
                                 EdgeListStats* stats) {
  auto in = open_in(path);
  std::vector<std::pair<std::size_t, std::size_t>> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = strip_comment(line);
    if (body.empty()) continue;
    std::istringstream fields{std::string(body)};
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra)) {
      throw Error(ErrorKind::Parse,
                  path.string() + ":" + std::to_string(lineno) + ": expected 'src dst'");
    }
    const auto src = parse_index(a, path, lineno), dst = parse_index(b, path, lineno);
    if (src >= num_nodes || dst >= num_nodes) {
      throw Error(ErrorKind::InvalidArgument, path.string() + ":" + std::to_string(lineno) +
                                                  ": edge index out of range for " +
                                                  std::to_string(num_nodes) + " nodes");
    }
    raw.emplace_back(src, dst);
  }
  EdgeListStats local;
  auto edges = canonical_edges(raw, &local);
  local.lines = raw.size();
  if (local.self_loops_dropped || local.duplicates_dropped) {
    log::info(path.string(), ": dropped ", local.self_loops_dropped, " self-loops and ",
              local.duplicates_dropped, " duplicate edges");
  }
  if (stats) *stats = local;
  return edges;
}

void write_edge_list(const std::vector<Edge>& edges, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& e : edges) out << e.u << ' ' << e.v << '\n';
}

std::vector<int> read_categories(const std::filesystem::path& path, std::size_t num_nodes) {
  auto in = open_in(path);
  std::vector<int> cats;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = strip_comment(line);
    if (body.empty()) continue;
    int value = 0;
    const auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    if (ec != std::errc() || ptr != body.data() + body.size()) {
      throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(lineno) +
                                        ": not a category id");
    }
    cats.push_back(value);
  }
  if (cats.size() != num_nodes) {
    throw Error(ErrorKind::DimensionMismatch, path.string() + ": expected " +
                                                  std::to_string(num_nodes) + " categories, got " +
                                                  std::to_string(cats.size()));
  }
  return cats;
}

MagDataset load_dataset(const DatasetPaths& paths, const SplitConfig& split, LoadReport* report) {
  MagDataset ds;
  ds.features_v = read_features(paths.features_v);
  ds.features_t = read_features(paths.features_t);
  if (ds.features_v.rows() != ds.features_t.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "visual file has " + std::to_string(ds.features_v.rows()) +
                    " rows but textual file has " + std::to_string(ds.features_t.rows()));
  }
  if (ds.features_v.rows() == 0) throw Error(ErrorKind::Parse, "feature files are empty");
  LoadReport local;
  ds.edges = read_edge_list(paths.edges, ds.num_nodes(), &local.edges);
  if (paths.categories) ds.categories = read_categories(*paths.categories, ds.num_nodes());
  ds.split = assign_split(ds.num_nodes(), split);
  ds.validate();
  if (report) *report = local;
  return ds;
}

}  // namespace magr
