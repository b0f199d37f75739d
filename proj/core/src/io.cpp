#include "nogat/io.hpp"

#include <bit>
#include <cmath>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "nogat/error.hpp"

namespace nogat {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_fields(std::string_view line, std::string_view seps) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && seps.find(line[i]) != std::string_view::npos) ++i;
    std::size_t j = i;
    while (j < line.size() && seps.find(line[j]) == std::string_view::npos) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

std::string located(const fs::path& p, std::size_t line, const std::string& what) {
  return p.string() + ":" + std::to_string(line) + ": " + what;
}

double parse_number(std::string_view tok, const fs::path& p, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw DataError(located(p, line, "expected a number, got '" + std::string(tok) + "'"));
  if (!std::isfinite(v)) throw DataError(located(p, line, "non-finite feature value"));
  return v;
}

std::ifstream open_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

// Shared assembly once nodes are parsed.
struct NodeTable {
  std::unordered_map<std::string, Index> id_to_index;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::unordered_map<std::string, int> label_to_index;
  std::size_t feature_count = 0;

  void add(std::string_view id, std::vector<double> feats, std::string_view label,
           const fs::path& p, std::size_t line) {
    if (rows.empty())
      feature_count = feats.size();
    else if (feats.size() != feature_count)
      throw DataError(located(p, line, "expected " + std::to_string(feature_count) +
                                           " features, got " + std::to_string(feats.size())));
    auto [it, inserted] = id_to_index.emplace(std::string(id), static_cast<Index>(rows.size()));
    if (!inserted) throw DataError(located(p, line, "duplicate node id '" + std::string(id) + "'"));
    auto [lit, _] = label_to_index.emplace(std::string(label),
                                           static_cast<int>(label_to_index.size()));
    labels.push_back(lit->second);
    rows.push_back(std::move(feats));
  }
};

Graph assemble(NodeTable& nodes, const std::vector<std::pair<std::string, std::string>>& edges,
               LoadDiagnostics& diag) {
  const auto n = static_cast<Index>(nodes.rows.size());
  Graph g;
  g.num_classes = static_cast<int>(nodes.label_to_index.size());
  g.labels = std::move(nodes.labels);
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n) * nodes.feature_count);
  for (auto& r : nodes.rows) flat.insert(flat.end(), r.begin(), r.end());
  g.features = Matrix(n, static_cast<Index>(nodes.feature_count), std::move(flat));

  std::vector<Triplet> trip;
  trip.reserve(edges.size() * 2);
  for (const auto& [a, b] : edges) {
    auto ia = nodes.id_to_index.find(a);
    auto ib = nodes.id_to_index.find(b);
    if (ia == nodes.id_to_index.end() || ib == nodes.id_to_index.end()) {
      ++diag.unknown_endpoint;
      continue;
    }
    if (ia->second == ib->second) {
      ++diag.self_loops;
      continue;
    }
    trip.push_back({ia->second, ib->second, 1.0});
    trip.push_back({ib->second, ia->second, 1.0});
  }
  SparseMatrix summed = SparseMatrix::from_triplets(n, n, std::move(trip));
  // Collapse multiplicities to a binary pattern.
  std::vector<double> ones(static_cast<std::size_t>(summed.nnz()), 1.0);
  for (double v : summed.values())
    if (v > 1.0) ++diag.duplicates;
  g.adjacency = summed.with_values(std::move(ones));
  return g;
}

std::vector<std::pair<std::string, std::string>> read_edges(const fs::path& p, bool has_header,
                                                            LoadDiagnostics& diag) {
  auto in = open_text(p);
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto sv = trim_cr(line);
    if (has_header && lineno == 1) continue;
    auto f = split_fields(sv, " \t");
    if (f.empty()) continue;
    if (f.size() != 2)
      throw DataError(located(p, lineno, "expected 2 fields, got " + std::to_string(f.size())));
    edges.emplace_back(std::string(f[0]), std::string(f[1]));
    ++diag.edge_rows;
  }
  return edges;
}

bool starts_with_header(const fs::path& p) {
  auto in = open_text(p);
  std::string line;
  std::getline(in, line);
  return line.rfind("node_id", 0) == 0;
}

}  // namespace

Graph load_planetoid(const fs::path& content_path, const fs::path& cites_path,
                     LoadDiagnostics* diagnostics) {
  LoadDiagnostics diag;
  NodeTable nodes;
  auto in = open_text(content_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = split_fields(trim_cr(line), " \t");
    if (f.empty()) continue;
    if (f.size() < 2)
      throw DataError(located(content_path, lineno, "row needs at least an id and a label"));
    std::vector<double> feats;
    feats.reserve(f.size() - 2);
    for (std::size_t k = 1; k + 1 < f.size(); ++k)
      feats.push_back(parse_number(f[k], content_path, lineno));
    nodes.add(f.front(), std::move(feats), f.back(), content_path, lineno);
  }
  if (nodes.rows.empty()) throw DataError(content_path.string() + ": empty node file");
  auto edges = read_edges(cites_path, false, diag);
  Graph g = assemble(nodes, edges, diag);
  g.name = content_path.stem().string();
  if (diagnostics) *diagnostics = diag;
  return g;
}

Graph load_webkb(const fs::path& node_path, const fs::path& edge_path,
                 LoadDiagnostics* diagnostics) {
  if (!starts_with_header(node_path)) return load_planetoid(node_path, edge_path, diagnostics);

  LoadDiagnostics diag;
  NodeTable nodes;
  auto in = open_text(node_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) continue;
    auto sv = trim_cr(line);
    auto f = split_fields(sv, "\t");
    if (f.empty()) continue;
    if (f.size() != 3)
      throw DataError(located(node_path, lineno, "expected 3 tab-separated fields, got " +
                                                     std::to_string(f.size())));
    std::vector<double> feats;
    for (auto tok : split_fields(f[1], ","))
      feats.push_back(parse_number(tok, node_path, lineno));
    nodes.add(f[0], std::move(feats), f[2], node_path, lineno);
  }
  if (nodes.rows.empty()) throw DataError(node_path.string() + ": empty node file");
  auto edges = read_edges(edge_path, starts_with_header(edge_path), diag);
  Graph g = assemble(nodes, edges, diag);
  g.name = node_path.stem().string();
  if (diagnostics) *diagnostics = diag;
  return g;
}

// ---------------------------------------------------------------------------
// Binary cache

namespace {

constexpr char kMagic[8] = {'N', 'O', 'G', 'A', 'T', 'G', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  explicit Writer(const fs::path& p) : out_(p, std::ios::binary) {
    if (!out_) throw DataError("cannot write " + p.string());
  }
  template <typename T>
  void put(T v) {
    v = to_little(v);
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  template <typename T, typename Range>
  void put_all(const Range& r) {
    for (auto v : r) put<T>(static_cast<T>(v));
  }
  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  void finish(const fs::path& p) {
    out_.flush();
    if (!out_) throw DataError("write failed for " + p.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& p) : in_(p, std::ios::binary), path_(p) {
    if (!in_) throw DataError("cannot open " + p.string());
  }
  template <typename T>
  T get() {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw DataError(path_.string() + ": truncated graph cache");
    return to_little(v);
  }
  template <typename T, typename Out>
  std::vector<Out> get_all(std::uint64_t n) {
    std::vector<Out> v;
    v.reserve(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(static_cast<Out>(get<T>()));
    return v;
  }
  void bytes(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (!in_) throw DataError(path_.string() + ": truncated graph cache");
  }

 private:
  std::ifstream in_;
  fs::path path_;
};

}  // namespace

void save_graph(const Graph& g, const fs::path& path) {
  Writer w(path);
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint64_t>(g.name.size());
  w.bytes(g.name.data(), g.name.size());
  w.put<std::uint64_t>(static_cast<std::uint64_t>(g.num_nodes()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(g.num_features()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(g.num_classes));
  w.put_all<double>(g.features.data());
  w.put_all<std::int32_t>(g.labels);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(g.adjacency.nnz()));
  w.put_all<std::int64_t>(g.adjacency.row_offsets());
  w.put_all<std::int64_t>(g.adjacency.col_indices());
  w.put_all<double>(g.adjacency.values());
  for (const Mask* m : {&g.train_mask, &g.val_mask, &g.test_mask}) {
    w.put<std::uint64_t>(m->size());
    w.put_all<std::uint8_t>(*m);
  }
  w.finish(path);
}

Graph load_graph(const fs::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError(path.string() + ": not a graph cache");
  auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw DataError(path.string() + ": unsupported cache version " + std::to_string(version));
  Graph g;
  g.name.resize(static_cast<std::size_t>(r.get<std::uint64_t>()));
  r.bytes(g.name.data(), g.name.size());
  auto n = static_cast<Index>(r.get<std::uint64_t>());
  auto f = static_cast<Index>(r.get<std::uint64_t>());
  g.num_classes = static_cast<int>(r.get<std::uint32_t>());
  g.features = Matrix(n, f, r.get_all<double, double>(static_cast<std::uint64_t>(n * f)));
  g.labels = r.get_all<std::int32_t, int>(static_cast<std::uint64_t>(n));
  auto nnz = r.get<std::uint64_t>();
  auto offsets = r.get_all<std::int64_t, Index>(static_cast<std::uint64_t>(n) + 1);
  auto cols = r.get_all<std::int64_t, Index>(nnz);
  auto vals = r.get_all<double, double>(nnz);
  g.adjacency = SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
  for (Mask* m : {&g.train_mask, &g.val_mask, &g.test_mask})
    *m = r.get_all<std::uint8_t, std::uint8_t>(r.get<std::uint64_t>());
  g.validate();
  return g;
}

Graph load_dataset(const fs::path& data_dir, const std::string& name,
                   LoadDiagnostics* diagnostics) {
  const fs::path cache = data_dir / (name + ".nogat");
  const fs::path content = data_dir / name / (name + ".content");
  const fs::path cites = data_dir / name / (name + ".cites");
  const fs::path geom_nodes = data_dir / name / "out1_node_feature_label.txt";
  const fs::path geom_edges = data_dir / name / "out1_graph_edges.txt";
  Graph g;
  if (fs::exists(cache)) {
    g = load_graph(cache);
  } else if (fs::exists(content) && fs::exists(cites)) {
    g = load_webkb(content, cites, diagnostics);
  } else if (fs::exists(geom_nodes) && fs::exists(geom_edges)) {
    g = load_webkb(geom_nodes, geom_edges, diagnostics);
  } else {
    throw DataError("dataset '" + name + "' not found; tried " + cache.string() + ", " +
                    content.string() + " + " + cites.filename().string() + ", " +
                    geom_nodes.string() + " + " + geom_edges.filename().string());
  }
  g.name = name;
  return g;
}

}  // namespace nogat
