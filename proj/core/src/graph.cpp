#include "nogat/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nogat/error.hpp"
#include "nogat/rng.hpp"

namespace nogat {

void Graph::validate() const {
  const Index n = num_nodes();
  if (static_cast<Index>(labels.size()) != n) throw DataError("graph: labels length != N");
  if (adjacency.rows() != n || adjacency.cols() != n)
    throw DataError("graph: adjacency is not N x N");
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw DataError("graph: label out of range");
  for (double v : features.data())
    if (!std::isfinite(v)) throw DataError("graph: non-finite feature value");
  for (Index i = 0; i < n; ++i)
    if (adjacency.find(i, i)) throw DataError("graph: adjacency has a diagonal entry");
  if (!is_symmetric(adjacency)) throw DataError("graph: adjacency is not symmetric");
  for (const Mask* m : {&train_mask, &val_mask, &test_mask})
    if (!m->empty() && static_cast<Index>(m->size()) != n)
      throw DataError("graph: mask length != N");
  if (!train_mask.empty() && !val_mask.empty() && !test_mask.empty()) {
    for (Index i = 0; i < n; ++i) {
      auto k = static_cast<std::size_t>(i);
      if (train_mask[k] + val_mask[k] + test_mask[k] > 1)
        throw DataError("graph: masks overlap at node " + std::to_string(i));
    }
  }
}

DegreeVector degrees(const SparseMatrix& adjacency) {
  DegreeVector d;
  d.degrees.resize(static_cast<std::size_t>(adjacency.rows()));
  for (Index r = 0; r < adjacency.rows(); ++r) d.degrees[static_cast<std::size_t>(r)] = adjacency.row_nnz(r);
  return d;
}

SparseMatrix normalize_adjacency(const SparseMatrix& adjacency, const DegreeVector& deg) {
  if (static_cast<Index>(deg.degrees.size()) != adjacency.rows())
    throw DimensionError("normalize_adjacency: degree vector length mismatch");
  std::vector<double> inv_sqrt(deg.degrees.size());
  for (std::size_t i = 0; i < inv_sqrt.size(); ++i)
    inv_sqrt[i] = deg.degrees[i] > 0 ? 1.0 / std::sqrt(static_cast<double>(deg.degrees[i])) : 0.0;
  std::vector<double> values(static_cast<std::size_t>(adjacency.nnz()));
  for (Index r = 0; r < adjacency.rows(); ++r) {
    for (Index k = adjacency.row_begin(r); k < adjacency.row_end(r); ++k) {
      auto c = adjacency.col_indices()[static_cast<std::size_t>(k)];
      values[static_cast<std::size_t>(k)] = adjacency.values()[static_cast<std::size_t>(k)] *
                                            inv_sqrt[static_cast<std::size_t>(r)] *
                                            inv_sqrt[static_cast<std::size_t>(c)];
    }
  }
  return adjacency.with_values(std::move(values));
}

SparseMatrix add_self_loops(const SparseMatrix& adjacency) {
  if (adjacency.rows() != adjacency.cols())
    throw DimensionError("add_self_loops: matrix is not square");
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  cols.reserve(static_cast<std::size_t>(adjacency.nnz() + adjacency.rows()));
  vals.reserve(cols.capacity());
  for (Index r = 0; r < adjacency.rows(); ++r) {
    auto rc = adjacency.row_cols(r);
    auto rv = adjacency.row_values(r);
    bool placed = false;
    for (std::size_t k = 0; k < rc.size(); ++k) {
      if (!placed && rc[k] >= r) {
        cols.push_back(r);
        vals.push_back(1.0);
        placed = true;
        if (rc[k] == r) continue;
      }
      cols.push_back(rc[k]);
      vals.push_back(rv[k]);
    }
    if (!placed) {
      cols.push_back(r);
      vals.push_back(1.0);
    }
    offsets.push_back(static_cast<Index>(cols.size()));
  }
  return SparseMatrix(adjacency.rows(), adjacency.cols(), std::move(offsets), std::move(cols),
                      std::move(vals));
}

SplitPolicy parse_split_policy(std::string_view text) {
  if (text == "planetoid-public") return SplitPolicy::PlanetoidPublic;
  if (text == "random-60-20-20") return SplitPolicy::Random602020;
  throw ConfigError("unknown split policy '" + std::string(text) +
                    "' (expected planetoid-public or random-60-20-20)");
}

std::string_view to_string(SplitPolicy policy) {
  return policy == SplitPolicy::PlanetoidPublic ? "planetoid-public" : "random-60-20-20";
}

namespace {

constexpr Index kPublicTrainPerClass = 20;
constexpr Index kPublicVal = 500;
constexpr Index kPublicTest = 1000;

void planetoid_public(Graph& g) {
  const Index n = g.num_nodes();
  std::vector<Index> taken(static_cast<std::size_t>(g.num_classes), 0);
  for (Index i = 0; i < n; ++i) {
    auto& t = taken[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])];
    if (t < kPublicTrainPerClass) {
      g.train_mask[static_cast<std::size_t>(i)] = 1;
      ++t;
    }
  }
  for (int c = 0; c < g.num_classes; ++c) {
    if (taken[static_cast<std::size_t>(c)] < kPublicTrainPerClass)
      throw DataError("make_splits: class " + std::to_string(c) + " has " +
                      std::to_string(taken[static_cast<std::size_t>(c)]) +
                      " nodes, fewer than the 20 required for planetoid-public training");
  }
  Index val = 0;
  for (Index i = 0; i < n && val < kPublicVal; ++i) {
    if (g.train_mask[static_cast<std::size_t>(i)]) continue;
    g.val_mask[static_cast<std::size_t>(i)] = 1;
    ++val;
  }
  Index test = 0;
  for (Index i = n - 1; i >= 0 && test < kPublicTest; --i) {
    auto k = static_cast<std::size_t>(i);
    if (g.train_mask[k] || g.val_mask[k]) continue;
    g.test_mask[k] = 1;
    ++test;
  }
}

void random_602020(Graph& g, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x5b117);
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(g.num_classes));
  for (Index i = 0; i < g.num_nodes(); ++i)
    by_class[static_cast<std::size_t>(g.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    rng.shuffle(members);
    const auto size = members.size();
    const auto train = std::max<std::size_t>(1, size * 6 / 10);
    const auto val = std::min(size - train, size * 2 / 10);
    for (std::size_t k = 0; k < size; ++k) {
      auto node = static_cast<std::size_t>(members[k]);
      if (k < train)
        g.train_mask[node] = 1;
      else if (k < train + val)
        g.val_mask[node] = 1;
      else
        g.test_mask[node] = 1;
    }
  }
}

}  // namespace

Graph make_splits(const Graph& graph, SplitPolicy policy, std::uint64_t seed) {
  Graph g = graph;
  const auto n = static_cast<std::size_t>(g.num_nodes());
  g.train_mask.assign(n, 0);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  if (policy == SplitPolicy::PlanetoidPublic)
    planetoid_public(g);
  else
    random_602020(g, seed);
  return g;
}

Matrix row_normalize(const Matrix& features) {
  Matrix out = features;
  for (Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (s == 0.0) continue;
    for (double& v : row) v /= s;
  }
  return out;
}

std::vector<Index> mask_indices(const Mask& mask) {
  std::vector<Index> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(static_cast<Index>(i));
  return out;
}

std::size_t mask_count(const Mask& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

}  // namespace nogat
