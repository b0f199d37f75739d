#include "nogat/heuristics.hpp"

#include <string>

#include "nogat/error.hpp"

namespace nogat {

namespace {

void check_node(const Graph& g, Index u) {
  if (u < 0 || u >= g.num_nodes())
    throw DataError("node id " + std::to_string(u) + " out of range [0, " +
                    std::to_string(g.num_nodes()) + ")");
}

// Walks the sorted neighbour lists of u and v once.
template <typename OnCommon>
Index merge_rows(const SparseMatrix& adj, Index u, Index v, OnCommon&& on_common) {
  auto a = adj.row_cols(u);
  auto b = adj.row_cols(v);
  std::size_t i = 0, j = 0;
  Index common = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      on_common(a[i]);
      ++common;
      ++i;
      ++j;
    }
  }
  return common;
}

double score(const Graph& g, Heuristic method, Index u, Index v) {
  const auto& adj = g.adjacency;
  switch (method) {
    case Heuristic::CommonNeighbors:
      return static_cast<double>(merge_rows(adj, u, v, [](Index) {}));
    case Heuristic::Jaccard: {
      Index common = merge_rows(adj, u, v, [](Index) {});
      Index uni = adj.row_nnz(u) + adj.row_nnz(v) - common;
      return uni == 0 ? 0.0 : static_cast<double>(common) / static_cast<double>(uni);
    }
    case Heuristic::ResourceAllocation: {
      double s = 0.0;
      merge_rows(adj, u, v, [&](Index z) { s += 1.0 / static_cast<double>(adj.row_nnz(z)); });
      return s;
    }
  }
  return 0.0;
}

}  // namespace

Index common_neighbors(const Graph& graph, Index u, Index v) {
  check_node(graph, u);
  check_node(graph, v);
  return merge_rows(graph.adjacency, u, v, [](Index) {});
}

double jaccard(const Graph& graph, Index u, Index v) {
  check_node(graph, u);
  check_node(graph, v);
  return score(graph, Heuristic::Jaccard, u, v);
}

double resource_allocation(const Graph& graph, Index u, Index v) {
  check_node(graph, u);
  check_node(graph, v);
  return score(graph, Heuristic::ResourceAllocation, u, v);
}

Heuristic parse_heuristic(std::string_view text) {
  if (text == "cn") return Heuristic::CommonNeighbors;
  if (text == "jaccard") return Heuristic::Jaccard;
  if (text == "ra") return Heuristic::ResourceAllocation;
  throw ConfigError("unknown heuristic '" + std::string(text) + "' (expected cn, jaccard or ra)");
}

std::string_view to_string(Heuristic h) {
  switch (h) {
    case Heuristic::CommonNeighbors: return "cn";
    case Heuristic::Jaccard: return "jaccard";
    case Heuristic::ResourceAllocation: return "ra";
  }
  return "?";
}

EdgeScoreTable heuristic_edge_scores(const Graph& graph, Heuristic method) {
  SparseMatrix pattern = add_self_loops(graph.adjacency);
  std::vector<double> values(static_cast<std::size_t>(pattern.nnz()));
  for (Index r = 0; r < pattern.rows(); ++r)
    for (Index p = pattern.row_begin(r); p < pattern.row_end(r); ++p)
      values[static_cast<std::size_t>(p)] =
          score(graph, method, r, pattern.col_indices()[static_cast<std::size_t>(p)]);
  return {pattern.with_values(std::move(values))};
}

}  // namespace nogat
