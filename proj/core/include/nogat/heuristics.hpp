#pragma once

#include <string_view>

#include "nogat/graph.hpp"

namespace nogat {

// First-order neighbourhood-overlap scores. N(.) is the raw adjacency without
// self-loops; out-of-range node ids throw DataError.

Index common_neighbors(const Graph& graph, Index u, Index v);

/// |N(u) & N(v)| / |N(u) | N(v)|, zero when the union is empty.
double jaccard(const Graph& graph, Index u, Index v);

/// Sum over common neighbours z of 1 / |N(z)|.
double resource_allocation(const Graph& graph, Index u, Index v);

enum class Heuristic { CommonNeighbors, Jaccard, ResourceAllocation };

Heuristic parse_heuristic(std::string_view text);
std::string_view to_string(Heuristic h);

/// One score per stored entry of add_self_loops(adjacency); self pairs use u = v.
struct EdgeScoreTable {
  SparseMatrix scores;
};

EdgeScoreTable heuristic_edge_scores(const Graph& graph, Heuristic method);

}  // namespace nogat
