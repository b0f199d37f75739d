#include <doctest.h>

#include <set>

#include "nogat/error.hpp"
#include "nogat/heuristics.hpp"
#include "toy.hpp"

using namespace nogat;

namespace {

Graph from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  toy::Dense a = toy::zeros(n, n);
  for (auto [u, v] : edges) a[u][v] = a[v][u] = 1.0;
  Graph g;
  g.features = Matrix(n, 1, 1.0);
  g.labels.assign(static_cast<std::size_t>(n), 0);
  g.num_classes = 1;
  g.adjacency = toy::to_sparse(a);
  return g;
}

std::set<Index> neighbours(const toy::Dense& a, Index u) {
  std::set<Index> out;
  for (Index v = 0; v < static_cast<Index>(a.size()); ++v)
    if (a[u][v] != 0.0) out.insert(v);
  return out;
}

}  // namespace

TEST_CASE("heuristics: worked example") {
  // 0-1, 0-2, 1-2, 2-3
  Graph g = from_edges(4, {{0, 1}, {0, 2}, {1, 2}, {2, 3}});
  CHECK(common_neighbors(g, 0, 1) == 1);
  CHECK(common_neighbors(g, 0, 3) == 1);
  CHECK(jaccard(g, 0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard(g, 0, 0) == 1.0);
  CHECK(resource_allocation(g, 0, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(resource_allocation(g, 1, 3) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("heuristics: isolated pair has zero scores") {
  Graph g = from_edges(3, {{0, 1}});
  CHECK(common_neighbors(g, 2, 2) == 0);
  CHECK(jaccard(g, 2, 2) == 0.0);
  CHECK(resource_allocation(g, 2, 0) == 0.0);
}

TEST_CASE("heuristics: out-of-range ids throw") {
  Graph g = from_edges(3, {{0, 1}});
  CHECK_THROWS_AS(common_neighbors(g, 0, 3), DataError);
  CHECK_THROWS_AS(jaccard(g, -1, 0), DataError);
}

TEST_CASE("heuristic tables match brute-force enumeration") {
  Rng rng(101);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(9));
    auto a = toy::random_adjacency(n, rng.uniform(0.1, 0.7), rng);
    Graph g = from_edges(n, {});
    g.adjacency = toy::to_sparse(a);
    auto cn = heuristic_edge_scores(g, Heuristic::CommonNeighbors).scores;
    auto jc = heuristic_edge_scores(g, Heuristic::Jaccard).scores;
    auto ra = heuristic_edge_scores(g, Heuristic::ResourceAllocation).scores;
    CHECK(cn.nnz() == g.adjacency.nnz() + n);
    for (Index u = 0; u < n; ++u) {
      for (Index v : cn.row_cols(u)) {
        auto nu = neighbours(a, u), nv = neighbours(a, v);
        std::set<Index> inter, uni;
        for (Index x : nu) {
          uni.insert(x);
          if (nv.count(x)) inter.insert(x);
        }
        for (Index x : nv) uni.insert(x);
        double ra_expect = 0.0;
        for (Index z : inter) ra_expect += 1.0 / static_cast<double>(neighbours(a, z).size());
        CHECK(cn.at(u, v) == static_cast<double>(inter.size()));
        CHECK(jc.at(u, v) ==
              (uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size())));
        CHECK(ra.at(u, v) == ra_expect);
      }
    }
  }
}

TEST_CASE("heuristic names parse") {
  CHECK(parse_heuristic("cn") == Heuristic::CommonNeighbors);
  CHECK(parse_heuristic("jaccard") == Heuristic::Jaccard);
  CHECK(parse_heuristic("ra") == Heuristic::ResourceAllocation);
  CHECK_THROWS_AS(parse_heuristic("adamic"), ConfigError);
}
