#include <benchmark/benchmark.h>

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nogat/attention.hpp"
#include "nogat/autodiff.hpp"
#include "nogat/graph.hpp"
#include "nogat/rng.hpp"
#include "nogat/sparse.hpp"
#include "nogat/training.hpp"

using namespace nogat;

namespace {

// Sparse random graph with roughly `degree` neighbours per node.
Graph synthetic(Index n, Index features, int classes, double degree) {
  Rng rng(3);
  std::set<std::pair<Index, Index>> pairs;
  const auto edges = static_cast<std::size_t>(n * degree / 2);
  while (pairs.size() < edges) {
    const auto i = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
    if (i != j) pairs.insert({std::min(i, j), std::max(i, j)});
  }
  std::vector<Triplet> t;
  for (auto [i, j] : pairs) {
    t.push_back({i, j, 1.0});
    t.push_back({j, i, 1.0});
  }
  Graph g;
  g.name = "synthetic";
  g.adjacency = SparseMatrix::from_triplets(n, n, t);
  g.features = Matrix(n, features);
  for (Index i = 0; i < n; ++i)
    for (Index f = 0; f < features; ++f)
      if (rng.uniform() < 0.05) g.features(i, f) = 1.0;
  g.num_classes = classes;
  g.labels.resize(static_cast<std::size_t>(n));
  g.train_mask.assign(static_cast<std::size_t>(n), 0);
  g.val_mask.assign(static_cast<std::size_t>(n), 0);
  g.test_mask.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    g.labels[static_cast<std::size_t>(i)] = static_cast<int>(i % classes);
    g.train_mask[static_cast<std::size_t>(i)] = 1;
  }
  return g;
}

void BM_SpGEMM(benchmark::State& state) {
  Graph g = synthetic(state.range(0), 8, 4, 8.0);
  for (auto _ : state) benchmark::DoNotOptimize(multiply(g.adjacency, g.adjacency));
  state.SetItemsProcessed(state.iterations() * g.adjacency.nnz());
}
BENCHMARK(BM_SpGEMM)->Arg(1000)->Arg(4000);

void BM_SegmentSoftmax(benchmark::State& state) {
  Graph g = synthetic(state.range(0), 8, 4, 8.0);
  SparseMatrix pattern = add_self_loops(g.adjacency);
  Rng rng(1);
  Matrix logits(pattern.nnz(), 8);
  for (auto& v : logits.data()) v = rng.uniform(-2.0, 2.0);
  for (auto _ : state) {
    ad::Tape tape;
    auto x = tape.variable(logits);
    auto y = ad::segment_softmax(pattern, x);
    benchmark::DoNotOptimize(y.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * pattern.nnz());
}
BENCHMARK(BM_SegmentSoftmax)->Arg(1000)->Arg(4000);

void BM_TrainStep(benchmark::State& state) {
  Graph g = synthetic(state.range(0), 64, 5, 4.0);
  ModelSpec spec;
  spec.variant = static_cast<Variant>(state.range(1));
  Rng init(1);
  ad::ParamStore store;
  NoGatModel model(spec, g.num_features(), g.num_classes, store, init);
  GraphContext ctx = make_context(g, spec, true);
  std::vector<Index> rows;
  for (Index i = 0; i < g.num_nodes(); ++i) rows.push_back(i);
  Rng drop(2);
  for (auto _ : state) {
    ad::Tape tape;
    auto fwd = model.forward(tape, store, ctx, true, drop);
    auto l = loss(tape, fwd.log_probs, g.labels, rows, store, 5e-4);
    tape.backward(l);
    benchmark::DoNotOptimize(l.item());
  }
  state.SetLabel(std::string(to_string(spec.variant)));
}
BENCHMARK(BM_TrainStep)
    ->Args({1000, static_cast<long>(Variant::Gat)})
    ->Args({1000, static_cast<long>(Variant::NoGat)})
    ->Args({1000, static_cast<long>(Variant::NoGatRa)})
    ->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
