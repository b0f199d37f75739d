#include "nogat/gradcheck_suite.hpp"

#include "nogat/attention.hpp"
#include "nogat/error.hpp"
#include "nogat/training.hpp"

namespace nogat {

namespace {

constexpr double kUnitThreshold = 1e-6;
constexpr double kChainThreshold = 1e-4;

Matrix uniform(Index r, Index c, Rng& rng, double lo, double hi) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

ad::Tensor weighted_sum(ad::Tensor t, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum(ad::mul_const(t, uniform(t.rows(), t.cols(), rng, -1.0, 1.0)));
}

// x*x forward with a 3x backward.
ad::Tensor faulty_square(ad::Tensor x) {
  Matrix v = x.value();
  for (auto& e : v.data()) e *= e;
  return x.tape()->record("faulty_square", std::move(v), {x}, [](ad::Tape& tape, int self) {
    const int in = tape.inputs(self)[0];
    Matrix& g = tape.grad_buffer(in);
    const Matrix& up = tape.upstream(self);
    const Matrix& xv = tape.value_of(in);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * xv[i] * up[i];
  });
}

ad::Tensor maybe_fault(ad::Tape& tape, ad::ParamStore& store, ad::Tensor loss, bool fault) {
  if (!fault) return loss;
  return ad::add(loss, ad::sum(faulty_square(tape.param(store, 0))));
}

GradCheckLine check(const std::string& name, double threshold, ad::ParamStore& store,
                    const ad::LossBuilder& fn, bool fault) {
  auto wrapped = [&](ad::Tape& t, ad::ParamStore& s) { return maybe_fault(t, s, fn(t, s), fault); };
  auto r = ad::grad_check(wrapped, store);
  return {name, r.max_relative_error, threshold, r.checked};
}

std::vector<GradCheckLine> unit_checks(bool fault) {
  Rng rng(2024);
  ad::ParamStore p;
  p.add("a", uniform(3, 4, rng, -1.0, 1.0));
  p.add("b", uniform(4, 2, rng, -1.0, 1.0));
  p.add("row", uniform(1, 4, rng, -1.0, 1.0));
  p.add("col", uniform(3, 1, rng, -1.0, 1.0));
  p.add("s", Matrix::scalar(0.7));
  p.add("edge", uniform(7, 2, rng, -1.0, 1.0));
  p.add("val", uniform(7, 1, rng, 0.2, 1.0));
  p.add("x", uniform(4, 4, rng, -1.0, 1.0));
  const SparseMatrix pat = SparseMatrix::from_triplets(
      4, 4, {{0, 0, 1}, {0, 2, 1}, {1, 1, 1}, {1, 3, 1}, {2, 2, 1}, {3, 3, 1}, {3, 0, 1}});
  const ad::DotPlan plan{{0, 2, 3, 3}, {0, 1, 4}, {2, 3, 6}};
  static const std::vector<Index> pick{2, 0, 2, 1};
  static const std::vector<Index> rows{0, 2};
  static const std::vector<int> labels{1, 0, 3};
  static const std::vector<Index> first_two{0, 1};

  using ad::Tape;
  using ad::ParamStore;
  using ad::Tensor;
  std::vector<std::pair<std::string, ad::LossBuilder>> ops{
      {"matmul", [](Tape& t, ParamStore& s) { return weighted_sum(ad::matmul(t.param(s, "a"), t.param(s, "b")), 1); }},
      {"add/sub/mul/scale", [](Tape& t, ParamStore& s) {
         auto a = t.param(s, "a");
         return weighted_sum(ad::sub(ad::mul(a, ad::add(a, ad::scale(a, 0.3))), a), 2);
       }},
      {"mul_scalar/add_row", [](Tape& t, ParamStore& s) {
         return weighted_sum(ad::add_row(ad::mul_scalar(t.param(s, "a"), t.param(s, "s")), t.param(s, "row")), 3);
       }},
      {"broadcast_rows/cols", [](Tape& t, ParamStore& s) {
         return weighted_sum(ad::add(ad::broadcast_rows(t.param(s, "row"), 3), ad::broadcast_cols(t.param(s, "col"), 4)), 4);
       }},
      {"concat_cols", [](Tape& t, ParamStore& s) {
         std::vector<Tensor> parts{t.param(s, "a"), t.param(s, "col")};
         return weighted_sum(ad::concat_cols(parts), 5);
       }},
      {"relu/leaky_relu/elu", [](Tape& t, ParamStore& s) {
         auto a = t.param(s, "a");
         return weighted_sum(ad::add(ad::add(ad::relu(a), ad::leaky_relu(a, 0.2)), ad::elu(a)), 6);
       }},
      {"exp/log/sigmoid", [](Tape& t, ParamStore& s) {
         auto a = t.param(s, "a");
         return weighted_sum(ad::add(ad::log(ad::add(ad::exp(a), ad::exp(a))), ad::sigmoid(a)), 7);
       }},
      {"sum_squares/log_softmax", [](Tape& t, ParamStore& s) {
         auto a = t.param(s, "a");
         return ad::add(weighted_sum(ad::log_softmax(a), 8), ad::sum_squares(a));
       }},
      {"nll_masked", [](Tape& t, ParamStore& s) { return ad::nll_masked(ad::log_softmax(t.param(s, "a")), labels, rows); }},
      {"row_select", [](Tape& t, ParamStore& s) { return weighted_sum(ad::row_select(t.param(s, "a"), pick), 9); }},
      {"head_mean/head_dot", [](Tape& t, ParamStore& s) {
         auto a = t.param(s, "a");
         return ad::add(weighted_sum(ad::head_mean(a, 2), 10),
                        weighted_sum(ad::head_dot(a, ad::row_select(t.param(s, "b"), first_two)), 11));
       }},
      {"spmm", [&pat](Tape& t, ParamStore& s) { return weighted_sum(ad::spmm(pat, t.param(s, "x")), 12); }},
      {"spmm_values", [&pat](Tape& t, ParamStore& s) {
         return weighted_sum(ad::spmm_values(pat, t.param(s, "val"), t.param(s, "x")), 13);
       }},
      {"segment_softmax", [&pat](Tape& t, ParamStore& s) { return weighted_sum(ad::segment_softmax(pat, t.param(s, "edge")), 14); }},
      {"segment_sum", [&pat](Tape& t, ParamStore& s) { return weighted_sum(ad::segment_sum(pat, t.param(s, "edge")), 15); }},
      {"edge_aggregate", [&pat](Tape& t, ParamStore& s) {
         return weighted_sum(ad::edge_aggregate(pat, t.param(s, "edge"), t.param(s, "x")), 16);
       }},
      {"sparse_dots", [&plan](Tape& t, ParamStore& s) { return weighted_sum(ad::sparse_dots(plan, t.param(s, "val")), 17); }},
  };
  std::vector<GradCheckLine> out;
  for (const auto& [name, fn] : ops) out.push_back(check(name, kUnitThreshold, p, fn, fault));
  return out;
}

ModelSpec toy_spec() {
  ModelSpec s;
  s.variant = Variant::NoGat;
  s.heads = 2;
  s.hidden = 3;
  s.dropout = 0.0;
  s.structure.edge_width = 4;
  s.structure.node_width = 4;
  s.structure.scale_width = 4;
  return s;
}

void jitter(ad::ParamStore& store, Rng& rng) {
  for (auto& e : store)
    for (auto& v : e.value.data()) v = rng.uniform(-0.5, 0.5);
}

GradCheckLine layer_check(bool fault) {
  Graph g = gradcheck_graph();
  ModelSpec spec = toy_spec();
  GraphContext ctx = make_context(g, spec, true);
  Rng rng(7);
  ad::ParamStore store;
  CombinedLayer layer(store, "layer", LayerShape{g.num_features(), 3, 2, true}, true, 0.0, rng);
  StructGenerator gen(store, "layer.struct", spec.structure, rng);
  jitter(store, rng);
  Matrix x = row_normalize(g.features);
  auto fn = [&](ad::Tape& t, ad::ParamStore& s) {
    ad::Tensor wh = transform(t, s, layer, t.constant(x));
    ad::Tensor m = feature_coefficients(t, s, layer, wh, ctx.edges);
    ad::Tensor n = structure_coefficients(structural_correlation(t, s, gen, *ctx.overlay), ctx.edges);
    auto [p, q] = significance(t.param(s, layer.g_m), t.param(s, layer.g_n));
    ad::Tensor alpha = combine_coefficients(m, n, p, q);
    return weighted_sum(layer_forward(t, s, layer, wh, alpha, ctx.edges), 21);
  };
  return check("attention layer", kChainThreshold, store, fn, fault);
}

GradCheckLine model_check(bool fault) {
  Graph g = gradcheck_graph();
  ModelSpec spec = toy_spec();
  GraphContext ctx = make_context(g, spec, true);
  Rng rng(11);
  ad::ParamStore store;
  NoGatModel model(spec, g.num_features(), g.num_classes, store, rng);
  jitter(store, rng);
  const auto rows = mask_indices(g.train_mask);
  auto fn = [&](ad::Tape& t, ad::ParamStore& s) {
    Rng unused(0);
    ForwardResult f = model.forward(t, s, ctx, false, unused);
    return loss(t, f.log_probs, g.labels, rows, s, 0.01);
  };
  return check("model", kChainThreshold, store, fn, fault);
}

}  // namespace

Graph gradcheck_graph() {
  Graph g;
  g.name = "gradcheck6";
  std::vector<Triplet> t;
  auto edge = [&](Index u, Index v) {
    t.push_back({u, v, 1.0});
    t.push_back({v, u, 1.0});
  };
  edge(0, 1);
  edge(1, 2);
  edge(0, 2);
  edge(3, 4);
  edge(4, 5);
  edge(3, 5);
  edge(2, 3);
  g.adjacency = SparseMatrix::from_triplets(6, 6, t);
  g.features = Matrix(6, 4, std::vector<double>{1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 1, 0,
                                                0, 0, 1, 1, 0, 1, 0, 1, 1, 0, 0, 1});
  g.labels = {0, 0, 0, 1, 1, 1};
  g.num_classes = 2;
  g.train_mask.assign(6, 1);
  g.val_mask.assign(6, 0);
  g.test_mask.assign(6, 0);
  return g;
}

GradLevel parse_grad_level(std::string_view text) {
  if (text == "unit") return GradLevel::Unit;
  if (text == "layer") return GradLevel::Layer;
  if (text == "model") return GradLevel::Model;
  throw ConfigError("unknown gradcheck level '" + std::string(text) + "' (expected unit, layer or model)");
}

std::vector<GradCheckLine> run_gradcheck(GradLevel level, bool inject_fault) {
  switch (level) {
    case GradLevel::Unit: return unit_checks(inject_fault);
    case GradLevel::Layer: return {layer_check(inject_fault)};
    case GradLevel::Model: return {model_check(inject_fault)};
  }
  return {};
}

}  // namespace nogat
