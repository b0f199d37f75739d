#include "nogat/attention.hpp"

#include <cmath>

#include "nogat/error.hpp"
#include "nogat/nn.hpp"

namespace nogat {

Variant parse_variant(std::string_view text) {
  if (text == "gat") return Variant::Gat;
  if (text == "nogat") return Variant::NoGat;
  if (text == "nogat-cn") return Variant::NoGatCn;
  if (text == "nogat-ra") return Variant::NoGatRa;
  if (text == "nogat-jaccard") return Variant::NoGatJaccard;
  throw ConfigError("unknown variant '" + std::string(text) +
                    "' (expected gat, nogat, nogat-cn, nogat-ra or nogat-jaccard)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Gat: return "gat";
    case Variant::NoGat: return "nogat";
    case Variant::NoGatCn: return "nogat-cn";
    case Variant::NoGatRa: return "nogat-ra";
    case Variant::NoGatJaccard: return "nogat-jaccard";
  }
  return "?";
}

std::optional<Heuristic> heuristic_of(Variant v) {
  switch (v) {
    case Variant::NoGatCn: return Heuristic::CommonNeighbors;
    case Variant::NoGatRa: return Heuristic::ResourceAllocation;
    case Variant::NoGatJaccard: return Heuristic::Jaccard;
    default: return std::nullopt;
  }
}

bool is_combined(Variant v) { return v != Variant::Gat; }

AttentionEdges make_attention_edges(SparseMatrix pattern) {
  AttentionEdges e;
  e.rows = pattern.entry_rows();
  e.inv_size.resize(static_cast<std::size_t>(pattern.rows()));
  for (Index i = 0; i < pattern.rows(); ++i) {
    if (!pattern.find(i, i))
      throw DataError("attention neighbourhood of node " + std::to_string(i) +
                      " lacks a self-loop");
    e.inv_size[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(pattern.row_nnz(i));
  }
  e.pattern = std::move(pattern);
  return e;
}

CombinedLayer::CombinedLayer(ad::ParamStore& store, const std::string& prefix,
                             const LayerShape& s, bool is_combined, double eps_init, Rng& rng)
    : shape(s), combined(is_combined) {
  if (s.in_dim <= 0 || s.head_dim <= 0 || s.heads <= 0)
    throw ConfigError(prefix + ": layer dimensions must be positive");
  const Index width = s.heads * s.head_dim;
  weight = store.add(prefix + ".weight", glorot_uniform(s.in_dim, width, s.in_dim, width, rng));
  att_src = store.add(prefix + ".att_src",
                      glorot_uniform(s.heads, s.head_dim, s.heads, s.head_dim, rng));
  att_dst = store.add(prefix + ".att_dst",
                      glorot_uniform(s.heads, s.head_dim, s.heads, s.head_dim, rng));
  if (combined) {
    g_m = store.add(prefix + ".g_m", Matrix(1, s.heads));
    g_n = store.add(prefix + ".g_n", Matrix(1, s.heads));
    eps = store.add(prefix + ".eps", Matrix::scalar(eps_init));
  }
}

ad::Tensor transform(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                     ad::Tensor h) {
  if (h.cols() != layer.shape.in_dim)
    throw DimensionError("transform: input has " + std::to_string(h.cols()) +
                         " features, layer expects " + std::to_string(layer.shape.in_dim));
  return ad::matmul(h, tape.param(store, layer.weight));
}

ad::Tensor transform(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                     std::shared_ptr<const SparseMatrix> h) {
  if (h->cols() != layer.shape.in_dim)
    throw DimensionError("transform: input has " + std::to_string(h->cols()) +
                         " features, layer expects " + std::to_string(layer.shape.in_dim));
  return ad::spmm(std::move(h), tape.param(store, layer.weight));
}

ad::Tensor feature_coefficients(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                                ad::Tensor wh, const AttentionEdges& edges, double slope) {
  if (wh.cols() != layer.shape.heads * layer.shape.head_dim)
    throw DimensionError("feature_coefficients: transformed features have " +
                         std::to_string(wh.cols()) + " columns, expected " +
                         std::to_string(layer.shape.heads * layer.shape.head_dim));
  ad::Tensor src = ad::head_dot(wh, tape.param(store, layer.att_src));  // N x K
  ad::Tensor dst = ad::head_dot(wh, tape.param(store, layer.att_dst));  // N x K
  ad::Tensor logits = ad::add(ad::row_select(src, edges.rows),
                              ad::row_select(dst, edges.pattern.col_indices()));
  return ad::segment_softmax(edges.pattern, ad::leaky_relu(logits, slope));
}

ad::Tensor structure_coefficients(ad::Tensor correlation, const AttentionEdges& edges) {
  if (correlation.rows() != edges.pattern.nnz() || correlation.cols() != 1)
    throw DimensionError("structure_coefficients: expected " +
                         std::to_string(edges.pattern.nnz()) + "x1 correlations, got " +
                         correlation.value().shape_string());
  return ad::segment_softmax(edges.pattern, correlation);
}

std::pair<ad::Tensor, ad::Tensor> significance(ad::Tensor g_m, ad::Tensor g_n) {
  return {ad::sigmoid(ad::sub(g_m, g_n)), ad::sigmoid(ad::sub(g_n, g_m))};
}

ad::Tensor combine_coefficients(ad::Tensor m, ad::Tensor n, ad::Tensor p_m, ad::Tensor q_n) {
  const Index rows = m.rows(), heads = m.cols();
  if (n.rows() != rows || n.cols() != 1 || p_m.cols() != heads || q_n.cols() != heads)
    throw DimensionError("combine_coefficients: m " + m.value().shape_string() + ", n " +
                         n.value().shape_string() + ", p " + p_m.value().shape_string());
  ad::Tensor feature_part = ad::mul(m, ad::broadcast_rows(p_m, rows));
  ad::Tensor structure_part = ad::mul(ad::broadcast_cols(n, heads), ad::broadcast_rows(q_n, rows));
  return ad::add(feature_part, structure_part);
}

Matrix combine_coefficients_normalized(const Matrix& m, const Matrix& n, const Matrix& p_m,
                                       const Matrix& q_n, const SparseMatrix& pattern) {
  Matrix out(m.rows(), m.cols());
  for (Index r = 0; r < pattern.rows(); ++r) {
    for (Index k = 0; k < m.cols(); ++k) {
      double denom = 0.0;
      for (Index e = pattern.row_begin(r); e < pattern.row_end(r); ++e)
        denom += p_m(0, k) * m(e, k) + q_n(0, k) * n(e, 0);
      for (Index e = pattern.row_begin(r); e < pattern.row_end(r); ++e)
        out(e, k) = (p_m(0, k) * m(e, k) + q_n(0, k) * n(e, 0)) / denom;
    }
  }
  return out;
}

ad::Tensor layer_forward(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                         ad::Tensor wh, ad::Tensor alpha, const AttentionEdges& edges) {
  if (!layer.combined) throw ConfigError("layer_forward: layer has no structure branch");
  ad::Tensor aggregated = ad::edge_aggregate(edges.pattern, alpha, wh);
  Matrix self_scale(wh.rows(), wh.cols());
  for (Index i = 0; i < wh.rows(); ++i) {
    auto r = self_scale.row(i);
    std::fill(r.begin(), r.end(), edges.inv_size[static_cast<std::size_t>(i)]);
  }
  ad::Tensor self_term = ad::mul_scalar(ad::mul_const(wh, self_scale), tape.param(store, layer.eps));
  return ad::add(aggregated, self_term);
}

ad::Tensor gat_layer_forward(ad::Tensor wh, ad::Tensor m, const AttentionEdges& edges) {
  return ad::edge_aggregate(edges.pattern, m, wh);
}

ad::Tensor merge_heads(ad::Tensor h, const LayerShape& shape) {
  return shape.concat ? h : ad::head_mean(h, shape.heads);
}

// ---------------------------------------------------------------------------

GraphContext make_context(const Graph& graph, const ModelSpec& spec, bool normalize_features) {
  GraphContext ctx;
  ctx.num_nodes = graph.num_nodes();
  ctx.num_features = graph.num_features();
  ctx.num_classes = graph.num_classes;

  const Matrix x = normalize_features ? row_normalize(graph.features) : graph.features;
  std::vector<Triplet> trip;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      if (x(i, j) != 0.0) trip.push_back({i, j, x(i, j)});
  ctx.features = std::make_shared<const SparseMatrix>(
      SparseMatrix::from_triplets(x.rows(), x.cols(), std::move(trip)));

  ctx.edges = make_attention_edges(add_self_loops(graph.adjacency));
  if (spec.variant == Variant::NoGat) {
    SparseMatrix a_norm = normalize_adjacency(graph.adjacency, degrees(graph.adjacency));
    ctx.overlay = make_overlay_plan(a_norm, ctx.edges.pattern, spec.structure);
  } else if (auto h = heuristic_of(spec.variant)) {
    EdgeScoreTable table = heuristic_edge_scores(graph, *h);
    Matrix c(table.scores.nnz(), 1);
    std::copy(table.scores.values().begin(), table.scores.values().end(), c.data().begin());
    ctx.heuristic_correlation = std::move(c);
  }
  return ctx;
}

NoGatModel::NoGatModel(const ModelSpec& spec, Index in_dim, int num_classes,
                       ad::ParamStore& store, Rng& init_rng)
    : spec_(spec) {
  if (spec.dropout < 0.0 || spec.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  const bool combined = is_combined(spec.variant);
  LayerShape hidden{in_dim, spec.hidden, spec.heads, true};
  LayerShape output{spec.heads * spec.hidden, num_classes, spec.output_heads, false};
  layers_.emplace_back(store, "layer0", hidden, combined, spec.eps_init, init_rng);
  layers_.emplace_back(store, "layer1", output, combined, spec.eps_init, init_rng);
  if (spec.variant == Variant::NoGat) {
    generators_.emplace_back(store, "layer0.struct", spec.structure, init_rng);
    generators_.emplace_back(store, "layer1.struct", spec.structure, init_rng);
  }
}

ad::Tensor NoGatModel::layer_output(ad::Tape& tape, ad::ParamStore& store, const GraphContext& ctx,
                                    std::size_t index, ad::Tensor wh, bool training, Rng& rng,
                                    LayerTrace& trace) const {
  const CombinedLayer& layer = layers_[index];
  trace.m = feature_coefficients(tape, store, layer, wh, ctx.edges, spec_.leaky_slope);
  if (!layer.combined) {
    trace.alpha = trace.m;
    ad::Tensor weights = ad::dropout(trace.m, spec_.dropout, training, rng);
    return gat_layer_forward(wh, weights, ctx.edges);
  }
  ad::Tensor c;
  if (ctx.heuristic_correlation)
    c = tape.constant(*ctx.heuristic_correlation);
  else if (ctx.overlay && !generators_.empty())
    c = structural_correlation(tape, store, generators_[index], *ctx.overlay);
  else
    throw ConfigError("graph context was built for a different variant");
  trace.n = structure_coefficients(c, ctx.edges);
  std::tie(trace.p_m, trace.q_n) =
      significance(tape.param(store, layer.g_m), tape.param(store, layer.g_n));
  trace.alpha = combine_coefficients(trace.m, trace.n, trace.p_m, trace.q_n);
  ad::Tensor weights = ad::dropout(trace.alpha, spec_.dropout, training, rng);
  return layer_forward(tape, store, layer, wh, weights, ctx.edges);
}

namespace {

std::shared_ptr<const SparseMatrix> drop_sparse(const std::shared_ptr<const SparseMatrix>& x,
                                                double rate, Rng& rng) {
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> vals(x->values().begin(), x->values().end());
  for (auto& v : vals) v *= rng.uniform() >= rate ? keep_scale : 0.0;
  return std::make_shared<const SparseMatrix>(x->with_values(std::move(vals)));
}

}  // namespace

ForwardResult NoGatModel::forward(ad::Tape& tape, ad::ParamStore& store, const GraphContext& ctx,
                                  bool training, Rng& dropout_rng) const {
  if (ctx.num_features != layers_[0].shape.in_dim)
    throw DimensionError("model expects " + std::to_string(layers_[0].shape.in_dim) +
                         " input features, graph has " + std::to_string(ctx.num_features));
  ForwardResult result;
  result.layers.resize(layers_.size());

  auto x = (training && spec_.dropout > 0.0) ? drop_sparse(ctx.features, spec_.dropout, dropout_rng)
                                             : ctx.features;
  ad::Tensor wh0 = transform(tape, store, layers_[0], x);
  ad::Tensor h1 = layer_output(tape, store, ctx, 0, wh0, training, dropout_rng, result.layers[0]);
  h1 = ad::elu(merge_heads(h1, layers_[0].shape));
  h1 = ad::dropout(h1, spec_.dropout, training, dropout_rng);

  ad::Tensor wh1 = transform(tape, store, layers_[1], h1);
  ad::Tensor h2 = layer_output(tape, store, ctx, 1, wh1, training, dropout_rng, result.layers[1]);
  result.log_probs = ad::log_softmax(merge_heads(h2, layers_[1].shape));
  return result;
}

}  // namespace nogat
