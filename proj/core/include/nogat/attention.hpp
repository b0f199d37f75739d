#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nogat/autodiff.hpp"
#include "nogat/graph.hpp"
#include "nogat/heuristics.hpp"
#include "nogat/structural.hpp"

namespace nogat {

enum class Variant { Gat, NoGat, NoGatCn, NoGatRa, NoGatJaccard };

Variant parse_variant(std::string_view text);
std::string_view to_string(Variant v);
/// Heuristic replacing the learned correlation, if any.
std::optional<Heuristic> heuristic_of(Variant v);
/// True for every variant with the structure branch (all but Gat).
bool is_combined(Variant v);

/// Self-loop-augmented neighbourhoods used for attention.
struct AttentionEdges {
  SparseMatrix pattern;
  std::vector<Index> rows;       // source row of every stored entry
  std::vector<double> inv_size;  // 1 / |N(i)|, self included
};

/// Throws DataError if some node lacks its self-loop.
AttentionEdges make_attention_edges(SparseMatrix pattern_with_loops);

struct LayerShape {
  Index in_dim = 0;
  Index head_dim = 0;  // F'
  Index heads = 1;     // K
  bool concat = true;  // false: average heads
};

/// Parameters of one attention layer. The plain GAT layer owns W and the
/// attention vector; the combined layer adds (g_m, g_n) per head and eps.
/// Names: <prefix>.weight (in x K*F'), <prefix>.att_src / att_dst (K x F'),
/// <prefix>.g_m / g_n (1 x K), <prefix>.eps (1 x 1).
struct CombinedLayer {
  LayerShape shape;
  bool combined = true;
  std::size_t weight = 0;
  std::size_t att_src = 0;
  std::size_t att_dst = 0;
  std::size_t g_m = 0;
  std::size_t g_n = 0;
  std::size_t eps = 0;

  CombinedLayer() = default;
  CombinedLayer(ad::ParamStore& store, const std::string& prefix, const LayerShape& shape,
                bool combined, double eps_init, Rng& rng);
};

/// W h for every head, N x (K*F').
ad::Tensor transform(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                     ad::Tensor h);
ad::Tensor transform(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                     std::shared_ptr<const SparseMatrix> h);

/// m: nnz x K, softmax over N(i) of LeakyReLU(a^T [W h_i || W h_j]).
ad::Tensor feature_coefficients(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                                ad::Tensor wh, const AttentionEdges& edges, double slope = 0.2);

/// n: nnz x 1, softmax over N(i) of C_ij.
ad::Tensor structure_coefficients(ad::Tensor correlation, const AttentionEdges& edges);

/// (p_m, q_n), each 1 x K, by a two-way softmax of (g_m, g_n).
std::pair<ad::Tensor, ad::Tensor> significance(ad::Tensor g_m, ad::Tensor g_n);

/// alpha = p_m * m + q_n * n (nnz x K); n is shared by all heads.
ad::Tensor combine_coefficients(ad::Tensor m, ad::Tensor n, ad::Tensor p_m, ad::Tensor q_n);

/// Normalized form (p m_ij + q n_ij) / sum_k (p m_ik + q n_ik) on plain
/// values, for cross-checking the collapsed form. m: nnz x K, n: nnz x 1.
Matrix combine_coefficients_normalized(const Matrix& m, const Matrix& n, const Matrix& p_m,
                                       const Matrix& q_n, const SparseMatrix& pattern);

/// h'_i = (alpha_ii + eps / |N(i)|) W h_i + sum_{j != i} alpha_ij W h_j, per head,
/// before head merging.
ad::Tensor layer_forward(ad::Tape& tape, ad::ParamStore& store, const CombinedLayer& layer,
                         ad::Tensor wh, ad::Tensor alpha, const AttentionEdges& edges);

/// h'_i = sum_j m_ij W h_j, per head, before head merging.
ad::Tensor gat_layer_forward(ad::Tensor wh, ad::Tensor m, const AttentionEdges& edges);

/// Concatenation is the native layout; averaging reduces K blocks to one.
ad::Tensor merge_heads(ad::Tensor h, const LayerShape& shape);

// ---------------------------------------------------------------------------
// Two-layer model

struct ModelSpec {
  Variant variant = Variant::NoGat;
  Index heads = 8;         // hidden-layer heads
  Index hidden = 8;        // per-head hidden width
  Index output_heads = 1;  // averaged at the output
  double dropout = 0.5;
  double eps_init = 0.0;
  double leaky_slope = 0.2;
  StructSettings structure;
};

/// Per-graph precomputation shared by every forward pass.
struct GraphContext {
  Index num_nodes = 0;
  Index num_features = 0;
  int num_classes = 0;
  std::shared_ptr<const SparseMatrix> features;  // row-normalized, sparse
  AttentionEdges edges;
  std::optional<OverlayPlan> overlay;            // learned-structure variant
  std::optional<Matrix> heuristic_correlation;   // heuristic variants, nnz x 1
};

/// `normalize_features` divides each feature row by its sum first.
GraphContext make_context(const Graph& graph, const ModelSpec& spec, bool normalize_features);

/// Coefficients recorded for one layer during a forward pass.
struct LayerTrace {
  ad::Tensor m;
  ad::Tensor n;      // invalid for Gat
  ad::Tensor p_m;    // invalid for Gat
  ad::Tensor q_n;    // invalid for Gat
  ad::Tensor alpha;  // before attention dropout
};

struct ForwardResult {
  ad::Tensor log_probs;  // N x C
  std::vector<LayerTrace> layers;
};

class NoGatModel {
 public:
  NoGatModel(const ModelSpec& spec, Index in_dim, int num_classes, ad::ParamStore& store,
             Rng& init_rng);

  /// dropout(x) -> layer 1 (concat, ELU) -> dropout -> layer 2 (mean) -> log-softmax.
  ForwardResult forward(ad::Tape& tape, ad::ParamStore& store, const GraphContext& ctx,
                        bool training, Rng& dropout_rng) const;

  const ModelSpec& spec() const { return spec_; }
  const std::vector<CombinedLayer>& layers() const { return layers_; }

 private:
  ad::Tensor layer_output(ad::Tape& tape, ad::ParamStore& store, const GraphContext& ctx,
                          std::size_t index, ad::Tensor wh, bool training, Rng& rng,
                          LayerTrace& trace) const;

  ModelSpec spec_;
  std::vector<CombinedLayer> layers_;
  std::vector<StructGenerator> generators_;
};

}  // namespace nogat
