#pragma once

#include <string>

#include "nogat/autodiff.hpp"
#include "nogat/nn.hpp"
#include "nogat/sparse.hpp"

namespace nogat {

/// Widths and hop settings of the structural feature generator.
struct StructSettings {
  Index edge_width = 32;   // d_e
  Index node_width = 32;   // d_n
  Index scale_width = 32;  // d_g; 0 makes the scale network a single linear map
  int hops = 2;            // L
  double xi = 0.5;         // weight decay per additional hop
  Index max_overlay_nnz = 20'000'000;
};

/// Learned structure pipeline parameters:
///   f_edge : 1 -> d_e -> d_e
///   f_node : d_e -> d_n -> 1
///   scale  : 1 -> d_g -> 1, applied to every stored overlay entry
struct StructGenerator {
  Mlp f_edge;
  Mlp f_node;
  Mlp scale;
  StructSettings settings;

  StructGenerator() = default;
  StructGenerator(ad::ParamStore& store, const std::string& prefix, const StructSettings& settings,
                  Rng& rng);
};

/// Parameter-independent precomputation for one graph: the overlay pattern
/// (union of the patterns of A_norm^1 .. A_norm^L) with its constant hop
/// weights sum_l xi^{l-1} (A_norm^l)_ij, and the row-intersection plan that
/// turns overlay values into per-attention-edge inner products.
struct OverlayPlan {
  SparseMatrix a_norm;           // no self-loops
  SparseMatrix hop_weights;      // overlay pattern, values sum_l xi^{l-1} (A_norm^l)_ij
  SparseMatrix attention;        // self-loop-augmented adjacency pattern
  ad::DotPlan correlation_plan;  // one output per stored attention entry
};

/// Throws NumericalError when the overlay pattern exceeds settings.max_overlay_nnz.
OverlayPlan make_overlay_plan(const SparseMatrix& a_norm, const SparseMatrix& attention,
                              const StructSettings& settings);

/// h_struct (N x 1): f_node(sum over row i of f_edge(A_norm_ij)).
ad::Tensor node_struct_features(ad::Tape& tape, ad::ParamStore& store,
                                const StructGenerator& gen, const SparseMatrix& a_norm);

/// Stored overlay values (hop_weights.nnz() x 1):
/// Z_ij = scale(hop_weights_ij * h_struct_j).
ad::Tensor overlay_matrix(ad::Tape& tape, ad::ParamStore& store, const StructGenerator& gen,
                          const OverlayPlan& plan, ad::Tensor h_struct);

/// C_ij = <z_i, z_j> for every stored attention entry (attention.nnz() x 1).
ad::Tensor correlation(const OverlayPlan& plan, ad::Tensor overlay_values);

/// Full chain node_struct_features -> overlay_matrix -> correlation.
ad::Tensor structural_correlation(ad::Tape& tape, ad::ParamStore& store,
                                  const StructGenerator& gen, const OverlayPlan& plan);

}  // namespace nogat
