#include "nogat/structural.hpp"

#include <cmath>

#include "nogat/error.hpp"

namespace nogat {

StructGenerator::StructGenerator(ad::ParamStore& store, const std::string& prefix,
                                 const StructSettings& s, Rng& rng)
    : settings(s) {
  if (s.hops < 1) throw ConfigError("hops must be >= 1");
  if (!(s.xi > 0.0 && s.xi <= 1.0)) throw ConfigError("xi must lie in (0, 1]");
  f_edge = Mlp(store, prefix + ".f_edge", {1, s.edge_width, s.edge_width}, rng);
  f_node = Mlp(store, prefix + ".f_node", {s.edge_width, s.node_width, 1}, rng);
  if (s.scale_width > 0)
    scale = Mlp(store, prefix + ".scale", {1, s.scale_width, 1}, rng);
  else
    scale = Mlp(store, prefix + ".scale", {1, 1}, rng);
}

OverlayPlan make_overlay_plan(const SparseMatrix& a_norm, const SparseMatrix& attention,
                              const StructSettings& settings) {
  if (a_norm.rows() != a_norm.cols() || attention.rows() != a_norm.rows() ||
      attention.cols() != a_norm.cols())
    throw DimensionError("make_overlay_plan: adjacency and attention shapes differ");
  if (settings.hops < 1) throw ConfigError("hops must be >= 1");

  OverlayPlan plan;
  plan.a_norm = a_norm;
  plan.attention = attention;

  SparseMatrix power = a_norm;
  SparseMatrix acc = a_norm;
  double weight = 1.0;
  for (int l = 2; l <= settings.hops; ++l) {
    power = multiply(power, a_norm);
    weight *= settings.xi;
    if (power.nnz() > settings.max_overlay_nnz)
      throw NumericalError("overlay pattern for " + std::to_string(l) + " hops has " +
                           std::to_string(power.nnz()) + " entries, above the budget of " +
                           std::to_string(settings.max_overlay_nnz) + "; use fewer hops");
    acc = add(acc, power, weight);
    if (acc.nnz() > settings.max_overlay_nnz)
      throw NumericalError("overlay pattern has " + std::to_string(acc.nnz()) +
                           " entries, above the budget of " +
                           std::to_string(settings.max_overlay_nnz) + "; use fewer hops");
  }
  plan.hop_weights = std::move(acc);

  const SparseMatrix& z = plan.hop_weights;
  auto& dp = plan.correlation_plan;
  dp.offsets.assign(1, 0);
  dp.offsets.reserve(static_cast<std::size_t>(attention.nnz()) + 1);
  for (Index i = 0; i < attention.rows(); ++i) {
    for (Index j : attention.row_cols(i)) {
      auto a = z.row_cols(i);
      auto b = z.row_cols(j);
      std::size_t p = 0, q = 0;
      while (p < a.size() && q < b.size()) {
        if (a[p] < b[q]) {
          ++p;
        } else if (b[q] < a[p]) {
          ++q;
        } else {
          dp.left.push_back(z.row_begin(i) + static_cast<Index>(p));
          dp.right.push_back(z.row_begin(j) + static_cast<Index>(q));
          ++p;
          ++q;
        }
      }
      dp.offsets.push_back(static_cast<Index>(dp.left.size()));
    }
  }
  return plan;
}

ad::Tensor node_struct_features(ad::Tape& tape, ad::ParamStore& store, const StructGenerator& gen,
                                const SparseMatrix& a_norm) {
  Matrix edge_in(a_norm.nnz(), 1);
  std::copy(a_norm.values().begin(), a_norm.values().end(), edge_in.data().begin());
  ad::Tensor edges = gen.f_edge.forward(tape, store, tape.constant(std::move(edge_in)));
  ad::Tensor pooled = ad::segment_sum(a_norm, edges);
  return gen.f_node.forward(tape, store, pooled);
}

ad::Tensor overlay_matrix(ad::Tape& tape, ad::ParamStore& store, const StructGenerator& gen,
                          const OverlayPlan& plan, ad::Tensor h_struct) {
  const SparseMatrix& hw = plan.hop_weights;
  if (h_struct.rows() != hw.cols() || h_struct.cols() != 1)
    throw DimensionError("overlay_matrix: h_struct is " + h_struct.value().shape_string() +
                         ", expected " + std::to_string(hw.cols()) + "x1");
  Matrix weights(hw.nnz(), 1);
  std::copy(hw.values().begin(), hw.values().end(), weights.data().begin());
  ad::Tensor gathered = ad::row_select(h_struct, hw.col_indices());
  ad::Tensor pre = ad::mul_const(gathered, weights);
  return gen.scale.forward(tape, store, pre);
}

ad::Tensor correlation(const OverlayPlan& plan, ad::Tensor overlay_values) {
  if (overlay_values.rows() != plan.hop_weights.nnz())
    throw DimensionError("correlation: overlay values do not match the plan");
  return ad::sparse_dots(plan.correlation_plan, overlay_values);
}

ad::Tensor structural_correlation(ad::Tape& tape, ad::ParamStore& store, const StructGenerator& gen,
                                  const OverlayPlan& plan) {
  ad::Tensor h = node_struct_features(tape, store, gen, plan.a_norm);
  ad::Tensor z = overlay_matrix(tape, store, gen, plan, h);
  return correlation(plan, z);
}

}  // namespace nogat
