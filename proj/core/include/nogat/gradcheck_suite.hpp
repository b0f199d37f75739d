#pragma once

#include <string>
#include <vector>

#include "nogat/graph.hpp"

namespace nogat {

/// Fixed 6-node graph (two triangles joined by one edge, 4 features, 2 classes)
/// with every node in the training mask.
Graph gradcheck_graph();

struct GradCheckLine {
  std::string name;
  double max_relative_error = 0.0;
  double threshold = 0.0;
  std::size_t entries = 0;
  bool pass() const { return max_relative_error < threshold; }
};

enum class GradLevel { Unit, Layer, Model };
GradLevel parse_grad_level(std::string_view text);

/// Central-difference checks. Unit: every primitive op (threshold 1e-6).
/// Layer: one combined attention layer with its structure generator (1e-4).
/// Model: the two-layer network with the weight penalty (1e-4).
/// `inject_fault` adds an op whose backward is deliberately wrong.
std::vector<GradCheckLine> run_gradcheck(GradLevel level, bool inject_fault = false);

}  // namespace nogat
