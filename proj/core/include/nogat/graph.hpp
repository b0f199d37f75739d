#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nogat/matrix.hpp"
#include "nogat/sparse.hpp"

namespace nogat {

using Mask = std::vector<std::uint8_t>;

/// Node-classification dataset: features, symmetric binary adjacency,
/// dense labels and disjoint train/val/test masks.
struct Graph {
  std::string name;
  Matrix features;             // N x F
  std::vector<int> labels;     // length N, in [0, num_classes)
  int num_classes = 0;
  SparseMatrix adjacency;      // N x N, symmetric, zero diagonal
  Mask train_mask;
  Mask val_mask;
  Mask test_mask;

  Index num_nodes() const { return features.rows(); }
  Index num_features() const { return features.cols(); }

  /// Throws DataError naming the first violated invariant.
  void validate() const;
};

/// Number of stored neighbours per node.
struct DegreeVector {
  std::vector<Index> degrees;
};

DegreeVector degrees(const SparseMatrix& adjacency);

/// D^{-1/2} A D^{-1/2}; rows of isolated nodes stay empty.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency, const DegreeVector& degrees);

/// Adds a unit diagonal; existing diagonal entries are set to 1.
SparseMatrix add_self_loops(const SparseMatrix& adjacency);

enum class SplitPolicy { PlanetoidPublic, Random602020 };

SplitPolicy parse_split_policy(std::string_view text);
std::string_view to_string(SplitPolicy policy);

/// Returns a copy of `graph` with fresh masks.
///
/// PlanetoidPublic: first 20 nodes of each class (node order) train, the next
/// 500 remaining nodes validate, the last 1000 remaining nodes test. The seed
/// is unused.
/// Random602020: per-class shuffle, then floor(0.6 n) (at least one) train,
/// floor(0.2 n) validation, the rest test.
Graph make_splits(const Graph& graph, SplitPolicy policy, std::uint64_t seed);

/// Divides every feature row by its sum; all-zero rows are left untouched.
Matrix row_normalize(const Matrix& features);

/// Indices i with mask[i] set, ascending.
std::vector<Index> mask_indices(const Mask& mask);

std::size_t mask_count(const Mask& mask);

}  // namespace nogat
