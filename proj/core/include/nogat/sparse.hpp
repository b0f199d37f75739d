#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nogat {

using Index = std::int64_t;

/// (row, col, value) entry used to assemble a SparseMatrix.
struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed sparse row matrix.
///
/// Column indices within a row are strictly increasing, so every (row, col)
/// pair is stored at most once. Instances are immutable once constructed and
/// may be shared freely between threads.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  /// Validates the CSR invariants and throws DataError on violation.
  SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
               std::vector<Index> col_indices, std::vector<double> values);

  /// Builds from unordered triplets. Duplicate (row, col) pairs are summed.
  static SparseMatrix from_triplets(Index rows, Index cols,
                                    std::vector<Triplet> triplets);

  static SparseMatrix identity(Index n);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index nnz() const { return static_cast<Index>(col_indices_.size()); }

  std::span<const Index> row_offsets() const { return row_offsets_; }
  std::span<const Index> col_indices() const { return col_indices_; }
  std::span<const double> values() const { return values_; }

  Index row_begin(Index r) const { return row_offsets_[static_cast<std::size_t>(r)]; }
  Index row_end(Index r) const { return row_offsets_[static_cast<std::size_t>(r) + 1]; }
  Index row_nnz(Index r) const { return row_end(r) - row_begin(r); }

  std::span<const Index> row_cols(Index r) const;
  std::span<const double> row_values(Index r) const;

  /// Storage position of (r, c), if stored.
  std::optional<Index> find(Index r, Index c) const;

  /// Value at (r, c); zero when not stored.
  double at(Index r, Index c) const;

  /// Row index of every stored entry, aligned with col_indices().
  std::vector<Index> entry_rows() const;

  /// Same sparsity pattern, new values.
  SparseMatrix with_values(std::vector<double> values) const;

  bool same_pattern(const SparseMatrix& other) const;

  /// Row-major dense copy.
  std::vector<double> to_dense() const;

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Index> row_offsets_{0};
  std::vector<Index> col_indices_;
  std::vector<double> values_;
};

/// Sparse-sparse product A * B. Entries that cancel to zero stay stored.
SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b);

/// Elementwise sum over the union of both patterns.
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double scale_b = 1.0);

bool is_symmetric(const SparseMatrix& m, double tolerance = 0.0);

}  // namespace nogat
