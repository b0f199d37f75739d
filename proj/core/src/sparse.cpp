#include "nogat/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nogat/error.hpp"

namespace nogat {

SparseMatrix::SparseMatrix(Index rows, Index cols, std::vector<Index> row_offsets,
                           std::vector<Index> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (rows_ < 0 || cols_ < 0) throw DataError("sparse matrix: negative dimension");
  if (row_offsets_.size() != static_cast<std::size_t>(rows_) + 1)
    throw DataError("sparse matrix: row_offsets must have rows+1 entries");
  if (col_indices_.size() != values_.size())
    throw DataError("sparse matrix: col_indices and values differ in length");
  if (row_offsets_.front() != 0 || row_offsets_.back() != nnz())
    throw DataError("sparse matrix: row_offsets must start at 0 and end at nnz");
  for (Index r = 0; r < rows_; ++r) {
    Index b = row_begin(r), e = row_end(r);
    if (e < b) throw DataError("sparse matrix: row_offsets not monotone at row " + std::to_string(r));
    for (Index k = b; k < e; ++k) {
      Index c = col_indices_[static_cast<std::size_t>(k)];
      if (c < 0 || c >= cols_)
        throw DataError("sparse matrix: column " + std::to_string(c) + " out of range in row " +
                        std::to_string(r));
      if (k > b && col_indices_[static_cast<std::size_t>(k - 1)] >= c)
        throw DataError("sparse matrix: columns not strictly increasing in row " +
                        std::to_string(r));
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(Index rows, Index cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw DataError("sparse matrix: triplet (" + std::to_string(t.row) + ", " +
                      std::to_string(t.col) + ") out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Index> offsets(static_cast<std::size_t>(rows) + 1, 0);
  std::vector<Index> cols_out;
  std::vector<double> vals_out;
  cols_out.reserve(triplets.size());
  vals_out.reserve(triplets.size());
  Index last_row = -1, last_col = -1;
  for (const auto& t : triplets) {
    if (t.row == last_row && t.col == last_col) {
      vals_out.back() += t.value;
      continue;
    }
    cols_out.push_back(t.col);
    vals_out.push_back(t.value);
    ++offsets[static_cast<std::size_t>(t.row) + 1];
    last_row = t.row;
    last_col = t.col;
  }
  for (std::size_t r = 0; r < static_cast<std::size_t>(rows); ++r) offsets[r + 1] += offsets[r];
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out), std::move(vals_out));
}

SparseMatrix SparseMatrix::identity(Index n) {
  std::vector<Index> offsets(static_cast<std::size_t>(n) + 1);
  std::vector<Index> cols(static_cast<std::size_t>(n));
  for (Index i = 0; i <= n; ++i) offsets[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < n; ++i) cols[static_cast<std::size_t>(i)] = i;
  return SparseMatrix(n, n, std::move(offsets), std::move(cols),
                      std::vector<double>(static_cast<std::size_t>(n), 1.0));
}

std::span<const Index> SparseMatrix::row_cols(Index r) const {
  return std::span<const Index>(col_indices_).subspan(static_cast<std::size_t>(row_begin(r)),
                                                      static_cast<std::size_t>(row_nnz(r)));
}

std::span<const double> SparseMatrix::row_values(Index r) const {
  return std::span<const double>(values_).subspan(static_cast<std::size_t>(row_begin(r)),
                                                  static_cast<std::size_t>(row_nnz(r)));
}

std::optional<Index> SparseMatrix::find(Index r, Index c) const {
  auto cols = row_cols(r);
  auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return std::nullopt;
  return row_begin(r) + static_cast<Index>(it - cols.begin());
}

double SparseMatrix::at(Index r, Index c) const {
  auto pos = find(r, c);
  return pos ? values_[static_cast<std::size_t>(*pos)] : 0.0;
}

std::vector<Index> SparseMatrix::entry_rows() const {
  std::vector<Index> out(static_cast<std::size_t>(nnz()));
  for (Index r = 0; r < rows_; ++r)
    for (Index k = row_begin(r); k < row_end(r); ++k) out[static_cast<std::size_t>(k)] = r;
  return out;
}

SparseMatrix SparseMatrix::with_values(std::vector<double> values) const {
  if (values.size() != values_.size())
    throw DimensionError("with_values: expected " + std::to_string(values_.size()) +
                         " values, got " + std::to_string(values.size()));
  SparseMatrix out = *this;
  out.values_ = std::move(values);
  return out;
}

bool SparseMatrix::same_pattern(const SparseMatrix& other) const {
  return rows_ == other.rows_ && cols_ == other.cols_ && row_offsets_ == other.row_offsets_ &&
         col_indices_ == other.col_indices_;
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> dense(static_cast<std::size_t>(rows_ * cols_), 0.0);
  for (Index r = 0; r < rows_; ++r)
    for (Index k = row_begin(r); k < row_end(r); ++k)
      dense[static_cast<std::size_t>(r * cols_ + col_indices_[static_cast<std::size_t>(k)])] =
          values_[static_cast<std::size_t>(k)];
  return dense;
}

SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("sparse multiply: inner dimensions " + std::to_string(a.cols()) +
                         " and " + std::to_string(b.rows()) + " differ");
  // Gustavson row-by-row accumulation with a dense scatter buffer.
  std::vector<double> acc(static_cast<std::size_t>(b.cols()), 0.0);
  std::vector<char> seen(static_cast<std::size_t>(b.cols()), 0);
  std::vector<Index> touched;
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  offsets.reserve(static_cast<std::size_t>(a.rows()) + 1);
  for (Index r = 0; r < a.rows(); ++r) {
    touched.clear();
    auto acols = a.row_cols(r);
    auto avals = a.row_values(r);
    for (std::size_t p = 0; p < acols.size(); ++p) {
      Index k = acols[p];
      auto bcols = b.row_cols(k);
      auto bvals = b.row_values(k);
      for (std::size_t q = 0; q < bcols.size(); ++q) {
        auto c = static_cast<std::size_t>(bcols[q]);
        if (!seen[c]) {
          seen[c] = 1;
          touched.push_back(bcols[q]);
        }
        acc[c] += avals[p] * bvals[q];
      }
    }
    std::sort(touched.begin(), touched.end());
    for (Index c : touched) {
      cols.push_back(c);
      vals.push_back(acc[static_cast<std::size_t>(c)]);
      acc[static_cast<std::size_t>(c)] = 0.0;
      seen[static_cast<std::size_t>(c)] = 0;
    }
    offsets.push_back(static_cast<Index>(cols.size()));
  }
  return SparseMatrix(a.rows(), b.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double scale_b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("sparse add: shape mismatch");
  std::vector<Index> offsets{0};
  std::vector<Index> cols;
  std::vector<double> vals;
  for (Index r = 0; r < a.rows(); ++r) {
    auto ac = a.row_cols(r), bc = b.row_cols(r);
    auto av = a.row_values(r), bv = b.row_values(r);
    std::size_t i = 0, j = 0;
    while (i < ac.size() || j < bc.size()) {
      if (j == bc.size() || (i < ac.size() && ac[i] < bc[j])) {
        cols.push_back(ac[i]);
        vals.push_back(av[i++]);
      } else if (i == ac.size() || bc[j] < ac[i]) {
        cols.push_back(bc[j]);
        vals.push_back(scale_b * bv[j++]);
      } else {
        cols.push_back(ac[i]);
        vals.push_back(av[i++] + scale_b * bv[j++]);
      }
    }
    offsets.push_back(static_cast<Index>(cols.size()));
  }
  return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(cols), std::move(vals));
}

bool is_symmetric(const SparseMatrix& m, double tolerance) {
  if (m.rows() != m.cols()) return false;
  for (Index r = 0; r < m.rows(); ++r) {
    auto cols = m.row_cols(r);
    auto vals = m.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      auto pos = m.find(cols[k], r);
      if (!pos) return false;
      if (std::abs(m.values()[static_cast<std::size_t>(*pos)] - vals[k]) > tolerance) return false;
    }
  }
  return true;
}

}  // namespace nogat
