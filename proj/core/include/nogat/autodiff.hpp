#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nogat/matrix.hpp"
#include "nogat/rng.hpp"
#include "nogat/sparse.hpp"

namespace nogat::ad {

/// Named trainable parameters with gradient buffers and Adam moments.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix first_moment;
    Matrix second_moment;
    bool frozen = false;  // excluded from updates; still receives gradients
  };

  /// Registers a parameter; throws ConfigError on a duplicate name.
  std::size_t add(std::string name, Matrix value);

  std::size_t index_of(std::string_view name) const;
  bool contains(std::string_view name) const;

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Entry& at(std::string_view name) { return entries_[index_of(name)]; }
  const Entry& at(std::string_view name) const { return entries_[index_of(name)]; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::deque<Entry> entries_;
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool requires_grad() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  /// Convenience for 1x1 tensors.
  double item() const;

 private:
  friend class Tape;
  Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Record of forward operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every input precedes its
/// consumer; backward() visits them once each in reverse. Sparse patterns
/// passed to ops are captured by reference and must outlive backward().
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);  // leaf that requires grad, not tied to a store
  Tensor param(ParamStore& store, std::string_view name);
  Tensor param(ParamStore& store, std::size_t index);

  /// Reverse sweep from a 1x1 loss; parameter gradients are added to their
  /// ParamStore entries. Throws DimensionError for a non-scalar loss.
  void backward(Tensor loss);

  /// Gradient accumulated at a node by the last backward(); empty if none.
  const Matrix& grad(Tensor t) const;

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
  std::vector<int> inputs(int id) const { return nodes_[static_cast<std::size_t>(id)].inputs; }

  // Used by op implementations.
  Tensor record(std::string_view op, Matrix value, std::vector<Tensor> inputs, BackwardFn fn);
  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad_of(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const Matrix& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  /// Gradient buffer of a node, zero-initialized on first use.
  Matrix& grad_buffer(int id);

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
  };
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Dense primitives. Shape mismatches throw DimensionError naming the op.

Tensor matmul(Tensor a, Tensor b);
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);  // elementwise
Tensor scale(Tensor a, double factor);
Tensor mul_scalar(Tensor a, Tensor s);               // s is 1x1
Tensor mul_const(Tensor a, const Matrix& factors);   // elementwise, constant factors
Tensor add_row(Tensor a, Tensor row);                // row is 1 x cols, broadcast down
Tensor broadcast_rows(Tensor row, Index rows);       // 1 x k -> rows x k
Tensor broadcast_cols(Tensor col, Index cols);       // n x 1 -> n x cols
Tensor concat_cols(std::span<const Tensor> parts);
Tensor relu(Tensor a);
Tensor leaky_relu(Tensor a, double slope);
Tensor elu(Tensor a, double alpha = 1.0);
Tensor exp(Tensor a);
Tensor log(Tensor a);
Tensor sigmoid(Tensor a);
Tensor sum(Tensor a);           // -> 1x1
Tensor sum_squares(Tensor a);   // -> 1x1
Tensor log_softmax(Tensor a);   // per row

/// Inverted dropout. Identity when !training or rate == 0.
Tensor dropout(Tensor a, double rate, bool training, Rng& rng);

/// out[e] = a[index[e]]
Tensor row_select(Tensor a, std::span<const Index> index);

/// Mean over rows in `rows` of -logp[row, label[row]].
Tensor nll_masked(Tensor log_probs, std::span<const int> labels, std::span<const Index> rows);

/// Block-wise mean: N x (K*F) -> N x F.
Tensor head_mean(Tensor a, Index heads);

/// Per-head dot product: x is N x (K*F), w is K x F; out[i,k] = <x[i, kF:(k+1)F], w[k]>.
Tensor head_dot(Tensor x, Tensor w);

// ---------------------------------------------------------------------------
// Sparse bridge primitives.

/// S * x with constant S.
Tensor spmm(const SparseMatrix& s, Tensor x);

/// As above, with the tape sharing ownership of S.
Tensor spmm(std::shared_ptr<const SparseMatrix> s, Tensor x);

/// S(values) * x where `values` (nnz x 1) are differentiable and `pattern`
/// supplies the structure.
Tensor spmm_values(const SparseMatrix& pattern, Tensor values, Tensor x);

/// Softmax over the stored entries of each row, independently per column.
/// logits is nnz x K; the per-row max is subtracted first.
Tensor segment_softmax(const SparseMatrix& pattern, Tensor logits);

/// Sum of the entries of each row: nnz x d -> rows x d.
Tensor segment_sum(const SparseMatrix& pattern, Tensor edge_values);

/// Multi-head weighted aggregation. weights is nnz x K, x is cols x (K*F);
/// out[i, block k] = sum_e weights[e, k] * x[col(e), block k].
Tensor edge_aggregate(const SparseMatrix& pattern, Tensor weights, Tensor x);

/// Pairs of storage positions whose products are summed per output entry.
struct DotPlan {
  std::vector<Index> offsets;  // per output entry, into left/right
  std::vector<Index> left;
  std::vector<Index> right;
};

/// out[p] = sum over plan pairs of values[left] * values[right]; values is m x 1.
Tensor sparse_dots(const DotPlan& plan, Tensor values);

// ---------------------------------------------------------------------------
// Gradient checking.

using LossBuilder = std::function<Tensor(Tape&, ParamStore&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Central differences over every entry of every parameter, compared with a
/// single reverse sweep. Relative error is |a-n| / max(|a|, |n|, 1e-8).
/// Throws NumericalError if a perturbed loss is non-finite.
GradCheckResult grad_check(const LossBuilder& loss_fn, ParamStore& params,
                           double epsilon = 1e-5);

}  // namespace nogat::ad
