#include "nogat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nogat/error.hpp"

namespace nogat::ad {

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::add(std::string name, Matrix value) {
  if (contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
  Entry e;
  e.grad = Matrix(value.rows(), value.cols());
  e.first_moment = Matrix(value.rows(), value.cols());
  e.second_moment = Matrix(value.rows(), value.cols());
  e.name = std::move(name);
  e.value = std::move(value);
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  throw ConfigError("unknown parameter '" + std::string(name) + "'");
}

bool ParamStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

// ---------------------------------------------------------------------------
// Tensor / Tape

const Matrix& Tensor::value() const { return tape_->value_of(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad_of(id_); }

double Tensor::item() const {
  const auto& v = value();
  if (v.size() != 1) throw DimensionError("item: tensor is " + v.shape_string());
  return v[0];
}

Tensor Tape::constant(Matrix value) { return record("constant", std::move(value), {}, nullptr); }

Tensor Tape::variable(Matrix value) {
  Tensor t = record("variable", std::move(value), {}, nullptr);
  nodes_.back().requires_grad = true;
  return t;
}

Tensor Tape::param(ParamStore& store, std::string_view name) {
  return param(store, store.index_of(name));
}

Tensor Tape::param(ParamStore& store, std::size_t index) {
  Tensor t = record("param", store[index].value, {}, nullptr);
  auto& node = nodes_.back();
  node.requires_grad = true;
  node.store = &store;
  node.param_index = index;
  return t;
}

Tensor Tape::record(std::string_view op, Matrix value, std::vector<Tensor> inputs, BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape() != this) throw Error(std::string(op) + ": input belongs to another tape");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || requires_grad_of(in.id());
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

const Matrix& Tape::grad(Tensor t) const { return nodes_[static_cast<std::size_t>(t.id())].grad; }

void Tape::backward(Tensor loss) {
  if (loss.tape() != this) throw Error("backward: loss belongs to another tape");
  const auto& lv = value_of(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1)
    throw DimensionError("backward: loss must be 1x1, got " + lv.shape_string());
  for (auto& n : nodes_) n.grad = Matrix();
  grad_buffer(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.store) {
      auto& g = (*n.store)[n.param_index].grad;
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

Tape& tape_of(std::string_view op, std::initializer_list<Tensor> ts) {
  Tape* t = nullptr;
  for (const auto& x : ts) {
    if (!x.valid()) throw Error(std::string(op) + ": invalid tensor");
    if (t && x.tape() != t) throw Error(std::string(op) + ": inputs on different tapes");
    t = x.tape();
  }
  return *t;
}

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                       b.shape_string());
}

bool needs(Tape& t, int id) { return t.requires_grad_of(id); }

// Shared body for unary elementwise ops: grad_in = grad_out * d(x).
template <typename F, typename D>
Tensor unary(std::string_view op, Tensor a, F f, D deriv) {
  Tape& t = tape_of(op, {a});
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = f(x[k]);
  int ia = a.id();
  return t.record(op, std::move(out), {a}, [ia, deriv](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& xv = tp.value_of(ia);
    const Matrix& yv = tp.value_of(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * deriv(xv[k], yv[k]);
  });
}

// c += a * b (or transposed variants), skipping zero entries of the left operand.
void gemm_acc(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c) {
  const Index n = c.rows(), m = c.cols();
  const Index inner = trans_a ? a.rows() : a.cols();
  for (Index i = 0; i < n; ++i) {
    auto crow = c.row(i);
    for (Index p = 0; p < inner; ++p) {
      const double av = trans_a ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      if (!trans_b) {
        auto brow = b.row(p);
        for (Index j = 0; j < m; ++j) crow[static_cast<std::size_t>(j)] += av * brow[static_cast<std::size_t>(j)];
      } else {
        for (Index j = 0; j < m; ++j) crow[static_cast<std::size_t>(j)] += av * b(j, p);
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense primitives

Tensor matmul(Tensor a, Tensor b) {
  Tape& t = tape_of("matmul", {a, b});
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out(av.rows(), bv.cols());
  gemm_acc(av, false, bv, false, out);
  int ia = a.id(), ib = b.id();
  return t.record("matmul", std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (needs(tp, ia)) gemm_acc(g, false, tp.value_of(ib), true, tp.grad_buffer(ia));
    if (needs(tp, ib)) {
      // dB = A^T g, iterating rows of A to skip its zeros.
      const Matrix& A = tp.value_of(ia);
      Matrix& gb = tp.grad_buffer(ib);
      for (Index i = 0; i < A.rows(); ++i) {
        auto grow = g.row(i);
        for (Index p = 0; p < A.cols(); ++p) {
          const double av2 = A(i, p);
          if (av2 == 0.0) continue;
          auto gbrow = gb.row(p);
          for (std::size_t j = 0; j < grow.size(); ++j) gbrow[j] += av2 * grow[j];
        }
      }
    }
  });
}

Tensor add(Tensor a, Tensor b) {
  Tape& t = tape_of("add", {a, b});
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += b.value()[k];
  int ia = a.id(), ib = b.id();
  return t.record("add", std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    for (int id : {ia, ib}) {
      if (!needs(tp, id)) continue;
      Matrix& gi = tp.grad_buffer(id);
      for (std::size_t k = 0; k < g.size(); ++k) gi[k] += g[k];
    }
  });
}

Tensor sub(Tensor a, Tensor b) {
  Tape& t = tape_of("sub", {a, b});
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= b.value()[k];
  int ia = a.id(), ib = b.id();
  return t.record("sub", std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (needs(tp, ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    }
    if (needs(tp, ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] -= g[k];
    }
  });
}

Tensor mul(Tensor a, Tensor b) {
  Tape& t = tape_of("mul", {a, b});
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= b.value()[k];
  int ia = a.id(), ib = b.id();
  return t.record("mul", std::move(out), {a, b}, [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (needs(tp, ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      const Matrix& bv = tp.value_of(ib);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * bv[k];
    }
    if (needs(tp, ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      const Matrix& av = tp.value_of(ia);
      for (std::size_t k = 0; k < g.size(); ++k) gb[k] += g[k] * av[k];
    }
  });
}

Tensor scale(Tensor a, double factor) {
  return unary("scale", a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Tensor mul_scalar(Tensor a, Tensor s) {
  Tape& t = tape_of("mul_scalar", {a, s});
  if (s.value().size() != 1) shape_error("mul_scalar", a.value(), s.value());
  const double sv = s.value()[0];
  Matrix out = a.value();
  for (auto& v : out.data()) v *= sv;
  int ia = a.id(), is = s.id();
  return t.record("mul_scalar", std::move(out), {a, s}, [ia, is](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (needs(tp, ia)) {
      const double sv2 = tp.value_of(is)[0];
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * sv2;
    }
    if (needs(tp, is)) {
      const Matrix& av = tp.value_of(ia);
      double acc = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) acc += g[k] * av[k];
      tp.grad_buffer(is)[0] += acc;
    }
  });
}

Tensor mul_const(Tensor a, const Matrix& factors) {
  Tape& t = tape_of("mul_const", {a});
  if (!a.value().same_shape(factors)) shape_error("mul_const", a.value(), factors);
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= factors[k];
  int ia = a.id();
  return t.record("mul_const", std::move(out), {a}, [ia, factors](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * factors[k];
  });
}

Tensor add_row(Tensor a, Tensor row) {
  Tape& t = tape_of("add_row", {a, row});
  const Matrix& av = a.value();
  const Matrix& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) shape_error("add_row", av, rv);
  Matrix out = av;
  for (Index i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += rv[j];
  }
  int ia = a.id(), ir = row.id();
  return t.record("add_row", std::move(out), {a, row}, [ia, ir](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    if (needs(tp, ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
    }
    if (needs(tp, ir)) {
      Matrix& gr = tp.grad_buffer(ir);
      for (Index i = 0; i < g.rows(); ++i) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) gr[j] += r[j];
      }
    }
  });
}

Tensor broadcast_rows(Tensor row, Index rows) {
  Tape& t = tape_of("broadcast_rows", {row});
  const Matrix& rv = row.value();
  if (rv.rows() != 1) shape_error("broadcast_rows", rv, rv);
  Matrix out(rows, rv.cols());
  for (Index i = 0; i < rows; ++i) std::copy(rv.data().begin(), rv.data().end(), out.row(i).begin());
  int ir = row.id();
  return t.record("broadcast_rows", std::move(out), {row}, [ir](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& gr = tp.grad_buffer(ir);
    for (Index i = 0; i < g.rows(); ++i) {
      auto r = g.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) gr[j] += r[j];
    }
  });
}

Tensor broadcast_cols(Tensor col, Index cols) {
  Tape& t = tape_of("broadcast_cols", {col});
  const Matrix& cv = col.value();
  if (cv.cols() != 1) shape_error("broadcast_cols", cv, cv);
  Matrix out(cv.rows(), cols);
  for (Index i = 0; i < cv.rows(); ++i) {
    auto r = out.row(i);
    std::fill(r.begin(), r.end(), cv(i, 0));
  }
  int ic = col.id();
  return t.record("broadcast_cols", std::move(out), {col}, [ic](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& gc = tp.grad_buffer(ic);
    for (Index i = 0; i < g.rows(); ++i) {
      auto r = g.row(i);
      gc(i, 0) += std::accumulate(r.begin(), r.end(), 0.0);
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = tape_of("concat_cols", {parts.front()});
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error("concat_cols: inputs on different tapes");
    if (p.rows() != rows) shape_error("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> starts;
  Index c0 = 0;
  for (const auto& p : parts) {
    const Matrix& pv = p.value();
    for (Index i = 0; i < rows; ++i)
      std::copy(pv.row(i).begin(), pv.row(i).end(), out.row(i).begin() + c0);
    ids.push_back(p.id());
    starts.push_back(c0);
    c0 += pv.cols();
  }
  return t.record("concat_cols", std::move(out), {parts.begin(), parts.end()},
                  [ids, starts](Tape& tp, int self) {
                    const Matrix& g = tp.upstream(self);
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                      if (!needs(tp, ids[p])) continue;
                      Matrix& gp = tp.grad_buffer(ids[p]);
                      for (Index i = 0; i < g.rows(); ++i)
                        for (Index j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, starts[p] + j);
                    }
                  });
}

Tensor relu(Tensor a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tensor a, double slope) {
  return unary("leaky_relu", a, [slope](double x) { return x > 0.0 ? x : slope * x; },
               [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(Tensor a, double alpha) {
  return unary("elu", a, [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
               [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor exp(Tensor a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(Tensor a) {
  return unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor sigmoid(Tensor a) {
  return unary("sigmoid", a,
               [](double x) {
                 if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                 double e = std::exp(x);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(Tensor a) {
  Tape& t = tape_of("sum", {a});
  const auto& d = a.value().data();
  Matrix out = Matrix::scalar(std::accumulate(d.begin(), d.end(), 0.0));
  int ia = a.id();
  return t.record("sum", std::move(out), {a}, [ia](Tape& tp, int self) {
    const double g = tp.upstream(self)[0];
    Matrix& ga = tp.grad_buffer(ia);
    for (auto& v : ga.data()) v += g;
  });
}

Tensor sum_squares(Tensor a) {
  Tape& t = tape_of("sum_squares", {a});
  double s = 0.0;
  for (double v : a.value().data()) s += v * v;
  int ia = a.id();
  return t.record("sum_squares", Matrix::scalar(s), {a}, [ia](Tape& tp, int self) {
    const double g = tp.upstream(self)[0];
    const Matrix& av = tp.value_of(ia);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < av.size(); ++k) ga[k] += 2.0 * g * av[k];
  });
}

Tensor log_softmax(Tensor a) {
  Tape& t = tape_of("log_softmax", {a});
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double mx = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - mx);
    double lse = mx + std::log(s);
    auto o = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) o[j] = r[j] - lse;
  }
  int ia = a.id();
  return t.record("log_softmax", std::move(out), {a}, [ia](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& y = tp.value_of(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index i = 0; i < g.rows(); ++i) {
      auto gr = g.row(i);
      double gs = std::accumulate(gr.begin(), gr.end(), 0.0);
      for (Index j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) - std::exp(y(i, j)) * gs;
    }
  });
}

Tensor dropout(Tensor a, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(a.rows(), a.cols());
  for (auto& m : mask.data()) m = rng.uniform() >= rate ? keep_scale : 0.0;
  Tape& t = tape_of("dropout", {a});
  Matrix out = a.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= mask[k];
  int ia = a.id();
  return t.record("dropout", std::move(out), {a}, [ia, mask = std::move(mask)](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k] * mask[k];
  });
}

Tensor row_select(Tensor a, std::span<const Index> index) {
  Tape& t = tape_of("row_select", {a});
  const Matrix& x = a.value();
  Matrix out(static_cast<Index>(index.size()), x.cols());
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] < 0 || index[e] >= x.rows())
      throw DimensionError("row_select: index " + std::to_string(index[e]) + " out of range");
    auto src = x.row(index[e]);
    std::copy(src.begin(), src.end(), out.row(static_cast<Index>(e)).begin());
  }
  int ia = a.id();
  std::vector<Index> idx(index.begin(), index.end());
  return t.record("row_select", std::move(out), {a}, [ia, idx = std::move(idx)](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (std::size_t e = 0; e < idx.size(); ++e) {
      auto src = g.row(static_cast<Index>(e));
      auto dst = ga.row(idx[e]);
      for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
  });
}

Tensor nll_masked(Tensor log_probs, std::span<const int> labels, std::span<const Index> rows) {
  if (rows.empty()) throw DataError("nll_masked: empty mask");
  Tape& t = tape_of("nll_masked", {log_probs});
  const Matrix& lp = log_probs.value();
  if (static_cast<Index>(labels.size()) != lp.rows())
    throw DimensionError("nll_masked: labels length != rows");
  double s = 0.0;
  for (Index r : rows) s -= lp(r, labels[static_cast<std::size_t>(r)]);
  const double inv = 1.0 / static_cast<double>(rows.size());
  int il = log_probs.id();
  std::vector<Index> rs(rows.begin(), rows.end());
  std::vector<int> ls(labels.begin(), labels.end());
  return t.record("nll_masked", Matrix::scalar(s * inv), {log_probs},
                  [il, rs = std::move(rs), ls = std::move(ls), inv](Tape& tp, int self) {
                    const double g = tp.upstream(self)[0];
                    Matrix& gl = tp.grad_buffer(il);
                    for (Index r : rs) gl(r, ls[static_cast<std::size_t>(r)]) -= g * inv;
                  });
}

Tensor head_mean(Tensor a, Index heads) {
  Tape& t = tape_of("head_mean", {a});
  const Matrix& x = a.value();
  if (heads <= 0 || x.cols() % heads != 0)
    throw DimensionError("head_mean: " + std::to_string(x.cols()) + " columns not divisible into " +
                         std::to_string(heads) + " heads");
  const Index f = x.cols() / heads;
  const double inv = 1.0 / static_cast<double>(heads);
  Matrix out(x.rows(), f);
  for (Index i = 0; i < x.rows(); ++i)
    for (Index k = 0; k < heads; ++k)
      for (Index j = 0; j < f; ++j) out(i, j) += x(i, k * f + j);
  for (auto& v : out.data()) v *= inv;
  int ia = a.id();
  return t.record("head_mean", std::move(out), {a}, [ia, heads, f, inv](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& ga = tp.grad_buffer(ia);
    for (Index i = 0; i < g.rows(); ++i)
      for (Index k = 0; k < heads; ++k)
        for (Index j = 0; j < f; ++j) ga(i, k * f + j) += inv * g(i, j);
  });
}

Tensor head_dot(Tensor x, Tensor w) {
  Tape& t = tape_of("head_dot", {x, w});
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const Index heads = wv.rows(), f = wv.cols();
  if (xv.cols() != heads * f) shape_error("head_dot", xv, wv);
  Matrix out(xv.rows(), heads);
  for (Index i = 0; i < xv.rows(); ++i)
    for (Index k = 0; k < heads; ++k) {
      double s = 0.0;
      for (Index j = 0; j < f; ++j) s += xv(i, k * f + j) * wv(k, j);
      out(i, k) = s;
    }
  int ix = x.id(), iw = w.id();
  return t.record("head_dot", std::move(out), {x, w}, [ix, iw, heads, f](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& xv2 = tp.value_of(ix);
    const Matrix& wv2 = tp.value_of(iw);
    if (needs(tp, ix)) {
      Matrix& gx = tp.grad_buffer(ix);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index k = 0; k < heads; ++k)
          for (Index j = 0; j < f; ++j) gx(i, k * f + j) += g(i, k) * wv2(k, j);
    }
    if (needs(tp, iw)) {
      Matrix& gw = tp.grad_buffer(iw);
      for (Index i = 0; i < g.rows(); ++i)
        for (Index k = 0; k < heads; ++k)
          for (Index j = 0; j < f; ++j) gw(k, j) += g(i, k) * xv2(i, k * f + j);
    }
  });
}

// ---------------------------------------------------------------------------
// Sparse bridge primitives

namespace {

Tensor spmm_impl(const SparseMatrix& s, std::shared_ptr<const SparseMatrix> owner, Tensor x) {
  Tape& t = tape_of("spmm", {x});
  const Matrix& xv = x.value();
  if (s.cols() != xv.rows())
    throw DimensionError("spmm: sparse " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + " times dense " + xv.shape_string());
  Matrix out(s.rows(), xv.cols());
  for (Index r = 0; r < s.rows(); ++r) {
    auto o = out.row(r);
    for (Index k = s.row_begin(r); k < s.row_end(r); ++k) {
      const double v = s.values()[static_cast<std::size_t>(k)];
      auto src = xv.row(s.col_indices()[static_cast<std::size_t>(k)]);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += v * src[j];
    }
  }
  int ix = x.id();
  const SparseMatrix* sp = &s;
  return t.record("spmm", std::move(out), {x}, [ix, sp, owner](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (Index r = 0; r < sp->rows(); ++r) {
      auto gr = g.row(r);
      for (Index k = sp->row_begin(r); k < sp->row_end(r); ++k) {
        const double v = sp->values()[static_cast<std::size_t>(k)];
        auto dst = gx.row(sp->col_indices()[static_cast<std::size_t>(k)]);
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += v * gr[j];
      }
    }
  });
}

}  // namespace

Tensor spmm(const SparseMatrix& s, Tensor x) { return spmm_impl(s, nullptr, x); }

Tensor spmm(std::shared_ptr<const SparseMatrix> s, Tensor x) {
  const SparseMatrix& ref = *s;
  return spmm_impl(ref, std::move(s), x);
}

Tensor spmm_values(const SparseMatrix& pattern, Tensor values, Tensor x) {
  Tape& t = tape_of("spmm_values", {values, x});
  const Matrix& vv = values.value();
  const Matrix& xv = x.value();
  if (vv.rows() != pattern.nnz() || vv.cols() != 1) shape_error("spmm_values", vv, xv);
  if (pattern.cols() != xv.rows()) shape_error("spmm_values", vv, xv);
  Matrix out(pattern.rows(), xv.cols());
  for (Index r = 0; r < pattern.rows(); ++r) {
    auto o = out.row(r);
    for (Index k = pattern.row_begin(r); k < pattern.row_end(r); ++k) {
      const double v = vv[static_cast<std::size_t>(k)];
      auto src = xv.row(pattern.col_indices()[static_cast<std::size_t>(k)]);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += v * src[j];
    }
  }
  int iv = values.id(), ix = x.id();
  const SparseMatrix* sp = &pattern;
  return t.record("spmm_values", std::move(out), {values, x}, [iv, ix, sp](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& vv2 = tp.value_of(iv);
    const Matrix& xv2 = tp.value_of(ix);
    const bool gv_needed = needs(tp, iv), gx_needed = needs(tp, ix);
    for (Index r = 0; r < sp->rows(); ++r) {
      auto gr = g.row(r);
      for (Index k = sp->row_begin(r); k < sp->row_end(r); ++k) {
        const Index c = sp->col_indices()[static_cast<std::size_t>(k)];
        if (gv_needed) {
          auto src = xv2.row(c);
          double d = 0.0;
          for (std::size_t j = 0; j < gr.size(); ++j) d += gr[j] * src[j];
          tp.grad_buffer(iv)[static_cast<std::size_t>(k)] += d;
        }
        if (gx_needed) {
          const double v = vv2[static_cast<std::size_t>(k)];
          auto dst = tp.grad_buffer(ix).row(c);
          for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += v * gr[j];
        }
      }
    }
  });
}

Tensor segment_softmax(const SparseMatrix& pattern, Tensor logits) {
  Tape& t = tape_of("segment_softmax", {logits});
  const Matrix& x = logits.value();
  if (x.rows() != pattern.nnz())
    throw DimensionError("segment_softmax: " + std::to_string(x.rows()) + " logits for " +
                         std::to_string(pattern.nnz()) + " stored entries");
  const Index heads = x.cols();
  Matrix out(x.rows(), heads);
  for (Index r = 0; r < pattern.rows(); ++r) {
    const Index b = pattern.row_begin(r), e = pattern.row_end(r);
    if (b == e) continue;
    for (Index k = 0; k < heads; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Index p = b; p < e; ++p) mx = std::max(mx, x(p, k));
      double s = 0.0;
      for (Index p = b; p < e; ++p) {
        out(p, k) = std::exp(x(p, k) - mx);
        s += out(p, k);
      }
      for (Index p = b; p < e; ++p) out(p, k) /= s;
    }
  }
  int ix = logits.id();
  const SparseMatrix* sp = &pattern;
  return t.record("segment_softmax", std::move(out), {logits}, [ix, sp](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& y = tp.value_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (Index r = 0; r < sp->rows(); ++r) {
      const Index b = sp->row_begin(r), e = sp->row_end(r);
      for (Index k = 0; k < y.cols(); ++k) {
        double dot = 0.0;
        for (Index p = b; p < e; ++p) dot += g(p, k) * y(p, k);
        for (Index p = b; p < e; ++p) gx(p, k) += y(p, k) * (g(p, k) - dot);
      }
    }
  });
}

Tensor segment_sum(const SparseMatrix& pattern, Tensor edge_values) {
  Tape& t = tape_of("segment_sum", {edge_values});
  const Matrix& x = edge_values.value();
  if (x.rows() != pattern.nnz())
    throw DimensionError("segment_sum: " + std::to_string(x.rows()) + " rows for " +
                         std::to_string(pattern.nnz()) + " stored entries");
  Matrix out(pattern.rows(), x.cols());
  for (Index r = 0; r < pattern.rows(); ++r) {
    auto o = out.row(r);
    for (Index p = pattern.row_begin(r); p < pattern.row_end(r); ++p) {
      auto src = x.row(p);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += src[j];
    }
  }
  int ix = edge_values.id();
  const SparseMatrix* sp = &pattern;
  return t.record("segment_sum", std::move(out), {edge_values}, [ix, sp](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (Index r = 0; r < sp->rows(); ++r) {
      auto gr = g.row(r);
      for (Index p = sp->row_begin(r); p < sp->row_end(r); ++p) {
        auto dst = gx.row(p);
        for (std::size_t j = 0; j < gr.size(); ++j) dst[j] += gr[j];
      }
    }
  });
}

Tensor edge_aggregate(const SparseMatrix& pattern, Tensor weights, Tensor x) {
  Tape& t = tape_of("edge_aggregate", {weights, x});
  const Matrix& w = weights.value();
  const Matrix& xv = x.value();
  const Index heads = w.cols();
  if (w.rows() != pattern.nnz() || heads == 0 || xv.cols() % heads != 0 ||
      xv.rows() != pattern.cols())
    shape_error("edge_aggregate", w, xv);
  const Index f = xv.cols() / heads;
  Matrix out(pattern.rows(), xv.cols());
  for (Index r = 0; r < pattern.rows(); ++r) {
    for (Index p = pattern.row_begin(r); p < pattern.row_end(r); ++p) {
      const Index c = pattern.col_indices()[static_cast<std::size_t>(p)];
      for (Index k = 0; k < heads; ++k) {
        const double a = w(p, k);
        for (Index j = 0; j < f; ++j) out(r, k * f + j) += a * xv(c, k * f + j);
      }
    }
  }
  int iw = weights.id(), ix = x.id();
  const SparseMatrix* sp = &pattern;
  return t.record("edge_aggregate", std::move(out), {weights, x},
                  [iw, ix, sp, heads, f](Tape& tp, int self) {
                    const Matrix& g = tp.upstream(self);
                    const Matrix& w2 = tp.value_of(iw);
                    const Matrix& x2 = tp.value_of(ix);
                    const bool gw_needed = needs(tp, iw), gx_needed = needs(tp, ix);
                    for (Index r = 0; r < sp->rows(); ++r) {
                      for (Index p = sp->row_begin(r); p < sp->row_end(r); ++p) {
                        const Index c = sp->col_indices()[static_cast<std::size_t>(p)];
                        for (Index k = 0; k < heads; ++k) {
                          if (gw_needed) {
                            double d = 0.0;
                            for (Index j = 0; j < f; ++j) d += g(r, k * f + j) * x2(c, k * f + j);
                            tp.grad_buffer(iw)(p, k) += d;
                          }
                          if (gx_needed) {
                            const double a = w2(p, k);
                            Matrix& gx = tp.grad_buffer(ix);
                            for (Index j = 0; j < f; ++j) gx(c, k * f + j) += a * g(r, k * f + j);
                          }
                        }
                      }
                    }
                  });
}

Tensor sparse_dots(const DotPlan& plan, Tensor values) {
  Tape& t = tape_of("sparse_dots", {values});
  const Matrix& v = values.value();
  if (v.cols() != 1) throw DimensionError("sparse_dots: values must be a column, got " + v.shape_string());
  const auto outputs = static_cast<Index>(plan.offsets.size()) - 1;
  Matrix out(outputs, 1);
  for (Index o = 0; o < outputs; ++o) {
    double s = 0.0;
    for (Index q = plan.offsets[static_cast<std::size_t>(o)]; q < plan.offsets[static_cast<std::size_t>(o) + 1]; ++q)
      s += v[static_cast<std::size_t>(plan.left[static_cast<std::size_t>(q)])] *
           v[static_cast<std::size_t>(plan.right[static_cast<std::size_t>(q)])];
    out[static_cast<std::size_t>(o)] = s;
  }
  int iv = values.id();
  const DotPlan* pp = &plan;
  return t.record("sparse_dots", std::move(out), {values}, [iv, pp](Tape& tp, int self) {
    const Matrix& g = tp.upstream(self);
    const Matrix& v2 = tp.value_of(iv);
    Matrix& gv = tp.grad_buffer(iv);
    for (std::size_t o = 0; o + 1 < pp->offsets.size(); ++o) {
      for (Index q = pp->offsets[o]; q < pp->offsets[o + 1]; ++q) {
        auto l = static_cast<std::size_t>(pp->left[static_cast<std::size_t>(q)]);
        auto r = static_cast<std::size_t>(pp->right[static_cast<std::size_t>(q)]);
        gv[l] += g[o] * v2[r];
        gv[r] += g[o] * v2[l];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckResult grad_check(const LossBuilder& loss_fn, ParamStore& params, double epsilon) {
  params.zero_grad();
  {
    Tape tape;
    Tensor loss = loss_fn(tape, params);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    return loss_fn(tape, params).item();
  };
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& entry = params[p];
    for (std::size_t k = 0; k < entry.value.size(); ++k) {
      const double original = entry.value[k];
      entry.value[k] = original + epsilon;
      const double up = eval();
      entry.value[k] = original - epsilon;
      const double down = eval();
      entry.value[k] = original;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericalError("grad_check: non-finite loss when perturbing " + entry.name + "[" +
                             std::to_string(k) + "]");
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = entry.grad[k];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (result.checked == 1 || rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = entry.name;
        result.worst_index = k;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace nogat::ad
