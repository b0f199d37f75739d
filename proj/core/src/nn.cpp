#include "nogat/nn.hpp"

#include <cmath>

#include "nogat/error.hpp"

namespace nogat {

Matrix glorot_uniform(Index rows, Index cols, Index fan_in, Index fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

Mlp::Mlp(ad::ParamStore& store, const std::string& prefix, std::vector<Index> dims, Rng& rng)
    : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw ConfigError(prefix + ": an MLP needs at least input and output widths");
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    const Index in = dims_[k], out = dims_[k + 1];
    if (in <= 0 || out <= 0) throw ConfigError(prefix + ": MLP widths must be positive");
    const std::string base = prefix + "." + std::to_string(k);
    weights_.push_back(store.add(base + ".weight", glorot_uniform(in, out, in, out, rng)));
    biases_.push_back(store.add(base + ".bias", Matrix(1, out)));
  }
}

ad::Tensor Mlp::forward(ad::Tape& tape, ad::ParamStore& store, ad::Tensor x) const {
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    x = ad::add_row(ad::matmul(x, tape.param(store, weights_[k])), tape.param(store, biases_[k]));
    if (k + 1 < weights_.size()) x = ad::relu(x);
  }
  return x;
}

}  // namespace nogat
