#pragma once

#include <string>
#include <vector>

#include "nogat/autodiff.hpp"

namespace nogat {

/// Glorot/Xavier uniform: U(-b, b), b = sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Index rows, Index cols, Index fan_in, Index fan_out, Rng& rng);

/// Fully connected stack with ReLU between layers (none after the last).
/// Weights are stored `<prefix>.<k>.weight` (in x out) and `<prefix>.<k>.bias` (1 x out).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ad::ParamStore& store, const std::string& prefix, std::vector<Index> dims, Rng& rng);

  ad::Tensor forward(ad::Tape& tape, ad::ParamStore& store, ad::Tensor x) const;

  const std::vector<Index>& dims() const { return dims_; }
  std::size_t weight_index(std::size_t layer) const { return weights_[layer]; }
  std::size_t bias_index(std::size_t layer) const { return biases_[layer]; }
  std::size_t depth() const { return weights_.size(); }

 private:
  std::vector<Index> dims_;
  std::vector<std::size_t> weights_;
  std::vector<std::size_t> biases_;
};

}  // namespace nogat
