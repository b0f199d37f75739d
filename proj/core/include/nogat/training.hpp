#pragma once

#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "nogat/attention.hpp"
#include "nogat/autodiff.hpp"
#include "nogat/config.hpp"
#include "nogat/graph.hpp"

namespace nogat {

/// Mean NLL over `rows` plus lambda * sum of squared entries of every
/// registered parameter. Throws DataError for an empty row set.
ad::Tensor loss(ad::Tape& tape, ad::Tensor log_probs, std::span<const int> labels,
                std::span<const Index> rows, ad::ParamStore& params, double lambda);

struct AdamSettings {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update at step t (1-based). Frozen parameters are
/// skipped. Throws NumericalError naming the first parameter with a
/// non-finite gradient, before anything is modified.
void adam_step(ad::ParamStore& params, const AdamSettings& settings, int t);

/// Fraction of `rows` whose arg-max (lowest class on ties) equals the label.
double accuracy(const Matrix& log_probs, std::span<const int> labels, std::span<const Index> rows);

/// Tracks the best epoch (first maximum of validation accuracy) and asks to
/// stop once `patience` consecutive epochs improve neither validation
/// accuracy nor validation loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Feeds one epoch; returns true when training should stop.
  bool update(int epoch, double val_acc, double val_loss);

  bool improved_accuracy() const { return improved_acc_; }
  int best_epoch() const { return best_epoch_; }
  double best_accuracy() const { return best_acc_; }

 private:
  int patience_;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_acc_ = -1.0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  bool improved_acc_ = false;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainReport {
  ModelConfig config;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHooks {
  /// Called after each optimizer step with the training-mode forward pass.
  std::function<void(int epoch, const ForwardResult& forward, const GraphContext& ctx)> on_epoch;
  /// Receives the restored best-validation parameters.
  ad::ParamStore* best_params = nullptr;
};

/// Full-graph training with Adam and early stopping on validation accuracy.
/// The graph must carry masks. Deterministic given config.seed.
/// Throws NumericalError with the epoch number if the loss turns non-finite.
TrainReport train(const Graph& graph, const ModelConfig& config, const TrainHooks& hooks = {});

/// Eval-mode accuracy of `params` on `mask`. Throws DataError for an empty mask.
double evaluate(const Graph& graph, const ad::ParamStore& params, const ModelConfig& config,
                const Mask& mask);

/// Builds the model for `graph` and registers fresh parameters in `store`.
NoGatModel build_model(const Graph& graph, const ModelConfig& config, ad::ParamStore& store);

}  // namespace nogat
