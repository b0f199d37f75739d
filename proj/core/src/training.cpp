#include "nogat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "nogat/error.hpp"

namespace nogat {

ad::Tensor loss(ad::Tape& tape, ad::Tensor log_probs, std::span<const int> labels,
                std::span<const Index> rows, ad::ParamStore& params, double lambda) {
  if (rows.empty()) throw DataError("loss: empty mask");
  ad::Tensor total = ad::nll_masked(log_probs, labels, rows);
  if (lambda == 0.0 || params.size() == 0) return total;
  ad::Tensor reg;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor sq = ad::sum_squares(tape.param(params, i));
    reg = reg.valid() ? ad::add(reg, sq) : sq;
  }
  return ad::add(total, ad::scale(reg, lambda));
}

void adam_step(ad::ParamStore& params, const AdamSettings& s, int t) {
  for (const auto& e : params)
    for (double g : e.grad.data())
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + e.name);
  const double c1 = 1.0 - std::pow(s.beta1, t);
  const double c2 = 1.0 - std::pow(s.beta2, t);
  for (auto& e : params) {
    if (e.frozen) continue;
    for (std::size_t k = 0; k < e.value.size(); ++k) {
      const double g = e.grad[k];
      e.first_moment[k] = s.beta1 * e.first_moment[k] + (1.0 - s.beta1) * g;
      e.second_moment[k] = s.beta2 * e.second_moment[k] + (1.0 - s.beta2) * g * g;
      const double m_hat = e.first_moment[k] / c1;
      const double v_hat = e.second_moment[k] / c2;
      e.value[k] -= s.lr * m_hat / (std::sqrt(v_hat) + s.eps);
    }
  }
}

double accuracy(const Matrix& log_probs, std::span<const int> labels, std::span<const Index> rows) {
  if (rows.empty()) throw DataError("accuracy: empty mask");
  std::size_t correct = 0;
  for (Index r : rows) {
    auto row = log_probs.row(r);
    Index best = 0;
    for (Index c = 1; c < log_probs.cols(); ++c)
      if (row[static_cast<std::size_t>(c)] > row[static_cast<std::size_t>(best)]) best = c;
    if (best == labels[static_cast<std::size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows.size());
}

bool EarlyStopping::update(int epoch, double val_acc, double val_loss) {
  improved_acc_ = val_acc > best_acc_;
  const bool improved_loss = val_loss < best_loss_;
  if (improved_acc_) {
    best_acc_ = val_acc;
    best_epoch_ = epoch;
  }
  if (improved_loss) best_loss_ = val_loss;
  if (improved_acc_ || improved_loss) {
    stale_ = 0;
    return false;
  }
  return ++stale_ >= patience_;
}

NoGatModel build_model(const Graph& graph, const ModelConfig& config, ad::ParamStore& store) {
  Rng init_rng = Rng::derive(config.seed, 1);
  return NoGatModel(config.model_spec(), graph.num_features(), graph.num_classes, store, init_rng);
}

namespace {

double mean_nll(const Matrix& log_probs, std::span<const int> labels, std::span<const Index> rows) {
  double s = 0.0;
  for (Index r : rows) s -= log_probs(r, labels[static_cast<std::size_t>(r)]);
  return s / static_cast<double>(rows.size());
}

}  // namespace

TrainReport train(const Graph& graph, const ModelConfig& config, const TrainHooks& hooks) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto train_rows = mask_indices(graph.train_mask);
  const auto val_rows = mask_indices(graph.val_mask);
  const auto test_rows = mask_indices(graph.test_mask);
  if (train_rows.empty() || val_rows.empty() || test_rows.empty())
    throw DataError("train: graph needs non-empty train, val and test masks");

  ad::ParamStore params;
  NoGatModel model = build_model(graph, config, params);
  GraphContext ctx = make_context(graph, model.spec(), config.normalize_features);
  Rng dropout_rng = Rng::derive(config.seed, 2);
  const AdamSettings adam{config.lr, config.beta1, config.beta2, config.adam_eps};

  TrainReport report;
  report.config = config;
  ad::ParamStore best = params;
  EarlyStopping stopper(config.patience);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    {
      ad::Tape tape;
      ForwardResult fwd = model.forward(tape, params, ctx, true, dropout_rng);
      ad::Tensor l = loss(tape, fwd.log_probs, graph.labels, train_rows, params, config.lambda);
      rec.train_loss = l.item();
      if (!std::isfinite(rec.train_loss))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             " (non-finite loss)");
      params.zero_grad();
      tape.backward(l);
      try {
        adam_step(params, adam, epoch);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if (hooks.on_epoch) hooks.on_epoch(epoch, fwd, ctx);
    }
    {
      ad::Tape tape;
      ForwardResult fwd = model.forward(tape, params, ctx, false, dropout_rng);
      const Matrix& lp = fwd.log_probs.value();
      rec.train_acc = accuracy(lp, graph.labels, train_rows);
      rec.val_acc = accuracy(lp, graph.labels, val_rows);
      rec.val_loss = mean_nll(lp, graph.labels, val_rows);
      if (!std::isfinite(rec.val_loss))
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) +
                             " (non-finite validation loss)");
    }
    report.epochs.push_back(rec);

    const bool stop = stopper.update(epoch, rec.val_acc, rec.val_loss);
    if (stopper.improved_accuracy()) best = params;
    if (stop) break;
  }
  report.best_epoch = stopper.best_epoch();
  report.best_val_acc = stopper.best_accuracy();

  {
    ad::Tape tape;
    ForwardResult fwd = model.forward(tape, best, ctx, false, dropout_rng);
    report.test_acc = accuracy(fwd.log_probs.value(), graph.labels, test_rows);
  }
  if (hooks.best_params) *hooks.best_params = best;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double evaluate(const Graph& graph, const ad::ParamStore& params, const ModelConfig& config,
                const Mask& mask) {
  const auto rows = mask_indices(mask);
  if (rows.empty()) throw DataError("evaluate: empty mask");
  ad::ParamStore fresh;
  NoGatModel model = build_model(graph, config, fresh);
  for (auto& e : fresh) {
    const auto& src = params.at(e.name);
    if (!src.value.same_shape(e.value))
      throw DimensionError("evaluate: parameter " + e.name + " has shape " +
                           src.value.shape_string() + ", model expects " + e.value.shape_string());
    e.value = src.value;
  }
  GraphContext ctx = make_context(graph, model.spec(), config.normalize_features);
  Rng unused(0);
  ad::Tape tape;
  ForwardResult fwd = model.forward(tape, fresh, ctx, false, unused);
  return accuracy(fwd.log_probs.value(), graph.labels, rows);
}

}  // namespace nogat
