#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhanet/csp.hpp"
#include "mhanet/data.hpp"
#include "mhanet/model.hpp"

namespace mhanet {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 15;
  double lr = 5e-3;
  double weight_decay = 3e-4;
  std::uint64_t seed = 1;
  Ablation ablation;
  ModelConfig model;

  void validate() const;
};

/// Decoupled-weight-decay Adam hyperparameters.
struct AdamWOptions {
  double lr = 5e-3;
  double weight_decay = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter tensor (kept in 64-bit) and the
/// shared step counter.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

template <typename T>
struct ParamSlot {
  BasicTensor<T> tensor;
  bool decay = true;
};

/// One AdamW update of every slot from its accumulated gradient:
/// theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta), the decay term
/// only for slots with decay set. A slot without a gradient is a usage error.
template <typename T>
void optimizer_step(std::span<ParamSlot<T>> slots, OptimizerState& state,
                    const AdamWOptions& options);

/// Stops after `patience` consecutive epochs without a new strict minimum.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records one epoch's validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  std::size_t epochs() const { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
  double best_ = 0.0;
  bool improved_ = false;
};

/// CSP-projected windows ready for the network: inputs [N,C,1,T].
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

Dataset project_windows(const CSPModel& csp, const WindowSet& set);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Eval-mode loss and accuracy; argmax ties resolve to class 0. Neither the
/// parameters nor the batch-norm statistics change.
EvalResult evaluate(const ModelParams<float>& params, const Dataset& data);

/// Class predictions in eval mode.
std::vector<int> predict(const ModelParams<float>& params, const Dataset& data);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainReport {
  std::string subject_id;
  std::string ablation;
  std::vector<EpochMetrics> epochs;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  std::size_t param_count = 0;

  nlohmann::json to_json() const;
  /// Columns: epoch,train_loss,train_acc,val_loss,val_acc
  std::string metrics_csv() const;
};

struct TrainResult {
  TrainReport report;
  ModelParams<float> params;  // restored from the best validation epoch
};

/// Seeded mini-batch training with early stopping on validation loss.
/// `on_epoch`, when set, observes each finished epoch.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const Dataset& test_set,
                  const TrainConfig& config,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace mhanet
