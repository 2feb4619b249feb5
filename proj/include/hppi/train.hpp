#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "hppi/graph.hpp"

namespace hppi {

struct TrainConfig {
  double learning_rate = 0.0001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  std::size_t stopped_epoch = 0;  // 1-based epoch count actually run
};

struct AdamConfig {
  double learning_rate = 0.0001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m;
  Tensor v;
};

// One standard Adam update with bias correction; t is the 1-based step count.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state, int t,
               const AdamConfig& config);

// Mini-batch training with early stopping on validation loss; the best-
// validation-loss weights are restored before returning. Deterministic for
// a fixed seed.
TrainHistory train_model(ModelGraph& graph, std::span<const GraphSample> train_set,
                         std::span<const GraphSample> val_set, const TrainConfig& config);

// Trains only the dense head (and anything after it): every other layer is
// frozen for the duration and restored afterwards. Used to recalibrate the
// first-layer head after the stationary classifier has fine-tuned their
// shared backbone.
TrainHistory train_head_only(ModelGraph& graph, std::span<const GraphSample> train_set,
                             std::span<const GraphSample> val_set,
                             const TrainConfig& config);

// The stationary classifier shares backbone tensors with the first layer, so
// its training drifts them. Schedule: fine-tune the stationary model at a
// tenth of the base learning rate, then recalibrate the first-layer head on
// the updated features.
inline constexpr double kSharedBackboneLrScale = 0.1;

struct SharedBackboneHistories {
  TrainHistory stationary;
  TrainHistory head_recalibration;
};

SharedBackboneHistories train_stationary_shared(
    ModelGraph& first_layer, ModelGraph& stationary,
    std::span<const GraphSample> coarse_train, std::span<const GraphSample> coarse_val,
    std::span<const GraphSample> b_train, std::span<const GraphSample> b_val,
    const TrainConfig& config);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true][predicted]
};

EvalResult evaluate(const ModelGraph& graph, std::span<const GraphSample> dataset);

// Mean cross-entropy over a dataset, inference mode.
double mean_loss(const ModelGraph& graph, std::span<const GraphSample> dataset);

// History CSV: `epoch,train_loss,val_loss,val_acc`.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace hppi
