#include "hppi/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace hppi {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be > 0");
  if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be > 0");
  if (early_stop_patience == 0) throw std::invalid_argument("train: patience must be > 0");
  if (early_stop_patience > max_epochs)
    throw std::invalid_argument("train: patience must not exceed max_epochs");
}

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, int t,
               const AdamConfig& config) {
  if (!params.same_shape(grads))
    throw std::invalid_argument("adam_step: parameter/gradient shape mismatch");
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (state.m.numel() == 0) {
    state.m = Tensor(params.shape);
    state.v = Tensor(params.shape);
  }
  if (!state.m.same_shape(params))
    throw std::invalid_argument("adam_step: state shape mismatch");

  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.numel(); ++i) {
    const double g = grads.data[i];
    state.m.data[i] = config.beta1 * state.m.data[i] + (1.0 - config.beta1) * g;
    state.v.data[i] = config.beta2 * state.v.data[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = state.m.data[i] / bc1;
    const double v_hat = state.v.data[i] / bc2;
    params.data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

namespace {

std::vector<std::vector<double>> snapshot_params(const ModelGraph& g) {
  std::vector<std::vector<double>> snap;
  for (const Node& n : g.nodes)
    for (const Param& p : n.params) snap.push_back(p.value->data);
  return snap;
}

void restore_params(ModelGraph& g, const std::vector<std::vector<double>>& snap) {
  std::size_t i = 0;
  for (Node& n : g.nodes)
    for (Param& p : n.params) p.value->data = snap[i++];
}

}  // namespace

double mean_loss(const ModelGraph& graph, std::span<const GraphSample> dataset) {
  if (dataset.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  double total = 0.0;
  for (const GraphSample& s : dataset)
    total += sample_loss(forward(graph, s), s, Loss::SoftmaxCrossEntropy);
  return total / static_cast<double>(dataset.size());
}

TrainHistory train_model(ModelGraph& graph, std::span<const GraphSample> train_set,
                         std::span<const GraphSample> val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty())
    throw std::invalid_argument("train_model: empty split");

  AdamConfig adam{.learning_rate = config.learning_rate};
  std::vector<std::vector<AdamState>> states(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    states[i].resize(graph.nodes[i].params.size());

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainHistory history;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snapshot = snapshot_params(graph);
  std::size_t epochs_without_improvement = 0;
  int step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(config.seed * 0x9E3779B97F4A7C15ull + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    std::vector<GraphSample> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[order[i]]);

      GraphGrads grads;
      epoch_loss += graph_backward(graph, batch, Loss::SoftmaxCrossEntropy, grads,
                                   /*training=*/true, /*update_running=*/true);
      ++step;
      const double inv_batch = 1.0 / static_cast<double>(batch.size());
      for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        if (!graph.nodes[i].spec.trainable) continue;
        for (std::size_t p = 0; p < graph.nodes[i].params.size(); ++p) {
          if (!graph.nodes[i].params[p].trainable) continue;
          Tensor& g = grads.param[i][p];
          for (double& v : g.data) v *= inv_batch;  // batch-mean gradient
          adam_step(*graph.nodes[i].params[p].value, g, states[i][p], step, adam);
        }
      }
    }

    const EvalResult val = evaluate(graph, val_set);
    const double vloss = mean_loss(graph, val_set);
    history.train_loss.push_back(epoch_loss / static_cast<double>(train_set.size()));
    history.val_loss.push_back(vloss);
    history.val_acc.push_back(val.accuracy);
    history.stopped_epoch = epoch;

    if (vloss < best_val) {
      best_val = vloss;
      best_snapshot = snapshot_params(graph);
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement >= config.early_stop_patience) break;
    }
  }

  restore_params(graph, best_snapshot);
  return history;
}

TrainHistory train_head_only(ModelGraph& graph, std::span<const GraphSample> train_set,
                             std::span<const GraphSample> val_set,
                             const TrainConfig& config) {
  const int head = graph.find("head");
  if (head < 0) throw std::invalid_argument("train_head_only: graph has no head layer");
  std::vector<bool> saved(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    saved[i] = graph.nodes[i].spec.trainable;
    if (static_cast<int>(i) < head) graph.nodes[i].spec.trainable = false;
  }
  TrainHistory history;
  try {
    history = train_model(graph, train_set, val_set, config);
  } catch (...) {
    for (std::size_t i = 0; i < graph.nodes.size(); ++i)
      graph.nodes[i].spec.trainable = saved[i];
    throw;
  }
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    graph.nodes[i].spec.trainable = saved[i];
  return history;
}

SharedBackboneHistories train_stationary_shared(
    ModelGraph& first_layer, ModelGraph& stationary,
    std::span<const GraphSample> coarse_train, std::span<const GraphSample> coarse_val,
    std::span<const GraphSample> b_train, std::span<const GraphSample> b_val,
    const TrainConfig& config) {
  SharedBackboneHistories histories;
  TrainConfig fine_tune = config;
  fine_tune.learning_rate = config.learning_rate * kSharedBackboneLrScale;
  histories.stationary = train_model(stationary, b_train, b_val, fine_tune);
  histories.head_recalibration =
      train_head_only(first_layer, coarse_train, coarse_val, config);
  return histories;
}

EvalResult evaluate(const ModelGraph& graph, std::span<const GraphSample> dataset) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::size_t k = graph.num_classes();
  EvalResult result;
  result.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  std::int64_t correct = 0;
  for (const GraphSample& s : dataset) {
    const Tensor out = forward(graph, s);
    const std::size_t pred = static_cast<std::size_t>(std::distance(
        out.data.begin(), std::max_element(out.data.begin(), out.data.end())));
    const std::size_t truth = static_cast<std::size_t>(s.label);
    if (truth >= k) throw std::invalid_argument("evaluate: label out of range");
    result.confusion[truth][pred]++;
    if (pred == truth) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return result;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "epoch,train_loss,val_loss,val_acc\n";
  out.precision(12);
  for (std::size_t i = 0; i < history.train_loss.size(); ++i)
    out << (i + 1) << ',' << history.train_loss[i] << ',' << history.val_loss[i] << ','
        << history.val_acc[i] << '\n';
}

}  // namespace hppi
