#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hppi/kernels.hpp"
#include "hppi/tensor.hpp"

namespace hppi {

enum class LayerType : std::uint8_t {
  Input = 0,
  Conv2d,
  BatchNorm,
  Relu,
  MaxPool,
  GapFrames,
  Gap,
  Lstm,
  Concat,
  Eca,
  Reshape,
  Dsc,
  Dense,
  Softmax,
  SimplexNorm,
};

// Which tensor of a GraphSample an Input layer reads.
enum class InputSlot : std::uint8_t { Fft = 0, Wt = 1, Gt = 2, Vec = 3 };
inline constexpr std::size_t kNumSlots = 4;

struct LayerSpec {
  LayerType type = LayerType::Input;
  std::string name;
  std::vector<int> inputs;  // producer node ids; empty for Input layers

  InputSlot slot = InputSlot::Fft;   // Input
  std::vector<std::size_t> shape;    // Input declared shape / Reshape target
  int kernel = 0;                    // conv / dsc / maxpool / eca kernel size
  int stride = 1;                    // conv / maxpool
  kernels::Padding padding = kernels::Padding::Same;
  std::size_t in_width = 0;          // conv/dsc Cin, dense n, lstm F, bn/eca C
  std::size_t out_width = 0;         // conv/dsc Cout, dense m, lstm H
  double eps = 1e-5;                 // batch norm
  double momentum = 0.9;             // batch norm running-average momentum
  bool trainable = true;             // frozen layers run inference-mode only
};

struct Param {
  std::string name;
  std::shared_ptr<Tensor> value;
  bool trainable = true;
};

struct Node {
  LayerSpec spec;
  std::vector<Param> params;
  std::vector<std::size_t> out_shape;
};

// One example presented to a graph. Image models read the fft/wt/gt slots;
// the attribution regressor reads the vec slot. `label` is the class index
// for cross-entropy, `target` the regression target for MSE.
struct GraphSample {
  std::array<Tensor, kNumSlots> slots;
  int label = -1;
  Tensor target;
};

struct NodeCache {
  kernels::LstmCache lstm;         // Lstm
  std::vector<std::size_t> argmax; // MaxPool
  Tensor aux;                      // Eca: weights; Dsc: depthwise stage output
};

struct Activations {
  std::vector<Tensor> out;
  std::vector<NodeCache> cache;
};

// Per-batch batch-norm statistics captured during a training forward pass.
struct BnBatchStat {
  Tensor mean;
  Tensor var;
  bool batch_mode = false;
};

struct BatchContext {
  std::vector<BnBatchStat> bn;  // indexed by node id
};

enum class Loss : std::uint8_t { SoftmaxCrossEntropy = 0, MeanSquaredError = 1 };

struct GraphGrads {
  std::vector<std::vector<Tensor>> param;   // [node][param], batch-sum
  std::array<Tensor, kNumSlots> input;      // grads w.r.t. graph inputs, batch-sum
};

struct ModelGraph {
  std::string name;
  std::vector<Node> nodes;
  bool from_quantized = false;

  // Appends a layer, allocating zero-filled parameters and inferring the
  // output shape. Returns the new node id.
  int add(LayerSpec spec);

  int find(std::string_view layer_name) const;  // -1 when absent
  int output_node() const { return static_cast<int>(nodes.size()) - 1; }
  std::size_t num_classes() const;
  std::vector<InputSlot> input_slots() const;
};

// Deterministic weight initialization: fan-in uniform for conv/dense/DSC and
// LSTM input weights, orthogonal LSTM recurrent weights, zero biases with
// forget-gate bias 1, batch-norm gamma/var 1. When only_node >= 0, just that
// node is initialized.
void init_weights(ModelGraph& graph, std::uint64_t seed, int only_node = -1);

// Inference forward for one sample (batch norm uses running statistics).
// Returns the output of the final node.
Tensor forward(const ModelGraph& graph, const GraphSample& sample,
               Activations* acts = nullptr);

// Batch forward. In training mode, trainable batch-norm layers normalize
// with per-batch statistics; running averages are updated only when
// update_running is set (finite-difference probes must leave state intact).
void forward_batch(const ModelGraph& graph, std::span<const GraphSample> batch,
                   bool training, std::vector<Activations>& acts, BatchContext& ctx,
                   bool update_running = false);

// Per-sample loss of a completed forward pass.
double sample_loss(const Tensor& output, const GraphSample& sample, Loss loss);

// Batch-sum loss and analytic gradients for every trainable parameter.
// Throws if the loss is non-finite.
double graph_backward(const ModelGraph& graph, std::span<const GraphSample> batch,
                      Loss loss, GraphGrads& grads, bool training = true,
                      bool update_running = false);

// Gradient of ||activation of `node_id`||_2 with respect to the graph inputs
// for a single sample, inference mode. Zero activation yields zero gradients.
std::array<Tensor, kNumSlots> input_gradients_of_l2(const ModelGraph& graph,
                                                    const GraphSample& sample,
                                                    int node_id);

// Max relative error between analytic and central-finite-difference gradients
// over every trainable parameter. `h` must be positive.
double finite_diff_check(ModelGraph& graph, std::span<const GraphSample> batch,
                         Loss loss, double h);

// Relative error with max(|a|, |b|, 1e-8) denominator; symmetric.
double relative_error(double a, double b);

// Adaptive ECA kernel size: nearest odd to |log2(C)/2 + 1/2|.
int eca_kernel_size(std::size_t channels);

}  // namespace hppi
