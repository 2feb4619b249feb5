#include "hppi/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace hppi {

namespace {

using kernels::Padding;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::shared_ptr<Tensor> make_param(std::vector<std::size_t> shape) {
  return std::make_shared<Tensor>(std::move(shape));
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t s, Padding p) {
  if (p == Padding::Same) return (in + s - 1) / s;
  return (in - k) / s + 1;
}

}  // namespace

int ModelGraph::find(std::string_view layer_name) const {
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].spec.name == layer_name) return static_cast<int>(i);
  return -1;
}

std::size_t ModelGraph::num_classes() const {
  if (nodes.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t d : nodes.back().out_shape) n *= d;
  return n;
}

std::vector<InputSlot> ModelGraph::input_slots() const {
  std::vector<InputSlot> slots;
  for (const Node& n : nodes)
    if (n.spec.type == LayerType::Input) slots.push_back(n.spec.slot);
  return slots;
}

int ModelGraph::add(LayerSpec spec) {
  require(find(spec.name) < 0, "graph: duplicate layer name " + spec.name);
  for (int p : spec.inputs)
    require(p >= 0 && p < static_cast<int>(nodes.size()),
            "graph: bad producer id in " + spec.name);

  Node node;
  const auto in_shape = [&](std::size_t i) -> const std::vector<std::size_t>& {
    return nodes[spec.inputs.at(i)].out_shape;
  };

  switch (spec.type) {
    case LayerType::Input:
      require(spec.inputs.empty(), "input layer takes no producers");
      require(!spec.shape.empty(), "input layer needs a declared shape");
      node.out_shape = spec.shape;
      break;
    case LayerType::Conv2d: {
      require(spec.inputs.size() == 1, "conv2d takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 3 && in[2] == spec.in_width, "conv2d: input shape mismatch");
      const std::size_t k = static_cast<std::size_t>(spec.kernel);
      require(k % 2 == 1, "conv2d: kernel must be odd");
      node.out_shape = {conv_out_dim(in[0], k, spec.stride, spec.padding),
                        conv_out_dim(in[1], k, spec.stride, spec.padding), spec.out_width};
      node.params.push_back({"w", make_param({k, k, spec.in_width, spec.out_width}), true});
      node.params.push_back({"b", make_param({spec.out_width}), true});
      break;
    }
    case LayerType::BatchNorm: {
      require(spec.inputs.size() == 1, "batchnorm takes one producer");
      const auto& in = in_shape(0);
      require(!in.empty() && in.back() == spec.in_width, "batchnorm: channel mismatch");
      node.out_shape = in;
      node.params.push_back({"gamma", make_param({spec.in_width}), true});
      node.params.push_back({"beta", make_param({spec.in_width}), true});
      node.params.push_back({"running_mean", make_param({spec.in_width}), false});
      node.params.push_back({"running_var", make_param({spec.in_width}), false});
      break;
    }
    case LayerType::Relu:
      require(spec.inputs.size() == 1, "relu takes one producer");
      node.out_shape = in_shape(0);
      break;
    case LayerType::MaxPool: {
      require(spec.inputs.size() == 1, "maxpool takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 3, "maxpool: input must be HxWxC");
      const std::size_t p = static_cast<std::size_t>(spec.kernel);
      const std::size_t s = static_cast<std::size_t>(spec.stride);
      require(in[0] >= p && in[1] >= p, "maxpool: input smaller than window");
      node.out_shape = {(in[0] - p) / s + 1, (in[1] - p) / s + 1, in[2]};
      break;
    }
    case LayerType::GapFrames: {
      require(spec.inputs.size() == 1, "gap_frames takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 3, "gap_frames: input must be HxWxC");
      node.out_shape = {in[0], in[2]};
      break;
    }
    case LayerType::Gap: {
      require(spec.inputs.size() == 1, "gap takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 3, "gap: input must be HxWxC");
      node.out_shape = {in[2]};
      break;
    }
    case LayerType::Lstm: {
      require(spec.inputs.size() == 1, "lstm takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 2 && in[1] == spec.in_width, "lstm: input must be TxF");
      node.out_shape = {spec.out_width};
      node.params.push_back({"wx", make_param({spec.in_width, 4 * spec.out_width}), true});
      node.params.push_back({"wh", make_param({spec.out_width, 4 * spec.out_width}), true});
      node.params.push_back({"b", make_param({4 * spec.out_width}), true});
      break;
    }
    case LayerType::Concat: {
      require(!spec.inputs.empty(), "concat needs producers");
      std::size_t width = 0;
      for (std::size_t i = 0; i < spec.inputs.size(); ++i) {
        require(in_shape(i).size() == 1, "concat: producers must be vectors");
        width += in_shape(i)[0];
      }
      node.out_shape = {width};
      break;
    }
    case LayerType::Eca: {
      require(spec.inputs.size() == 1, "eca takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 1 && in[0] == spec.in_width, "eca: input must be a {C} vector");
      require(spec.kernel % 2 == 1, "eca: kernel must be odd");
      node.out_shape = in;
      node.params.push_back({"k", make_param({static_cast<std::size_t>(spec.kernel)}), true});
      break;
    }
    case LayerType::Reshape: {
      require(spec.inputs.size() == 1, "reshape takes one producer");
      require(Tensor::numel_of(spec.shape) == Tensor::numel_of(in_shape(0)),
              "reshape: element count mismatch");
      node.out_shape = spec.shape;
      break;
    }
    case LayerType::Dsc: {
      require(spec.inputs.size() == 1, "dsc takes one producer");
      const auto& in = in_shape(0);
      require(in.size() == 3 && in[2] == spec.in_width, "dsc: input shape mismatch");
      const std::size_t k = static_cast<std::size_t>(spec.kernel);
      require(k % 2 == 1, "dsc: kernel must be odd");
      node.out_shape = {in[0], in[1], spec.out_width};
      node.params.push_back({"dw", make_param({k, k, spec.in_width}), true});
      node.params.push_back({"dwb", make_param({spec.in_width}), true});
      node.params.push_back({"pw", make_param({spec.in_width, spec.out_width}), true});
      node.params.push_back({"pwb", make_param({spec.out_width}), true});
      break;
    }
    case LayerType::Dense: {
      require(spec.inputs.size() == 1, "dense takes one producer");
      require(Tensor::numel_of(in_shape(0)) == spec.in_width, "dense: input width mismatch");
      node.out_shape = {spec.out_width};
      node.params.push_back({"w", make_param({spec.in_width, spec.out_width}), true});
      node.params.push_back({"b", make_param({spec.out_width}), true});
      break;
    }
    case LayerType::Softmax:
    case LayerType::SimplexNorm:
      require(spec.inputs.size() == 1, "activation takes one producer");
      require(in_shape(0).size() == 1, "activation: input must be a vector");
      node.out_shape = in_shape(0);
      break;
  }

  node.spec = std::move(spec);
  nodes.push_back(std::move(node));
  return static_cast<int>(nodes.size()) - 1;
}

// ---------------------------------------------------------------------------
// Weight initialization
// ---------------------------------------------------------------------------

namespace {

struct Rng {
  std::mt19937_64 gen;
  bool has_spare = false;
  double spare = 0.0;

  explicit Rng(std::uint64_t seed) : gen(seed) {}

  double uniform01() {  // [0, 1)
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
  }
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  double gaussian() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double mul = std::sqrt(-2.0 * std::log(s) / s);
    spare = v * mul;
    has_spare = true;
    return u * mul;
  }
};

void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

// Orthonormalizes the columns of each HxH gate block of wh {H, 4H} via
// modified Gram-Schmidt on a Gaussian draw.
void fill_orthogonal_gates(Tensor& wh, std::size_t h, Rng& rng) {
  for (std::size_t gate = 0; gate < 4; ++gate) {
    std::vector<std::vector<double>> cols(h, std::vector<double>(h));
    for (auto& col : cols)
      for (double& v : col) v = rng.gaussian();
    for (std::size_t c = 0; c < h; ++c) {
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < h; ++r) dot += cols[c][r] * cols[p][r];
        for (std::size_t r = 0; r < h; ++r) cols[c][r] -= dot * cols[p][r];
      }
      double norm = 0.0;
      for (double v : cols[c]) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-12) {  // essentially impossible for a Gaussian draw
        for (double& v : cols[c]) v = rng.gaussian();
        norm = 0.0;
        for (double v : cols[c]) norm += v * v;
        norm = std::sqrt(norm);
      }
      for (double& v : cols[c]) v /= norm;
    }
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < h; ++c) wh.at(r, gate * h + c) = cols[c][r];
  }
}

}  // namespace

void init_weights(ModelGraph& graph, std::uint64_t seed, int only_node) {
  Rng rng(seed);
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    if (only_node >= 0 && n != static_cast<std::size_t>(only_node)) continue;
    Node& node = graph.nodes[n];
    switch (node.spec.type) {
      case LayerType::Conv2d: {
        const double k = static_cast<double>(node.spec.kernel);
        fill_uniform(*node.params[0].value,
                     1.0 / std::sqrt(k * k * static_cast<double>(node.spec.in_width)), rng);
        node.params[1].value->fill(0.0);
        break;
      }
      case LayerType::BatchNorm:
        node.params[0].value->fill(1.0);  // gamma
        node.params[1].value->fill(0.0);  // beta
        node.params[2].value->fill(0.0);  // running_mean
        node.params[3].value->fill(1.0);  // running_var
        break;
      case LayerType::Lstm: {
        const std::size_t h = node.spec.out_width;
        fill_uniform(*node.params[0].value,
                     1.0 / std::sqrt(static_cast<double>(node.spec.in_width)), rng);
        fill_orthogonal_gates(*node.params[1].value, h, rng);
        Tensor& b = *node.params[2].value;
        b.fill(0.0);
        for (std::size_t j = 0; j < h; ++j) b.at(h + j) = 1.0;  // forget gate
        break;
      }
      case LayerType::Eca:
        fill_uniform(*node.params[0].value,
                     1.0 / std::sqrt(static_cast<double>(node.spec.kernel)), rng);
        break;
      case LayerType::Dsc: {
        const double k = static_cast<double>(node.spec.kernel);
        fill_uniform(*node.params[0].value, 1.0 / k, rng);  // fan-in k^2
        node.params[1].value->fill(0.0);
        fill_uniform(*node.params[2].value,
                     1.0 / std::sqrt(static_cast<double>(node.spec.in_width)), rng);
        node.params[3].value->fill(0.0);
        break;
      }
      case LayerType::Dense:
        fill_uniform(*node.params[0].value,
                     1.0 / std::sqrt(static_cast<double>(node.spec.in_width)), rng);
        node.params[1].value->fill(0.0);
        break;
      default:
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Forward execution
// ---------------------------------------------------------------------------

namespace {

Tensor input_forward(const Node& node, const GraphSample& sample) {
  const Tensor& src = sample.slots[static_cast<std::size_t>(node.spec.slot)];
  require(src.numel() > 0, "sample is missing input slot for " + node.spec.name);
  require(src.numel() == Tensor::numel_of(node.out_shape),
          "sample input size mismatch for " + node.spec.name);
  return src.reshaped(node.out_shape);
}

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor gap_frames_forward(const Tensor& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor y({h, c});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) y.at(i, ch) += x.at(i, j, ch);
  const double inv = 1.0 / static_cast<double>(w);
  for (double& v : y.data) v *= inv;
  return y;
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

// Softplus keeps every component strictly positive, so normalization cannot
// strand a component at zero gradient the way a hard ReLU would.
Tensor simplex_norm_forward(const Tensor& x) {
  Tensor y = x;
  double sum = 0.0;
  for (double& v : y.data) {
    v = softplus(v);
    sum += v;
  }
  if (sum <= 0.0) {  // deep underflow only
    y.fill(1.0 / static_cast<double>(y.numel()));
    return y;
  }
  for (double& v : y.data) v /= sum;
  return y;
}

// Forward for one node of one sample. BN normalization statistics are chosen
// by the caller (batch or running).
Tensor node_forward(const ModelGraph& graph, std::size_t i, const GraphSample& sample,
                    const std::vector<Tensor>& outs, NodeCache* cache,
                    const BnBatchStat* bn_stat) {
  const Node& node = graph.nodes[i];
  const auto in = [&](std::size_t idx) -> const Tensor& {
    return outs[static_cast<std::size_t>(node.spec.inputs[idx])];
  };
  switch (node.spec.type) {
    case LayerType::Input:
      return input_forward(node, sample);
    case LayerType::Conv2d:
      return kernels::conv2d_forward(in(0), *node.params[0].value, *node.params[1].value,
                                     node.spec.stride, node.spec.padding);
    case LayerType::BatchNorm: {
      const Tensor& mean =
          bn_stat && bn_stat->batch_mode ? bn_stat->mean : *node.params[2].value;
      const Tensor& var =
          bn_stat && bn_stat->batch_mode ? bn_stat->var : *node.params[3].value;
      return kernels::batchnorm_forward(in(0), *node.params[0].value,
                                        *node.params[1].value, mean, var, node.spec.eps);
    }
    case LayerType::Relu:
      return relu_forward(in(0));
    case LayerType::MaxPool:
      return kernels::maxpool2d_forward(in(0), node.spec.kernel, node.spec.stride,
                                        cache ? &cache->argmax : nullptr);
    case LayerType::GapFrames:
      return gap_frames_forward(in(0));
    case LayerType::Gap:
      return kernels::global_avg_pool(in(0));
    case LayerType::Lstm: {
      kernels::LstmParams p;
      p.wx = *node.params[0].value;
      p.wh = *node.params[1].value;
      p.bias = *node.params[2].value;
      p.hidden_size = node.spec.out_width;
      Tensor zero({node.spec.out_width});
      kernels::LstmResult r = kernels::lstm_forward(in(0), p, zero, zero, nullptr,
                                                    cache ? &cache->lstm : nullptr);
      return r.final_hidden;
    }
    case LayerType::Concat: {
      Tensor y(node.out_shape);
      std::size_t pos = 0;
      for (std::size_t idx = 0; idx < node.spec.inputs.size(); ++idx) {
        const Tensor& src = in(idx);
        std::copy(src.data.begin(), src.data.end(), y.data.begin() + pos);
        pos += src.numel();
      }
      return y;
    }
    case LayerType::Eca: {
      kernels::EcaResult r = kernels::eca_forward(in(0), *node.params[0].value);
      if (cache) cache->aux = r.weights;
      return r.output;
    }
    case LayerType::Reshape:
      return in(0).reshaped(node.out_shape);
    case LayerType::Dsc:
      return kernels::dsc_forward(in(0), *node.params[0].value, *node.params[1].value,
                                  *node.params[2].value, *node.params[3].value, nullptr,
                                  cache ? &cache->aux : nullptr);
    case LayerType::Dense:
      return kernels::dense_forward(in(0), *node.params[0].value, *node.params[1].value);
    case LayerType::Softmax:
      return kernels::softmax(in(0));
    case LayerType::SimplexNorm:
      return simplex_norm_forward(in(0));
  }
  throw std::logic_error("node_forward: unhandled layer type");
}

}  // namespace

Tensor forward(const ModelGraph& graph, const GraphSample& sample, Activations* acts) {
  require(!graph.nodes.empty(), "forward: empty graph");
  Activations local;
  Activations& a = acts ? *acts : local;
  a.out.assign(graph.nodes.size(), Tensor());
  a.cache.assign(graph.nodes.size(), NodeCache());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    a.out[i] = node_forward(graph, i, sample, a.out, &a.cache[i], nullptr);
  return a.out.back();
}

void forward_batch(const ModelGraph& graph, std::span<const GraphSample> batch,
                   bool training, std::vector<Activations>& acts, BatchContext& ctx,
                   bool update_running) {
  require(!graph.nodes.empty(), "forward_batch: empty graph");
  require(!batch.empty(), "forward_batch: empty batch");
  acts.assign(batch.size(), Activations());
  for (Activations& a : acts) {
    a.out.assign(graph.nodes.size(), Tensor());
    a.cache.assign(graph.nodes.size(), NodeCache());
  }
  ctx.bn.assign(graph.nodes.size(), BnBatchStat());

  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const Node& node = graph.nodes[i];
    if (node.spec.type == LayerType::BatchNorm && training && node.spec.trainable) {
      // Per-batch statistics over every sample and spatial position.
      const std::size_t c = node.spec.in_width;
      const int producer = node.spec.inputs[0];
      BnBatchStat& stat = ctx.bn[i];
      stat.batch_mode = true;
      stat.mean = Tensor({c});
      stat.var = Tensor({c});
      std::size_t rows_total = 0;
      for (const Activations& a : acts) {
        const Tensor& x = a.out[static_cast<std::size_t>(producer)];
        const std::size_t rows = x.numel() / c;
        rows_total += rows;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) stat.mean.at(ch) += x.data[r * c + ch];
      }
      for (std::size_t ch = 0; ch < c; ++ch)
        stat.mean.at(ch) /= static_cast<double>(rows_total);
      for (const Activations& a : acts) {
        const Tensor& x = a.out[static_cast<std::size_t>(producer)];
        const std::size_t rows = x.numel() / c;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double d = x.data[r * c + ch] - stat.mean.at(ch);
            stat.var.at(ch) += d * d;
          }
      }
      for (std::size_t ch = 0; ch < c; ++ch)
        stat.var.at(ch) /= static_cast<double>(rows_total);

      if (update_running) {
        Tensor& rm = *graph.nodes[i].params[2].value;
        Tensor& rv = *graph.nodes[i].params[3].value;
        const double m = node.spec.momentum;
        for (std::size_t ch = 0; ch < c; ++ch) {
          rm.at(ch) = m * rm.at(ch) + (1.0 - m) * stat.mean.at(ch);
          rv.at(ch) = m * rv.at(ch) + (1.0 - m) * stat.var.at(ch);
        }
      }
    }
    for (std::size_t s = 0; s < batch.size(); ++s)
      acts[s].out[i] =
          node_forward(graph, i, batch[s], acts[s].out, &acts[s].cache[i], &ctx.bn[i]);
  }
}

double sample_loss(const Tensor& output, const GraphSample& sample, Loss loss) {
  if (loss == Loss::SoftmaxCrossEntropy) {
    require(sample.label >= 0 && sample.label < static_cast<int>(output.numel()),
            "sample_loss: label out of range");
    const double p = output.at(static_cast<std::size_t>(sample.label));
    return -std::log(std::max(p, 1e-300));
  }
  require(sample.target.numel() == output.numel(), "sample_loss: target size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < output.numel(); ++i) {
    const double d = output.at(i) - sample.target.at(i);
    acc += d * d;
  }
  return acc / static_cast<double>(output.numel());
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

namespace {

void ensure_grad(Tensor& g, const std::vector<std::size_t>& shape) {
  if (g.numel() == 0) g = Tensor(shape);
}

// Gradients of one node for every sample in the batch. `ograds[s][i]` is the
// loss gradient w.r.t. node i's output for sample s; producers' entries are
// accumulated here.
struct BackwardPass {
  const ModelGraph& graph;
  std::span<const GraphSample> batch;
  const std::vector<Activations>& acts;
  const BatchContext& ctx;
  std::vector<std::vector<Tensor>>& ograds;
  GraphGrads& grads;
  bool want_param_grads;

  void run_node(std::size_t i) {
    const Node& node = graph.nodes[i];
    const bool params_wanted =
        want_param_grads && node.spec.trainable && !node.params.empty();
    switch (node.spec.type) {
      case LayerType::Input:
        for (std::size_t s = 0; s < batch.size(); ++s) {
          Tensor& g = ograds[s][i];
          if (g.numel() == 0) continue;
          const std::size_t slot = static_cast<std::size_t>(node.spec.slot);
          Tensor& acc = grads.input[slot];
          if (acc.numel() == 0) acc = Tensor(batch[s].slots[slot].shape);
          for (std::size_t j = 0; j < g.numel(); ++j) acc.data[j] += g.data[j];
        }
        return;
      case LayerType::Conv2d:
        backward_conv(i, params_wanted);
        return;
      case LayerType::BatchNorm:
        backward_bn(i, params_wanted);
        return;
      case LayerType::Relu:
        backward_relu(i);
        return;
      case LayerType::MaxPool:
        backward_maxpool(i);
        return;
      case LayerType::GapFrames:
        backward_gap_frames(i);
        return;
      case LayerType::Gap:
        backward_gap(i);
        return;
      case LayerType::Lstm:
        backward_lstm(i, params_wanted);
        return;
      case LayerType::Concat:
        backward_concat(i);
        return;
      case LayerType::Eca:
        backward_eca(i, params_wanted);
        return;
      case LayerType::Reshape:
        backward_reshape(i);
        return;
      case LayerType::Dsc:
        backward_dsc(i, params_wanted);
        return;
      case LayerType::Dense:
        backward_dense(i, params_wanted);
        return;
      case LayerType::Softmax:
        backward_softmax(i);
        return;
      case LayerType::SimplexNorm:
        backward_simplex(i);
        return;
    }
  }

  Tensor* out_grad(std::size_t s, std::size_t i) {
    Tensor& g = ograds[s][i];
    return g.numel() == 0 ? nullptr : &g;
  }

  Tensor& producer_grad(std::size_t s, std::size_t i, std::size_t idx = 0) {
    const int p = graph.nodes[i].spec.inputs[idx];
    Tensor& g = ograds[s][static_cast<std::size_t>(p)];
    ensure_grad(g, graph.nodes[static_cast<std::size_t>(p)].out_shape);
    return g;
  }

  const Tensor& producer_out(std::size_t s, std::size_t i, std::size_t idx = 0) {
    const int p = graph.nodes[i].spec.inputs[idx];
    return acts[s].out[static_cast<std::size_t>(p)];
  }

  void backward_conv(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const Tensor& w = *node.params[0].value;
    const std::size_t k = static_cast<std::size_t>(node.spec.kernel);
    const std::size_t cin = node.spec.in_width, cout = node.spec.out_width;
    const std::size_t stride = static_cast<std::size_t>(node.spec.stride);
    const std::size_t pad = node.spec.padding == Padding::Same ? (k - 1) / 2 : 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& x = producer_out(s, i);
      Tensor& dx = producer_grad(s, i);
      const std::size_t h = x.dim(0), wdt = x.dim(1);
      const std::size_t oh = dy->dim(0), ow = dy->dim(1);
      Tensor* dwp = params_wanted ? &grads.param[i][0] : nullptr;
      Tensor* dbp = params_wanted ? &grads.param[i][1] : nullptr;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox)
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = dy->at(oy, ox, co);
            if (g == 0.0) continue;
            if (dbp) dbp->at(co) += g;
            for (std::size_t u = 0; u < k; ++u) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + u) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < k; ++v) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + v) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wdt)) continue;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const std::size_t widx = (u * k + v) * cin * cout + ci * cout + co;
                  const std::size_t xidx =
                      (static_cast<std::size_t>(iy) * wdt + static_cast<std::size_t>(ix)) * cin + ci;
                  if (dwp) dwp->data[widx] += x.data[xidx] * g;
                  dx.data[xidx] += w.data[widx] * g;
                }
              }
            }
          }
    }
  }

  void backward_bn(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const std::size_t c = node.spec.in_width;
    const Tensor& gamma = *node.params[0].value;
    const BnBatchStat& stat = ctx.bn[i];
    const Tensor& mean = stat.batch_mode ? stat.mean : *node.params[2].value;
    const Tensor& var = stat.batch_mode ? stat.var : *node.params[3].value;
    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch)
      inv_std[ch] = 1.0 / std::sqrt(var.at(ch) + node.spec.eps);

    if (!stat.batch_mode) {
      // Frozen or inference-mode normalization: a per-channel affine map.
      for (std::size_t s = 0; s < batch.size(); ++s) {
        Tensor* dy = out_grad(s, i);
        if (!dy) continue;
        const Tensor& x = producer_out(s, i);
        Tensor& dx = producer_grad(s, i);
        const std::size_t rows = x.numel() / c;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t idx = r * c + ch;
            dx.data[idx] += dy->data[idx] * gamma.at(ch) * inv_std[ch];
            if (params_wanted) {
              grads.param[i][0].at(ch) +=
                  dy->data[idx] * (x.data[idx] - mean.at(ch)) * inv_std[ch];
              grads.param[i][1].at(ch) += dy->data[idx];
            }
          }
      }
      return;
    }

    // Batch-statistics mode: the mean and variance depend on every element,
    // so reduce across the whole batch per channel first.
    std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
    std::size_t rows_total = 0;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const Tensor& x = producer_out(s, i);
      const std::size_t rows = x.numel() / c;
      rows_total += rows;
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t idx = r * c + ch;
          const double xhat = (x.data[idx] - mean.at(ch)) * inv_std[ch];
          sum_dy[ch] += dy->data[idx];
          sum_dy_xhat[ch] += dy->data[idx] * xhat;
        }
    }
    const double n = static_cast<double>(rows_total);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const Tensor& x = producer_out(s, i);
      Tensor* dy = out_grad(s, i);
      Tensor& dx = producer_grad(s, i);
      const std::size_t rows = x.numel() / c;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t idx = r * c + ch;
          const double xhat = (x.data[idx] - mean.at(ch)) * inv_std[ch];
          const double g = dy ? dy->data[idx] : 0.0;
          dx.data[idx] += gamma.at(ch) * inv_std[ch] *
                          (g - sum_dy[ch] / n - xhat * sum_dy_xhat[ch] / n);
          if (params_wanted && dy) {
            grads.param[i][0].at(ch) += g * xhat;
            grads.param[i][1].at(ch) += g;
          }
        }
    }
  }

  void backward_relu(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& y = acts[s].out[i];
      Tensor& dx = producer_grad(s, i);
      for (std::size_t j = 0; j < y.numel(); ++j)
        if (y.data[j] > 0.0) dx.data[j] += dy->data[j];
    }
  }

  void backward_maxpool(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const std::vector<std::size_t>& argmax = acts[s].cache[i].argmax;
      Tensor& dx = producer_grad(s, i);
      for (std::size_t j = 0; j < dy->numel(); ++j) dx.data[argmax[j]] += dy->data[j];
    }
  }

  void backward_gap_frames(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      Tensor& dx = producer_grad(s, i);
      const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
      const double inv = 1.0 / static_cast<double>(w);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch)
            dx.at(y, x, ch) += dy->at(y, ch) * inv;
    }
  }

  void backward_gap(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      Tensor& dx = producer_grad(s, i);
      const std::size_t h = dx.dim(0), w = dx.dim(1), c = dx.dim(2);
      const double inv = 1.0 / static_cast<double>(h * w);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t ch = 0; ch < c; ++ch) dx.at(y, x, ch) += dy->at(ch) * inv;
    }
  }

  void backward_lstm(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const std::size_t h = node.spec.out_width;
    const std::size_t f = node.spec.in_width;
    const std::size_t h4 = 4 * h;
    const Tensor& wx = *node.params[0].value;
    const Tensor& wh = *node.params[1].value;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dfinal = out_grad(s, i);
      if (!dfinal) continue;
      const kernels::LstmCache& cache = acts[s].cache[i].lstm;
      const std::size_t t_len = cache.inputs.dim(0);
      Tensor& dx = producer_grad(s, i);
      Tensor* dwx = params_wanted ? &grads.param[i][0] : nullptr;
      Tensor* dwh = params_wanted ? &grads.param[i][1] : nullptr;
      Tensor* db = params_wanted ? &grads.param[i][2] : nullptr;

      std::vector<double> dh(dfinal->data), dc(h, 0.0), dpre(h4), dh_next(h);
      for (std::size_t t = t_len; t-- > 0;) {
        for (std::size_t j = 0; j < h; ++j) {
          const double gi = cache.gates.at(t, j);
          const double gf = cache.gates.at(t, h + j);
          const double gg = cache.gates.at(t, 2 * h + j);
          const double go = cache.gates.at(t, 3 * h + j);
          const double tc = cache.tanhc.at(t, j);
          const double c_prev = t > 0 ? cache.cells.at(t - 1, j) : 0.0;
          const double dct = dc[j] + dh[j] * go * (1.0 - tc * tc);
          const double do_ = dh[j] * tc;
          dpre[j] = dct * gg * gi * (1.0 - gi);
          dpre[h + j] = dct * c_prev * gf * (1.0 - gf);
          dpre[2 * h + j] = dct * gi * (1.0 - gg * gg);
          dpre[3 * h + j] = do_ * go * (1.0 - go);
          dc[j] = dct * gf;
        }
        if (db)
          for (std::size_t q = 0; q < h4; ++q) db->at(q) += dpre[q];
        for (std::size_t ft = 0; ft < f; ++ft) {
          const double xv = cache.inputs.at(t, ft);
          double acc = 0.0;
          const double* wrow = &wx.data[ft * h4];
          for (std::size_t q = 0; q < h4; ++q) {
            if (dwx) dwx->data[ft * h4 + q] += xv * dpre[q];
            acc += wrow[q] * dpre[q];
          }
          dx.at(t, ft) += acc;
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (std::size_t j = 0; j < h; ++j) {
          const double hprev = t > 0 ? cache.hidden.at(t - 1, j) : 0.0;
          double acc = 0.0;
          const double* wrow = &wh.data[j * h4];
          for (std::size_t q = 0; q < h4; ++q) {
            if (dwh) dwh->data[j * h4 + q] += hprev * dpre[q];
            acc += wrow[q] * dpre[q];
          }
          dh_next[j] = acc;
        }
        dh = dh_next;
      }
    }
  }

  void backward_concat(std::size_t i) {
    const Node& node = graph.nodes[i];
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      std::size_t pos = 0;
      for (std::size_t idx = 0; idx < node.spec.inputs.size(); ++idx) {
        Tensor& dx = producer_grad(s, i, idx);
        for (std::size_t j = 0; j < dx.numel(); ++j) dx.data[j] += dy->data[pos + j];
        pos += dx.numel();
      }
    }
  }

  void backward_eca(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const Tensor& kern = *node.params[0].value;
    const std::size_t ke = kern.numel();
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(ke / 2);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& x = producer_out(s, i);
      const Tensor& w = acts[s].cache[i].aux;  // sigmoid weights
      Tensor& dx = producer_grad(s, i);
      const std::size_t c = x.numel();
      Tensor* dk = params_wanted ? &grads.param[i][0] : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double wc = w.at(ch);
        dx.data[ch] += dy->data[ch] * wc;
        const double da = dy->data[ch] * x.data[ch] * wc * (1.0 - wc);
        for (std::size_t u = 0; u < ke; ++u) {
          const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(ch + u) - off;
          if (j < 0 || j >= static_cast<std::ptrdiff_t>(c)) continue;
          if (dk) dk->at(u) += da * x.data[static_cast<std::size_t>(j)];
          dx.data[static_cast<std::size_t>(j)] += da * kern.at(u);
        }
      }
    }
  }

  void backward_reshape(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      Tensor& dx = producer_grad(s, i);
      for (std::size_t j = 0; j < dx.numel(); ++j) dx.data[j] += dy->data[j];
    }
  }

  void backward_dsc(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const Tensor& dw = *node.params[0].value;
    const Tensor& pw = *node.params[2].value;
    const std::size_t k = static_cast<std::size_t>(node.spec.kernel);
    const std::size_t cin = node.spec.in_width, cout = node.spec.out_width;
    const std::size_t pad = (k - 1) / 2;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& x = producer_out(s, i);
      const Tensor& mid = acts[s].cache[i].aux;
      Tensor& dx = producer_grad(s, i);
      const std::size_t h = x.dim(0), wdt = x.dim(1);
      Tensor dmid({h, wdt, cin});

      Tensor* g_dw = params_wanted ? &grads.param[i][0] : nullptr;
      Tensor* g_dwb = params_wanted ? &grads.param[i][1] : nullptr;
      Tensor* g_pw = params_wanted ? &grads.param[i][2] : nullptr;
      Tensor* g_pwb = params_wanted ? &grads.param[i][3] : nullptr;

      for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < wdt; ++ox)
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = dy->at(oy, ox, co);
            if (g == 0.0) continue;
            if (g_pwb) g_pwb->at(co) += g;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              if (g_pw) g_pw->at(ci, co) += mid.at(oy, ox, ci) * g;
              dmid.at(oy, ox, ci) += pw.at(ci, co) * g;
            }
          }

      for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < wdt; ++ox)
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double g = dmid.at(oy, ox, ci);
            if (g == 0.0) continue;
            if (g_dwb) g_dwb->at(ci) += g;
            for (std::size_t u = 0; u < k; ++u) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy + u) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t v = 0; v < k; ++v) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox + v) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wdt)) continue;
                if (g_dw)
                  g_dw->at(u, v, ci) +=
                      x.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) * g;
                dx.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci) +=
                    dw.at(u, v, ci) * g;
              }
            }
          }
    }
  }

  void backward_dense(std::size_t i, bool params_wanted) {
    const Node& node = graph.nodes[i];
    const Tensor& w = *node.params[0].value;
    const std::size_t n = node.spec.in_width, m = node.spec.out_width;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& x = producer_out(s, i);
      Tensor& dx = producer_grad(s, i);
      Tensor* g_w = params_wanted ? &grads.param[i][0] : nullptr;
      Tensor* g_b = params_wanted ? &grads.param[i][1] : nullptr;
      if (g_b)
        for (std::size_t j = 0; j < m; ++j) g_b->at(j) += dy->at(j);
      for (std::size_t r = 0; r < n; ++r) {
        const double xv = x.data[r];
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          if (g_w) g_w->at(r, j) += xv * dy->at(j);
          acc += w.at(r, j) * dy->at(j);
        }
        dx.data[r] += acc;
      }
    }
  }

  void backward_softmax(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& p = acts[s].out[i];
      Tensor& dx = producer_grad(s, i);
      double dot = 0.0;
      for (std::size_t j = 0; j < p.numel(); ++j) dot += p.data[j] * dy->data[j];
      for (std::size_t j = 0; j < p.numel(); ++j)
        dx.data[j] += p.data[j] * (dy->data[j] - dot);
    }
  }

  void backward_simplex(std::size_t i) {
    for (std::size_t s = 0; s < batch.size(); ++s) {
      Tensor* dy = out_grad(s, i);
      if (!dy) continue;
      const Tensor& x = producer_out(s, i);
      const Tensor& y = acts[s].out[i];
      Tensor& dx = producer_grad(s, i);
      double sum = 0.0;
      for (double v : x.data) sum += softplus(v);
      if (sum <= 0.0) continue;  // uniform fallback region: zero subgradient
      double dot = 0.0;
      for (std::size_t j = 0; j < y.numel(); ++j) dot += dy->data[j] * y.data[j];
      for (std::size_t j = 0; j < x.numel(); ++j)
        dx.data[j] += kernels::sigmoid(x.data[j]) * (dy->data[j] - dot) / sum;
    }
  }
};

void init_grads(const ModelGraph& graph, GraphGrads& grads) {
  grads.param.assign(graph.nodes.size(), {});
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    grads.param[i].reserve(graph.nodes[i].params.size());
    for (const Param& p : graph.nodes[i].params)
      grads.param[i].push_back(Tensor(p.value->shape));
  }
  for (Tensor& t : grads.input) t = Tensor();
}

}  // namespace

double graph_backward(const ModelGraph& graph, std::span<const GraphSample> batch,
                      Loss loss, GraphGrads& grads, bool training, bool update_running) {
  std::vector<Activations> acts;
  BatchContext ctx;
  forward_batch(graph, batch, training, acts, ctx, update_running);
  init_grads(graph, grads);

  const std::size_t last = graph.nodes.size() - 1;
  std::vector<std::vector<Tensor>> ograds(batch.size());
  for (auto& per_node : ograds) per_node.assign(graph.nodes.size(), Tensor());

  double total_loss = 0.0;
  const bool ce_fused = loss == Loss::SoftmaxCrossEntropy &&
                        graph.nodes[last].spec.type == LayerType::Softmax;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const Tensor& out = acts[s].out[last];
    total_loss += sample_loss(out, batch[s], loss);
    if (ce_fused) {
      // dL/dlogits = p - y, injected directly at the softmax producer.
      const int producer = graph.nodes[last].spec.inputs[0];
      Tensor g = out;
      g.at(static_cast<std::size_t>(batch[s].label)) -= 1.0;
      ograds[s][static_cast<std::size_t>(producer)] = std::move(g);
    } else if (loss == Loss::MeanSquaredError) {
      Tensor g(out.shape);
      const double scale = 2.0 / static_cast<double>(out.numel());
      for (std::size_t j = 0; j < out.numel(); ++j)
        g.data[j] = scale * (out.data[j] - batch[s].target.at(j));
      ograds[s][last] = std::move(g);
    } else {
      throw std::invalid_argument(
          "graph_backward: cross-entropy requires a softmax output layer");
    }
  }
  if (!std::isfinite(total_loss))
    throw std::runtime_error("graph_backward: non-finite loss");

  BackwardPass pass{graph, batch, acts, ctx, ograds, grads, true};
  const std::size_t start = ce_fused ? last - 1 : last;
  for (std::size_t i = start + 1; i-- > 0;) pass.run_node(i);
  return total_loss;
}

std::array<Tensor, kNumSlots> input_gradients_of_l2(const ModelGraph& graph,
                                                    const GraphSample& sample,
                                                    int node_id) {
  require(node_id >= 0 && node_id < static_cast<int>(graph.nodes.size()),
          "input_gradients_of_l2: bad node id");
  std::vector<Activations> acts;
  BatchContext ctx;
  const GraphSample batch[1] = {sample};
  forward_batch(graph, std::span<const GraphSample>(batch, 1), false, acts, ctx);

  GraphGrads grads;
  init_grads(graph, grads);
  std::vector<std::vector<Tensor>> ograds(1);
  ograds[0].assign(graph.nodes.size(), Tensor());

  std::array<Tensor, kNumSlots> result;
  for (std::size_t s = 0; s < kNumSlots; ++s)
    if (sample.slots[s].numel() > 0) result[s] = Tensor(sample.slots[s].shape);

  const Tensor& v = acts[0].out[static_cast<std::size_t>(node_id)];
  double norm = 0.0;
  for (double x : v.data) norm += x * x;
  norm = std::sqrt(norm);
  if (norm <= 0.0) return result;  // zero activation: zero gradient by convention

  Tensor seed(v.shape);
  for (std::size_t j = 0; j < v.numel(); ++j) seed.data[j] = v.data[j] / norm;
  ograds[0][static_cast<std::size_t>(node_id)] = std::move(seed);

  BackwardPass pass{graph, std::span<const GraphSample>(batch, 1), acts, ctx, ograds,
                    grads, false};
  for (std::size_t i = static_cast<std::size_t>(node_id) + 1; i-- > 0;) pass.run_node(i);

  for (std::size_t s = 0; s < kNumSlots; ++s)
    if (grads.input[s].numel() > 0) result[s] = grads.input[s];
  return result;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

double finite_diff_check(ModelGraph& graph, std::span<const GraphSample> batch,
                         Loss loss, double h) {
  require(h > 0.0, "finite_diff_check: h must be positive");
  GraphGrads grads;
  graph_backward(graph, batch, loss, grads, true, false);

  const auto batch_loss = [&]() {
    std::vector<Activations> acts;
    BatchContext ctx;
    forward_batch(graph, batch, true, acts, ctx, false);
    double total = 0.0;
    for (std::size_t s = 0; s < batch.size(); ++s)
      total += sample_loss(acts[s].out.back(), batch[s], loss);
    return total;
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (!graph.nodes[i].spec.trainable) continue;
    for (std::size_t p = 0; p < graph.nodes[i].params.size(); ++p) {
      if (!graph.nodes[i].params[p].trainable) continue;
      Tensor& value = *graph.nodes[i].params[p].value;
      for (std::size_t j = 0; j < value.numel(); ++j) {
        const double saved = value.data[j];
        value.data[j] = saved + h;
        const double lp = batch_loss();
        value.data[j] = saved - h;
        const double lm = batch_loss();
        value.data[j] = saved;
        const double numeric = (lp - lm) / (2.0 * h);
        worst = std::max(worst, relative_error(numeric, grads.param[i][p].data[j]));
      }
    }
  }
  return worst;
}

int eca_kernel_size(std::size_t channels) {
  require(channels >= 1, "eca_kernel_size: need at least one channel");
  const double t = std::floor(std::log2(static_cast<double>(channels)) / 2.0 + 0.5);
  int k = static_cast<int>(t);
  if (k % 2 == 0) k += 1;
  return std::max(k, 1);
}

}  // namespace hppi
