#include "hppi/model_zoo.hpp"

#include <stdexcept>

#include "hppi/frontend.hpp"

namespace hppi {

std::string_view to_string(PlmnVariant variant) {
  switch (variant) {
    case PlmnVariant::Full: return "full";
    case PlmnVariant::NoAttention: return "no_attention";
    case PlmnVariant::SingleFft: return "fft";
    case PlmnVariant::SingleWt: return "wt";
    case PlmnVariant::SingleGt: return "gt";
    case PlmnVariant::Plcn: return "plcn";
  }
  throw std::invalid_argument("to_string: bad variant");
}

PlmnVariant parse_plmn_variant(std::string_view name) {
  for (PlmnVariant v : {PlmnVariant::Full, PlmnVariant::NoAttention, PlmnVariant::SingleFft,
                        PlmnVariant::SingleWt, PlmnVariant::SingleGt, PlmnVariant::Plcn})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown variant: " + std::string(name));
}

ModelGraph build_first_layer(std::size_t num_classes, std::uint64_t seed) {
  ModelGraph g;
  g.name = "first_layer";
  LayerSpec in{.type = LayerType::Input, .name = "input_fft"};
  in.slot = InputSlot::Fft;
  in.shape = {kWindowLen, kNumChannels, 1};
  int prev = g.add(in);

  prev = g.add({.type = LayerType::Conv2d, .name = "conv1", .inputs = {prev},
                .kernel = 3, .in_width = 1, .out_width = 8});
  // The following batch norm subtracts any constant shift, so the conv
  // biases stay frozen at zero.
  g.nodes.back().params[1].trainable = false;
  prev = g.add({.type = LayerType::BatchNorm, .name = "bn1", .inputs = {prev}, .in_width = 8});
  prev = g.add({.type = LayerType::Relu, .name = "relu1", .inputs = {prev}});
  prev = g.add({.type = LayerType::MaxPool, .name = "pool1", .inputs = {prev},
                .kernel = 2, .stride = 2});
  prev = g.add({.type = LayerType::Conv2d, .name = "conv2", .inputs = {prev},
                .kernel = 3, .in_width = 8, .out_width = 16});
  g.nodes.back().params[1].trainable = false;
  prev = g.add({.type = LayerType::BatchNorm, .name = "bn2", .inputs = {prev}, .in_width = 16});
  prev = g.add({.type = LayerType::Relu, .name = "relu2", .inputs = {prev}});
  prev = g.add({.type = LayerType::MaxPool, .name = "pool2", .inputs = {prev},
                .kernel = 2, .stride = 2});
  prev = g.add({.type = LayerType::GapFrames, .name = "frame_pool", .inputs = {prev}});
  prev = g.add({.type = LayerType::Lstm, .name = "lstm", .inputs = {prev},
                .in_width = 16, .out_width = 32});
  prev = g.add({.type = LayerType::Dense, .name = "head", .inputs = {prev},
                .in_width = 32, .out_width = num_classes});
  g.add({.type = LayerType::Softmax, .name = "softmax", .inputs = {prev}});
  init_weights(g, seed);
  return g;
}

ModelGraph build_plmn(PlmnVariant variant, std::uint64_t seed) {
  ModelGraph g;
  g.name = "plmn";

  struct Branch {
    InputSlot slot;
    const char* suffix;
  };
  std::vector<Branch> branches;
  switch (variant) {
    case PlmnVariant::SingleFft: branches = {{InputSlot::Fft, "fft"}}; break;
    case PlmnVariant::SingleWt: branches = {{InputSlot::Wt, "wt"}}; break;
    case PlmnVariant::SingleGt: branches = {{InputSlot::Gt, "gt"}}; break;
    default:
      branches = {{InputSlot::Fft, "fft"}, {InputSlot::Wt, "wt"}, {InputSlot::Gt, "gt"}};
      break;
  }

  std::vector<int> encoders;
  for (const Branch& b : branches) {
    LayerSpec in{.type = LayerType::Input, .name = std::string("input_") + b.suffix};
    in.slot = b.slot;
    in.shape = {kWindowLen, kNumChannels};
    const int input_id = g.add(in);
    encoders.push_back(g.add({.type = LayerType::Lstm,
                              .name = std::string("lstm_") + b.suffix,
                              .inputs = {input_id},
                              .in_width = kNumChannels,
                              .out_width = 64}));
  }

  const std::size_t width = 64 * branches.size();
  int prev = g.add({.type = LayerType::Concat, .name = "fuse", .inputs = encoders});
  if (variant != PlmnVariant::NoAttention)
    prev = g.add({.type = LayerType::Eca, .name = "eca", .inputs = {prev},
                  .kernel = eca_kernel_size(width), .in_width = width});
  LayerSpec reshape{.type = LayerType::Reshape, .name = "to_map", .inputs = {prev}};
  reshape.shape = {1, 1, width};
  prev = g.add(reshape);

  for (int blk = 1; blk <= 2; ++blk) {
    const std::string idx = std::to_string(blk);
    if (variant == PlmnVariant::Plcn)
      prev = g.add({.type = LayerType::Conv2d, .name = "conv" + idx, .inputs = {prev},
                    .kernel = 3, .in_width = width, .out_width = width});
    else
      prev = g.add({.type = LayerType::Dsc, .name = "dsc" + idx, .inputs = {prev},
                    .kernel = 3, .in_width = width, .out_width = width});
    prev = g.add({.type = LayerType::Relu, .name = "relu" + idx, .inputs = {prev}});
  }

  prev = g.add({.type = LayerType::Gap, .name = "gap", .inputs = {prev}});
  prev = g.add({.type = LayerType::Dense, .name = "head", .inputs = {prev},
                .in_width = width, .out_width = 4});
  g.add({.type = LayerType::Softmax, .name = "softmax", .inputs = {prev}});
  init_weights(g, seed);
  return g;
}

ModelGraph build_stationary(const ModelGraph& first_layer, std::uint64_t seed) {
  const int head = first_layer.find("head");
  if (head < 0 || first_layer.nodes[static_cast<std::size_t>(head)].spec.type != LayerType::Dense)
    throw std::invalid_argument("build_stationary: first_layer has no dense head");

  ModelGraph g;
  g.name = "stationary";
  // Backbone layers share the first layer's parameter tensors: training one
  // graph is visible through the other.
  for (int i = 0; i < head; ++i)
    g.nodes.push_back(first_layer.nodes[static_cast<std::size_t>(i)]);
  const int backbone_out = head - 1;
  const std::size_t feat =
      Tensor::numel_of(g.nodes[static_cast<std::size_t>(backbone_out)].out_shape);
  const int new_head = g.add({.type = LayerType::Dense, .name = "head",
                              .inputs = {backbone_out}, .in_width = feat, .out_width = 2});
  g.add({.type = LayerType::Softmax, .name = "softmax", .inputs = {new_head}});
  init_weights(g, seed, new_head);
  return g;
}

}  // namespace hppi
