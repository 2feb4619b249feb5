#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hppi/graph.hpp"
#include "hppi/tensor.hpp"

namespace hppi {

// Symmetric per-tensor int8 quantization: scale = max|t| / 127 (floored at
// 1e-12), values = clamp(round-half-to-even(v / scale), -127, 127).
struct QuantizedTensor {
  double scale = 1e-12;
  std::vector<std::int8_t> values;
  std::vector<std::size_t> shape;
};

inline constexpr double kQuantScaleFloor = 1e-12;

QuantizedTensor quantize_tensor_int8(const Tensor& t);
Tensor dequantize(const QuantizedTensor& q);

struct QuantizationReport {
  std::size_t float_bytes = 0;       // serialized f64 model size
  std::size_t int8_bytes = 0;        // serialized quantized model size
  double float_accuracy = 0.0;
  double int8_accuracy = 0.0;
  double accuracy_delta = 0.0;       // float - int8, as a fraction
  double argmax_preserved = 0.0;     // fraction of samples with unchanged argmax
};

struct QuantizeResult {
  std::vector<std::uint8_t> file_bytes;  // quantized model container
  ModelGraph model;                      // graph with dequantized weights
  QuantizationReport report;
};

// Weight-only post-training quantization; inference runs on the dequantized
// weights. The report compares serialized sizes and accuracy on `eval_set`.
QuantizeResult quantize_model(const ModelGraph& graph,
                              std::span<const GraphSample> eval_set);

}  // namespace hppi
