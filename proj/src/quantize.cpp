#include "hppi/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "hppi/model_zoo.hpp"
#include "hppi/train.hpp"

namespace hppi {

QuantizedTensor quantize_tensor_int8(const Tensor& t) {
  if (!t.all_finite())
    throw std::invalid_argument("quantize_tensor_int8: non-finite values");
  double max_abs = 0.0;
  for (double v : t.data) max_abs = std::max(max_abs, std::abs(v));
  QuantizedTensor q;
  q.scale = std::max(max_abs / 127.0, kQuantScaleFloor);
  q.shape = t.shape;
  q.values.resize(t.numel());
  for (std::size_t i = 0; i < t.numel(); ++i) {
    // std::nearbyint under the default rounding mode is round-half-to-even.
    const double r = std::nearbyint(t.data[i] / q.scale);
    q.values[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
  return q;
}

Tensor dequantize(const QuantizedTensor& q) {
  Tensor t(q.shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data[i] = q.scale * static_cast<double>(q.values[i]);
  return t;
}

QuantizeResult quantize_model(const ModelGraph& graph,
                              std::span<const GraphSample> eval_set) {
  const ModelGraph* g = &graph;
  QuantizeResult result;
  result.report.float_bytes =
      serialize_models(std::span<const ModelGraph* const>(&g, 1), false).size();
  result.file_bytes = serialize_models(std::span<const ModelGraph* const>(&g, 1), true);
  result.report.int8_bytes = result.file_bytes.size();

  std::vector<ModelGraph> loaded = deserialize_models(result.file_bytes);
  result.model = std::move(loaded.front());

  if (!eval_set.empty()) {
    const EvalResult fp = evaluate(graph, eval_set);
    const EvalResult q8 = evaluate(result.model, eval_set);
    result.report.float_accuracy = fp.accuracy;
    result.report.int8_accuracy = q8.accuracy;
    result.report.accuracy_delta = fp.accuracy - q8.accuracy;
    std::size_t preserved = 0;
    for (const GraphSample& s : eval_set) {
      const Tensor a = forward(graph, s);
      const Tensor b = forward(result.model, s);
      const auto arg = [](const Tensor& t) {
        return std::distance(t.data.begin(),
                             std::max_element(t.data.begin(), t.data.end()));
      };
      if (arg(a) == arg(b)) ++preserved;
    }
    result.report.argmax_preserved =
        static_cast<double>(preserved) / static_cast<double>(eval_set.size());
  }
  return result;
}

}  // namespace hppi
