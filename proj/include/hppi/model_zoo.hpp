#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "hppi/graph.hpp"

namespace hppi {

// Table-style ablation variants of the dynamic-branch model.
enum class PlmnVariant : std::uint8_t {
  Full = 0,
  NoAttention,
  SingleFft,
  SingleWt,
  SingleGt,
  Plcn,  // both DSC blocks replaced with standard 3x3 convolutions
};

std::string_view to_string(PlmnVariant variant);
PlmnVariant parse_plmn_variant(std::string_view name);

// Coarse classifier: FFT pseudo-image -> conv/BN/ReLU/pool x2 -> per-frame
// GAP -> LSTM(32) -> dense softmax over {A, B, C}.
ModelGraph build_first_layer(std::size_t num_classes = 3, std::uint64_t seed = 0);

// Dynamic-branch classifier: parallel LSTM(64) encoders over the selected
// pseudo-images -> concat -> ECA -> 1x1xC map -> two DSC blocks -> GAP ->
// dense softmax over {A1..A4}.
ModelGraph build_plmn(PlmnVariant variant = PlmnVariant::Full, std::uint64_t seed = 0);

// Stationary classifier: shares the first-layer backbone parameters (frozen,
// same tensors) with a fresh two-way head over {B1, B2}.
ModelGraph build_stationary(const ModelGraph& first_layer, std::uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Model container (binary, little-endian): magic "HPPI", u16 version, u16
// layer count, then per layer: name, type tag, hyperparameter block, alias
// flag, and for non-alias layers the parameter tensors (f64 raw or int8 with
// an f64 scale). Layers whose parameters are shared with an earlier layer in
// the same file are written once and referenced by index.
// ---------------------------------------------------------------------------

struct ModelIoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagicError : ModelIoError {
  using ModelIoError::ModelIoError;
};
struct UnsupportedVersionError : ModelIoError {
  using ModelIoError::ModelIoError;
};
struct TruncatedFileError : ModelIoError {
  using ModelIoError::ModelIoError;
};

// Serializes one or more graphs into a single container. With `quantized`
// set, trainable parameter tensors are stored as int8 with a per-tensor
// scale; batch-norm running statistics stay f64.
std::vector<std::uint8_t> serialize_models(std::span<const ModelGraph* const> graphs,
                                           bool quantized = false);
std::vector<ModelGraph> deserialize_models(std::span<const std::uint8_t> bytes);

void save_model(const ModelGraph& graph, const std::filesystem::path& path,
                bool quantized = false);
ModelGraph load_model(const std::filesystem::path& path);

}  // namespace hppi
