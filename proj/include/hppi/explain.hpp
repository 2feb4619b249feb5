#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hppi/graph.hpp"
#include "hppi/synth.hpp"

namespace hppi {

inline constexpr std::size_t kNumBranches = 3;  // FFT, WT, GT

// Loss increase when one input branch is zeroed, normalized to the simplex:
// max(delta, 0) / sum(max(delta, 0)); uniform when no branch hurts.
std::array<double, kNumBranches> occlusion_branch_importance(
    const ModelGraph& plmn, const PseudoImageSet& images, int true_label);

struct FusedSample {
  Tensor features;                       // attention-weighted fused vector
  std::array<double, kNumBranches> target{};  // occlusion importances
  int a_class = 0;                       // 0..3
};

// Fused feature vectors (the attention-weighted joint representation, or the
// raw concatenation for attention-free variants) plus occlusion targets for
// every A-class entry.
std::vector<FusedSample> fused_samples(const ModelGraph& plmn,
                                       std::span<const DatasetEntry> entries);

// One-hidden-layer regressor (F -> 32 -> 3, ReLU, simplex-normalized output)
// fitted with full-batch Adam to MSE. Deterministic given the seed.
ModelGraph fit_attribution_mlp(std::span<const FusedSample> samples, std::uint64_t seed,
                               std::size_t epochs = 300, double learning_rate = 0.01,
                               std::vector<double>* mse_history = nullptr);

// Per-class mean of the regressor outputs, renormalized. Classes with no
// samples are omitted.
std::vector<std::pair<int, std::array<double, kNumBranches>>> branch_attribution_report(
    const ModelGraph& mlp, std::span<const FusedSample> samples);

// Gradient-x-input attribution of the attention-weighted fused vector's L2
// norm, summed per axis column and normalized per branch. All-zero
// attributions fall back to uniform.
std::array<std::array<double, kNumChannels>, kNumBranches> axis_attention_profile(
    const ModelGraph& plmn, std::span<const DatasetEntry> entries);

// Pearson correlations between flattened FFT/WT/GT features over the
// concatenated per-sample flattenings. Degenerate (zero-variance) branches
// yield 0 entries.
std::array<std::array<double, kNumBranches>, kNumBranches> pearson_matrix(
    std::span<const PseudoImageSet> sets);

struct AttributionReport {
  std::vector<std::pair<int, std::array<double, kNumBranches>>> per_class;
  std::array<std::array<double, kNumChannels>, kNumBranches> axis_profiles{};
  std::array<std::array<double, kNumBranches>, kNumBranches> pearson{};
};

// Full post-hoc pipeline over the A-class entries of a dataset split.
AttributionReport build_attribution_report(const ModelGraph& plmn,
                                           std::span<const DatasetEntry> entries,
                                           std::uint64_t seed);

std::string attribution_report_text(const AttributionReport& report);
std::string attribution_report_csv(const AttributionReport& report);

}  // namespace hppi
