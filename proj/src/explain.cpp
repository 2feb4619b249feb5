#include "hppi/explain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hppi/labels.hpp"
#include "hppi/train.hpp"

namespace hppi {

namespace {

constexpr std::array<InputSlot, kNumBranches> kBranchSlots = {InputSlot::Fft, InputSlot::Wt,
                                                              InputSlot::Gt};
constexpr std::array<const char*, kNumBranches> kBranchNames = {"fft", "wt", "gt"};
constexpr std::array<const char*, kNumChannels> kAxisNames = {"ax", "ay", "az",
                                                              "gx", "gy", "gz"};

GraphSample sample_of(const PseudoImageSet& images, int label) {
  GraphSample s;
  s.slots[static_cast<std::size_t>(InputSlot::Fft)] = images.fft;
  s.slots[static_cast<std::size_t>(InputSlot::Wt)] = images.wt;
  s.slots[static_cast<std::size_t>(InputSlot::Gt)] = images.gt;
  s.label = label;
  return s;
}

// The attention-weighted fused vector when the graph has an ECA stage, the
// raw concatenation otherwise.
int fused_node_of(const ModelGraph& plmn) {
  int node = plmn.find("eca");
  if (node < 0) node = plmn.find("fuse");
  if (node < 0) throw std::invalid_argument("explain: graph has no fused representation");
  return node;
}

}  // namespace

std::array<double, kNumBranches> occlusion_branch_importance(
    const ModelGraph& plmn, const PseudoImageSet& images, int true_label) {
  const GraphSample full = sample_of(images, true_label);
  const double base_loss =
      sample_loss(forward(plmn, full), full, Loss::SoftmaxCrossEntropy);

  std::array<double, kNumBranches> delta{};
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    GraphSample occluded = full;
    occluded.slots[static_cast<std::size_t>(kBranchSlots[b])].fill(0.0);
    delta[b] = sample_loss(forward(plmn, occluded), occluded, Loss::SoftmaxCrossEntropy) -
               base_loss;
  }

  std::array<double, kNumBranches> importance{};
  double total = 0.0;
  for (std::size_t b = 0; b < kNumBranches; ++b) total += std::max(delta[b], 0.0);
  if (total <= 0.0) {
    importance.fill(1.0 / kNumBranches);
    return importance;
  }
  for (std::size_t b = 0; b < kNumBranches; ++b)
    importance[b] = std::max(delta[b], 0.0) / total;
  return importance;
}

std::vector<FusedSample> fused_samples(const ModelGraph& plmn,
                                       std::span<const DatasetEntry> entries) {
  const int node = fused_node_of(plmn);
  std::vector<FusedSample> out;
  for (const DatasetEntry& e : entries) {
    if (e.coarse != CoarseLabel::A) continue;
    FusedSample fs;
    fs.a_class = a_class_index(e.label);
    const GraphSample s = sample_of(e.images, fs.a_class);
    Activations acts;
    forward(plmn, s, &acts);
    fs.features = acts.out[static_cast<std::size_t>(node)];
    fs.target = occlusion_branch_importance(plmn, e.images, fs.a_class);
    out.push_back(std::move(fs));
  }
  return out;
}

ModelGraph fit_attribution_mlp(std::span<const FusedSample> samples, std::uint64_t seed,
                               std::size_t epochs, double learning_rate,
                               std::vector<double>* mse_history) {
  if (samples.empty()) throw std::invalid_argument("fit_attribution_mlp: empty set");
  const std::size_t f = samples.front().features.numel();

  ModelGraph mlp;
  mlp.name = "attribution_mlp";
  LayerSpec in{.type = LayerType::Input, .name = "input"};
  in.slot = InputSlot::Vec;
  in.shape = {f};
  int prev = mlp.add(in);
  prev = mlp.add({.type = LayerType::Dense, .name = "hidden", .inputs = {prev},
                  .in_width = f, .out_width = 32});
  prev = mlp.add({.type = LayerType::Relu, .name = "relu", .inputs = {prev}});
  prev = mlp.add({.type = LayerType::Dense, .name = "out", .inputs = {prev},
                  .in_width = 32, .out_width = kNumBranches});
  mlp.add({.type = LayerType::SimplexNorm, .name = "simplex", .inputs = {prev}});
  init_weights(mlp, seed);

  std::vector<GraphSample> batch;
  batch.reserve(samples.size());
  for (const FusedSample& fs : samples) {
    GraphSample s;
    s.slots[static_cast<std::size_t>(InputSlot::Vec)] = fs.features;
    s.target = Tensor({kNumBranches},
                      {fs.target[0], fs.target[1], fs.target[2]});
    batch.push_back(std::move(s));
  }

  AdamConfig adam{.learning_rate = learning_rate};
  std::vector<std::vector<AdamState>> states(mlp.nodes.size());
  for (std::size_t i = 0; i < mlp.nodes.size(); ++i)
    states[i].resize(mlp.nodes[i].params.size());

  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    GraphGrads grads;
    const double loss = graph_backward(mlp, batch, Loss::MeanSquaredError, grads);
    if (mse_history) mse_history->push_back(loss / static_cast<double>(batch.size()));
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < mlp.nodes.size(); ++i)
      for (std::size_t p = 0; p < mlp.nodes[i].params.size(); ++p) {
        Tensor& g = grads.param[i][p];
        for (double& v : g.data) v *= inv;
        adam_step(*mlp.nodes[i].params[p].value, g, states[i][p],
                  static_cast<int>(epoch), adam);
      }
  }
  return mlp;
}

std::vector<std::pair<int, std::array<double, kNumBranches>>> branch_attribution_report(
    const ModelGraph& mlp, std::span<const FusedSample> samples) {
  std::array<std::array<double, kNumBranches>, 4> sums{};
  std::array<std::size_t, 4> counts{};
  for (const FusedSample& fs : samples) {
    GraphSample s;
    s.slots[static_cast<std::size_t>(InputSlot::Vec)] = fs.features;
    const Tensor out = forward(mlp, s);
    for (std::size_t b = 0; b < kNumBranches; ++b)
      sums[static_cast<std::size_t>(fs.a_class)][b] += out.at(b);
    counts[static_cast<std::size_t>(fs.a_class)]++;
  }
  std::vector<std::pair<int, std::array<double, kNumBranches>>> report;
  for (std::size_t cls = 0; cls < 4; ++cls) {
    if (counts[cls] == 0) continue;  // omitted with a warning upstream
    std::array<double, kNumBranches> mean{};
    double total = 0.0;
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      mean[b] = sums[cls][b] / static_cast<double>(counts[cls]);
      total += mean[b];
    }
    if (total > 0.0)
      for (double& v : mean) v /= total;
    else
      mean.fill(1.0 / kNumBranches);
    report.emplace_back(static_cast<int>(cls), mean);
  }
  return report;
}

std::array<std::array<double, kNumChannels>, kNumBranches> axis_attention_profile(
    const ModelGraph& plmn, std::span<const DatasetEntry> entries) {
  const int node = fused_node_of(plmn);
  std::array<std::array<double, kNumChannels>, kNumBranches> raw{};
  for (const DatasetEntry& e : entries) {
    if (e.coarse != CoarseLabel::A) continue;
    const GraphSample s = sample_of(e.images, a_class_index(e.label));
    const std::array<Tensor, kNumSlots> grads = input_gradients_of_l2(plmn, s, node);
    for (std::size_t b = 0; b < kNumBranches; ++b) {
      const Tensor& g = grads[static_cast<std::size_t>(kBranchSlots[b])];
      const Tensor& x = s.slots[static_cast<std::size_t>(kBranchSlots[b])];
      if (g.numel() == 0) continue;
      for (std::size_t t = 0; t < kWindowLen; ++t)
        for (std::size_t a = 0; a < kNumChannels; ++a)
          raw[b][a] += std::abs(g.at(t, a)) * std::abs(x.at(t, a));
    }
  }
  std::array<std::array<double, kNumChannels>, kNumBranches> profile{};
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    double total = 0.0;
    for (double v : raw[b]) total += v;
    if (total <= 0.0) {
      profile[b].fill(1.0 / kNumChannels);
    } else {
      for (std::size_t a = 0; a < kNumChannels; ++a) profile[b][a] = raw[b][a] / total;
    }
  }
  return profile;
}

std::array<std::array<double, kNumBranches>, kNumBranches> pearson_matrix(
    std::span<const PseudoImageSet> sets) {
  if (sets.size() < 2) throw std::invalid_argument("pearson_matrix: need >= 2 samples");
  const std::size_t per_sample = kWindowLen * kNumChannels;
  const std::size_t n = sets.size() * per_sample;

  std::array<std::vector<double>, kNumBranches> flat;
  for (auto& v : flat) v.reserve(n);
  for (const PseudoImageSet& set : sets) {
    for (double v : set.fft.data) flat[0].push_back(v);
    for (double v : set.wt.data) flat[1].push_back(v);
    for (double v : set.gt.data) flat[2].push_back(v);
  }

  std::array<double, kNumBranches> mean{}, var{};
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    for (double v : flat[b]) mean[b] += v;
    mean[b] /= static_cast<double>(n);
    for (double v : flat[b]) var[b] += (v - mean[b]) * (v - mean[b]);
  }

  std::array<std::array<double, kNumBranches>, kNumBranches> corr{};
  for (std::size_t i = 0; i < kNumBranches; ++i)
    for (std::size_t j = 0; j < kNumBranches; ++j) {
      if (var[i] <= 0.0 || var[j] <= 0.0) {
        corr[i][j] = 0.0;  // degenerate branch, reported as zero
        continue;
      }
      double cov = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        cov += (flat[i][k] - mean[i]) * (flat[j][k] - mean[j]);
      corr[i][j] = cov / std::sqrt(var[i] * var[j]);
    }
  return corr;
}

AttributionReport build_attribution_report(const ModelGraph& plmn,
                                           std::span<const DatasetEntry> entries,
                                           std::uint64_t seed) {
  AttributionReport report;
  const std::vector<FusedSample> fused = fused_samples(plmn, entries);
  const ModelGraph mlp = fit_attribution_mlp(fused, seed);
  report.per_class = branch_attribution_report(mlp, fused);
  report.axis_profiles = axis_attention_profile(plmn, entries);

  std::vector<PseudoImageSet> sets;
  for (const DatasetEntry& e : entries)
    if (e.coarse == CoarseLabel::A) sets.push_back(e.images);
  report.pearson = pearson_matrix(sets);
  return report;
}

std::string attribution_report_text(const AttributionReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "branch importance per class (fft/wt/gt):\n";
  for (const auto& [cls, imp] : report.per_class)
    out << "  A" << (cls + 1) << "  " << imp[0] << "  " << imp[1] << "  " << imp[2]
        << "\n";
  out << "axis attention per branch:\n";
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    out << "  " << kBranchNames[b] << " ";
    for (std::size_t a = 0; a < kNumChannels; ++a)
      out << " " << kAxisNames[a] << "=" << report.axis_profiles[b][a];
    out << "\n";
  }
  out << "branch correlation matrix:\n";
  for (std::size_t i = 0; i < kNumBranches; ++i) {
    out << " ";
    for (std::size_t j = 0; j < kNumBranches; ++j) out << " " << report.pearson[i][j];
    out << "\n";
  }
  return out.str();
}

std::string attribution_report_csv(const AttributionReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(6);
  out << "class,fft,wt,gt\n";
  for (const auto& [cls, imp] : report.per_class)
    out << "A" << (cls + 1) << ',' << imp[0] << ',' << imp[1] << ',' << imp[2] << '\n';
  out << "branch,ax,ay,az,gx,gy,gz\n";
  for (std::size_t b = 0; b < kNumBranches; ++b) {
    out << kBranchNames[b];
    for (std::size_t a = 0; a < kNumChannels; ++a) out << ',' << report.axis_profiles[b][a];
    out << '\n';
  }
  out << "pearson,fft,wt,gt\n";
  for (std::size_t i = 0; i < kNumBranches; ++i) {
    out << kBranchNames[i];
    for (std::size_t j = 0; j < kNumBranches; ++j) out << ',' << report.pearson[i][j];
    out << '\n';
  }
  return out.str();
}

}  // namespace hppi
