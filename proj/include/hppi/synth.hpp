#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hppi/frontend.hpp"
#include "hppi/graph.hpp"
#include "hppi/labels.hpp"

namespace hppi {

// Generative parameters for one activity class. Signals are a per-axis base
// offset (gravity orientation), a sinusoid with optional harmonics, periodic
// bursts (stairs), a signed sawtooth on az (ascending vs descending), and
// Gaussian noise.
struct ActivityProfile {
  std::array<double, kNumChannels> base{};
  std::array<double, kNumChannels> sin_amp{};
  double sin_freq_hz = 0.0;
  int harmonics = 0;  // extra harmonics at 2f, 3f, ... with 1/k amplitude
  std::array<double, kNumChannels> burst_amp{};
  double burst_rate_hz = 0.0;
  double saw_amp = 0.0;  // signed sawtooth on az
  double noise_std = 0.0;

  void validate(int rate_hz) const;
};

using ProfileMap = std::map<FineLabel, ActivityProfile>;

// Tuned defaults for the seven activities: A1/A2 wrist oscillation with
// harmonics on ax/ay/gz, A3/A4 bursts on ay/az with opposite sawtooth sign,
// B1/B2 near-constant with distinct gravity vectors, C1 gz-dominant cycling
// cadence on an exact 16-point FFT bin at 50 Hz.
ProfileMap default_profiles();

inline constexpr std::array<int, 3> kSupportedRates = {10, 25, 50};
bool is_supported_rate(int rate_hz);

// Deterministic stream for one activity; sample count = round(duration * rate).
std::vector<ImuSample> generate_activity_stream(FineLabel label, double duration_s,
                                                int rate_hz, std::uint64_t seed,
                                                const ProfileMap& profiles = default_profiles());

struct DatasetEntry {
  PseudoImageSet images;
  FineLabel label = FineLabel::A1;
  CoarseLabel coarse = CoarseLabel::A;
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

struct DatasetSplit {
  std::vector<DatasetEntry> train;
  std::vector<DatasetEntry> val;
  std::vector<DatasetEntry> test;
  ChannelStats stats;  // computed on the training split only
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

// Balanced dataset: per class, generate -> median filter -> window ->
// shuffle -> split; standardize all splits with train-split statistics, then
// apply the three transforms.
DatasetSplit make_dataset(const ProfileMap& profiles, std::size_t windows_per_class,
                          SplitRatios ratios, std::uint64_t seed, int rate_hz = 50,
                          double gabor_sigma = kDefaultGaborSigma);

std::string dataset_manifest(const DatasetSplit& split);

// Conversions into graph samples. `labels` selects the label space:
// coarse 3-way, fine-A 4-way, fine-B 2-way, or full 7-way.
enum class LabelSpace : std::uint8_t { Coarse = 0, FineA, FineB, FineFull };

GraphSample to_graph_sample(const DatasetEntry& entry, LabelSpace space);

// Entries of one split filtered and converted for the given label space
// (FineA keeps A-class windows, FineB keeps B-class windows).
std::vector<GraphSample> graph_samples(std::span<const DatasetEntry> entries,
                                       LabelSpace space);

}  // namespace hppi
