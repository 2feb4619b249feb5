#include "hppi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace hppi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct NoiseRng {
  std::mt19937_64 gen;
  bool has_spare = false;
  double spare = 0.0;

  explicit NoiseRng(std::uint64_t seed) : gen(seed) {}
  double uniform01() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
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

}  // namespace

void ActivityProfile::validate(int rate_hz) const {
  const double nyquist = rate_hz / 2.0;
  if (sin_freq_hz < 0.0 || burst_rate_hz < 0.0)
    throw std::invalid_argument("profile: negative frequency");
  if (sin_freq_hz >= nyquist || burst_rate_hz >= nyquist)
    throw std::invalid_argument("profile: fundamental above Nyquist for this rate");
  if (noise_std < 0.0) throw std::invalid_argument("profile: negative noise std");
}

ProfileMap default_profiles() {
  ProfileMap map;

  ActivityProfile walk;
  walk.base = {0.0, 0.0, 9.8, 0.0, 0.0, 0.0};
  walk.sin_amp = {2.0, 1.4, 0.6, 0.2, 0.2, 1.2};
  walk.sin_freq_hz = 1.8;
  walk.harmonics = 2;
  walk.noise_std = 0.25;
  map[FineLabel::A1] = walk;

  ActivityProfile run = walk;
  run.sin_amp = {3.6, 2.6, 1.1, 0.4, 0.4, 2.2};
  run.sin_freq_hz = 2.8;
  run.noise_std = 0.35;
  map[FineLabel::A2] = run;

  ActivityProfile stairs_up;
  stairs_up.base = {0.0, 0.0, 9.8, 0.0, 0.0, 0.0};
  stairs_up.sin_amp = {0.5, 0.4, 0.0, 0.1, 0.1, 0.3};
  stairs_up.sin_freq_hz = 1.5;
  stairs_up.burst_amp = {0.0, 2.2, 2.6, 0.0, 0.0, 0.0};
  stairs_up.burst_rate_hz = 1.5;
  stairs_up.saw_amp = 2.2;
  stairs_up.noise_std = 0.25;
  map[FineLabel::A3] = stairs_up;

  ActivityProfile stairs_down = stairs_up;
  stairs_down.saw_amp = -2.2;
  map[FineLabel::A4] = stairs_down;

  ActivityProfile standing;
  standing.base = {0.0, 0.0, 9.8, 0.0, 0.0, 0.0};
  standing.noise_std = 0.02;
  map[FineLabel::B1] = standing;

  ActivityProfile lying;
  lying.base = {9.8, 0.0, 0.0, 0.0, 0.0, 0.0};
  lying.noise_std = 0.02;
  map[FineLabel::B2] = lying;

  ActivityProfile cycling;
  cycling.base = {0.0, 0.0, 9.8, 0.0, 0.0, 0.0};
  cycling.sin_amp = {0.25, 0.25, 0.0, 0.3, 0.3, 2.5};
  cycling.sin_freq_hz = 3.125;  // exactly bin 1 of a 16-point DFT at 50 Hz
  cycling.noise_std = 0.1;
  map[FineLabel::C1] = cycling;

  return map;
}

bool is_supported_rate(int rate_hz) {
  return std::find(kSupportedRates.begin(), kSupportedRates.end(), rate_hz) !=
         kSupportedRates.end();
}

std::vector<ImuSample> generate_activity_stream(FineLabel label, double duration_s,
                                                int rate_hz, std::uint64_t seed,
                                                const ProfileMap& profiles) {
  if (!is_supported_rate(rate_hz))
    throw std::invalid_argument("generate_activity_stream: rate must be 10, 25 or 50 Hz");
  if (duration_s <= 0.0)
    throw std::invalid_argument("generate_activity_stream: duration must be > 0");
  const auto it = profiles.find(label);
  if (it == profiles.end())
    throw std::invalid_argument("generate_activity_stream: no profile for label");
  const ActivityProfile& prof = it->second;
  prof.validate(rate_hz);

  NoiseRng rng(seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(label) + 1);
  std::array<double, kNumChannels> phase{};
  for (double& p : phase) p = rng.uniform01() * kTwoPi;
  const double burst_phase = rng.uniform01();

  const double nyquist = rate_hz / 2.0;
  const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
  std::vector<ImuSample> stream;
  stream.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    ImuSample s;
    s.t = t;
    s.label = label;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double v = prof.base[c];
      if (prof.sin_amp[c] != 0.0) {
        // Band-limit: harmonics at or above Nyquist are dropped.
        for (int k = 1; k <= prof.harmonics + 1; ++k) {
          const double f = prof.sin_freq_hz * k;
          if (f >= nyquist) break;
          v += prof.sin_amp[c] / k * std::sin(kTwoPi * f * t + phase[c] * k);
        }
      }
      if (prof.burst_amp[c] != 0.0 && prof.burst_rate_hz > 0.0) {
        const double cyc = std::sin(kTwoPi * prof.burst_rate_hz * t + phase[c]);
        v += prof.burst_amp[c] * std::max(0.0, cyc) * std::max(0.0, cyc) * std::max(0.0, cyc);
      }
      if (c == 2 && prof.saw_amp != 0.0 && prof.burst_rate_hz > 0.0) {
        const double frac =
            std::fmod(prof.burst_rate_hz * t + burst_phase, 1.0);
        v += prof.saw_amp * (2.0 * frac - 1.0);
      }
      v += prof.noise_std * rng.gaussian();
      s.set_channel(c, v);
    }
    stream.push_back(s);
  }
  return stream;
}

DatasetSplit make_dataset(const ProfileMap& profiles, std::size_t windows_per_class,
                          SplitRatios ratios, std::uint64_t seed, int rate_hz,
                          double gabor_sigma) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw std::invalid_argument("make_dataset: split ratios must sum to 1");
  if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0)
    throw std::invalid_argument("make_dataset: bad split ratios");
  if (windows_per_class == 0)
    throw std::invalid_argument("make_dataset: windows_per_class must be > 0");

  DatasetSplit split;
  split.ratios = ratios;
  split.seed = seed;

  // Per class: generate, denoise, window, shuffle, split.
  std::vector<std::vector<SampleWindow>> train_w, val_w, test_w;
  for (FineLabel label : kAllFine) {
    const double duration =
        static_cast<double>(windows_per_class * kWindowLen) / rate_hz;
    std::vector<ImuSample> stream =
        generate_activity_stream(label, duration, rate_hz, seed, profiles);
    stream = median_filter_stream(stream);
    std::vector<SampleWindow> windows = segment_windows(stream);

    std::mt19937_64 rng(seed * 0x51d7348e1ull + static_cast<std::uint64_t>(label));
    std::shuffle(windows.begin(), windows.end(), rng);

    const std::size_t n = windows.size();
    const std::size_t n_train = static_cast<std::size_t>(std::llround(ratios.train * n));
    const std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * n));
    train_w.emplace_back(windows.begin(), windows.begin() + n_train);
    val_w.emplace_back(windows.begin() + n_train, windows.begin() + n_train + n_val);
    test_w.emplace_back(windows.begin() + n_train + n_val, windows.end());
  }

  std::vector<SampleWindow> all_train;
  for (const auto& v : train_w) all_train.insert(all_train.end(), v.begin(), v.end());
  split.stats = compute_channel_stats(all_train);

  const auto emit = [&](const std::vector<std::vector<SampleWindow>>& groups,
                        std::vector<DatasetEntry>& out) {
    for (const auto& group : groups)
      for (const SampleWindow& w : group) {
        DatasetEntry e;
        e.images = pseudoimage_set(standardize(w, split.stats), gabor_sigma);
        e.label = w.label;
        e.coarse = w.coarse;
        out.push_back(std::move(e));
      }
  };
  emit(train_w, split.train);
  emit(val_w, split.val);
  emit(test_w, split.test);
  return split;
}

std::string dataset_manifest(const DatasetSplit& split) {
  std::ostringstream out;
  out << "seed " << split.seed << "\n";
  out << "ratios " << split.ratios.train << "/" << split.ratios.val << "/"
      << split.ratios.test << "\n";
  out << "split train=" << split.train.size() << " val=" << split.val.size()
      << " test=" << split.test.size() << "\n";
  for (FineLabel label : kAllFine) {
    const auto count = [&](const std::vector<DatasetEntry>& v) {
      return std::count_if(v.begin(), v.end(),
                           [&](const DatasetEntry& e) { return e.label == label; });
    };
    out << to_string(label) << " train=" << count(split.train)
        << " val=" << count(split.val) << " test=" << count(split.test) << "\n";
  }
  return out.str();
}

GraphSample to_graph_sample(const DatasetEntry& entry, LabelSpace space) {
  GraphSample s;
  s.slots[static_cast<std::size_t>(InputSlot::Fft)] = entry.images.fft;
  s.slots[static_cast<std::size_t>(InputSlot::Wt)] = entry.images.wt;
  s.slots[static_cast<std::size_t>(InputSlot::Gt)] = entry.images.gt;
  switch (space) {
    case LabelSpace::Coarse: s.label = static_cast<int>(entry.coarse); break;
    case LabelSpace::FineA: s.label = a_class_index(entry.label); break;
    case LabelSpace::FineB: s.label = b_class_index(entry.label); break;
    case LabelSpace::FineFull: s.label = static_cast<int>(entry.label); break;
  }
  return s;
}

std::vector<GraphSample> graph_samples(std::span<const DatasetEntry> entries,
                                       LabelSpace space) {
  std::vector<GraphSample> out;
  for (const DatasetEntry& e : entries) {
    if (space == LabelSpace::FineA && e.coarse != CoarseLabel::A) continue;
    if (space == LabelSpace::FineB && e.coarse != CoarseLabel::B) continue;
    out.push_back(to_graph_sample(e, space));
  }
  return out;
}

}  // namespace hppi
