#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hppi/frontend.hpp"
#include "hppi/graph.hpp"
#include "hppi/labels.hpp"
#include "hppi/synth.hpp"

namespace hppi {

enum class ModuleId : std::uint8_t { FirstLayer = 0, Plmn, Stationary };
std::string_view to_string(ModuleId id);

struct ModelSet {
  const ModelGraph* first_layer = nullptr;
  const ModelGraph* plmn = nullptr;
  const ModelGraph* stationary = nullptr;
};

struct DispatchResult {
  FineLabel fine = FineLabel::A1;
  CoarseLabel coarse = CoarseLabel::A;
  std::vector<double> coarse_probs;
  std::vector<double> fine_probs;  // empty for coarse C (no second stage)
  int plmn_calls = 0;
  int stationary_calls = 0;
};

// Two-stage dispatch: the first layer consumes the FFT image; coarse A runs
// the dynamic branch on all three images, coarse B runs the stationary
// classifier on the FFT image, coarse C maps directly to C1. `on_coarse`,
// when set, runs after the first stage and before any second-stage forward
// (the runtime uses it to page the branch module in).
DispatchResult dispatch_window(const PseudoImageSet& images, const ModelSet& models,
                               const std::function<void(CoarseLabel)>& on_coarse = {});

// Coarse label -> IMU sampling rate: B -> 10 Hz, C -> 25 Hz, A -> 50 Hz.
int asra_rate(CoarseLabel coarse);

struct RamTable {
  double first_layer_kib = 0.0;
  double plmn_kib = 0.0;
  double stationary_kib = 0.0;

  double of(ModuleId id) const;
};

struct ResidencyEvent {
  std::size_t window = 0;
  bool load = true;  // false = unload
  ModuleId module = ModuleId::FirstLayer;
};

// Simulated module residency. The first layer is always resident; at most
// one of the two second-stage modules is resident at any instant.
struct ResidencyState {
  std::optional<ModuleId> second_stage;
  double peak_ram_kib = 0.0;
  std::vector<ResidencyEvent> log;

  double resident_ram_kib(const RamTable& table) const;
};

// Ensures the branch module for `coarse` is resident, unloading the other
// second-stage module first. Coarse C needs no second stage and leaves
// residency unchanged.
void residency_step(ResidencyState& state, CoarseLabel coarse, const RamTable& table,
                    std::size_t window);

// Pull-based window source; the runtime requests each window at the rate
// chosen by the controller.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::optional<std::vector<ImuSample>> next_window(int rate_hz) = 0;
};

// Replays a recorded 50 Hz stream, decimating to the requested rate.
class RecordedSource : public SampleSource {
 public:
  explicit RecordedSource(std::vector<ImuSample> stream_50hz);
  std::optional<std::vector<ImuSample>> next_window(int rate_hz) override;

 private:
  std::vector<ImuSample> stream_;
  std::size_t cursor_ = 0;
};

// Generates windows on demand from a repeating schedule of activity labels,
// honoring the requested rate.
class SyntheticSource : public SampleSource {
 public:
  SyntheticSource(std::vector<FineLabel> schedule, std::size_t total_windows,
                  std::uint64_t seed, ProfileMap profiles = default_profiles());
  std::optional<std::vector<ImuSample>> next_window(int rate_hz) override;

 private:
  std::vector<FineLabel> schedule_;
  std::size_t total_windows_;
  std::size_t emitted_ = 0;
  std::uint64_t seed_;
  ProfileMap profiles_;
};

struct StreamEvent {
  std::size_t window = 0;
  CoarseLabel coarse = CoarseLabel::A;
  FineLabel fine = FineLabel::A1;
  int rate_hz = 50;
  double resident_ram_kib = 0.0;
};

struct StreamRunResult {
  std::vector<StreamEvent> events;
  ResidencyState residency;
};

// Frontend -> dispatch -> ASRA per window; the emitted rate applies to the
// source from the next window on. Each pulled window is median-filtered,
// standardized with the supplied training statistics, and transformed.
StreamRunResult stream_run(SampleSource& source, const ModelSet& models,
                           const ChannelStats& stats, const RamTable& ram_table,
                           double gabor_sigma = kDefaultGaborSigma,
                           int initial_rate_hz = 50);

// Event log CSV: `window,coarse,fine,rate_hz,resident_ram_kib`.
void write_stream_csv(const std::filesystem::path& path,
                      std::span<const StreamEvent> events);

}  // namespace hppi
