#include "hppi/runtime.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace hppi {

std::string_view to_string(ModuleId id) {
  switch (id) {
    case ModuleId::FirstLayer: return "first_layer";
    case ModuleId::Plmn: return "plmn";
    case ModuleId::Stationary: return "stationary";
  }
  throw std::invalid_argument("to_string: bad module id");
}

namespace {

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::distance(
      t.data.begin(), std::max_element(t.data.begin(), t.data.end())));
}

GraphSample images_to_sample(const PseudoImageSet& images) {
  GraphSample s;
  s.slots[static_cast<std::size_t>(InputSlot::Fft)] = images.fft;
  s.slots[static_cast<std::size_t>(InputSlot::Wt)] = images.wt;
  s.slots[static_cast<std::size_t>(InputSlot::Gt)] = images.gt;
  return s;
}

}  // namespace

DispatchResult dispatch_window(const PseudoImageSet& images, const ModelSet& models,
                               const std::function<void(CoarseLabel)>& on_coarse) {
  if (!models.first_layer || !models.plmn || !models.stationary)
    throw std::invalid_argument("dispatch_window: models not loaded");
  const GraphSample sample = images_to_sample(images);

  DispatchResult result;
  const Tensor coarse_out = forward(*models.first_layer, sample);
  if (coarse_out.numel() != kNumCoarse)
    throw std::invalid_argument("dispatch_window: first layer is not a 3-way classifier");
  result.coarse_probs = coarse_out.data;
  result.coarse = static_cast<CoarseLabel>(argmax(coarse_out));
  if (on_coarse) on_coarse(result.coarse);

  switch (result.coarse) {
    case CoarseLabel::A: {
      const Tensor fine_out = forward(*models.plmn, sample);
      result.plmn_calls = 1;
      result.fine_probs = fine_out.data;
      result.fine = static_cast<FineLabel>(argmax(fine_out));
      break;
    }
    case CoarseLabel::B: {
      const Tensor fine_out = forward(*models.stationary, sample);
      result.stationary_calls = 1;
      result.fine_probs = fine_out.data;
      result.fine = argmax(fine_out) == 0 ? FineLabel::B1 : FineLabel::B2;
      break;
    }
    case CoarseLabel::C:
      result.fine = FineLabel::C1;  // single cycling activity, no second stage
      break;
  }
  return result;
}

int asra_rate(CoarseLabel coarse) {
  switch (coarse) {
    case CoarseLabel::B: return 10;
    case CoarseLabel::C: return 25;
    case CoarseLabel::A: return 50;
  }
  throw std::invalid_argument("asra_rate: bad coarse label");
}

double RamTable::of(ModuleId id) const {
  switch (id) {
    case ModuleId::FirstLayer: return first_layer_kib;
    case ModuleId::Plmn: return plmn_kib;
    case ModuleId::Stationary: return stationary_kib;
  }
  throw std::invalid_argument("RamTable::of: bad module id");
}

double ResidencyState::resident_ram_kib(const RamTable& table) const {
  double total = table.first_layer_kib;
  if (second_stage) total += table.of(*second_stage);
  return total;
}

void residency_step(ResidencyState& state, CoarseLabel coarse, const RamTable& table,
                    std::size_t window) {
  std::optional<ModuleId> wanted;
  if (coarse == CoarseLabel::A) wanted = ModuleId::Plmn;
  else if (coarse == CoarseLabel::B) wanted = ModuleId::Stationary;
  // Coarse C runs no second stage; the resident module, if any, stays.

  if (wanted && state.second_stage != wanted) {
    if (state.second_stage)
      state.log.push_back({window, false, *state.second_stage});
    state.second_stage = wanted;
    state.log.push_back({window, true, *wanted});
  }
  state.peak_ram_kib = std::max(state.peak_ram_kib, state.resident_ram_kib(table));
}

RecordedSource::RecordedSource(std::vector<ImuSample> stream_50hz)
    : stream_(std::move(stream_50hz)) {}

std::optional<std::vector<ImuSample>> RecordedSource::next_window(int rate_hz) {
  if (!is_supported_rate(rate_hz))
    throw std::invalid_argument("RecordedSource: unsupported rate");
  const std::size_t step = static_cast<std::size_t>(50 / rate_hz);
  if (cursor_ + step * kWindowLen > stream_.size()) return std::nullopt;
  std::vector<ImuSample> window;
  window.reserve(kWindowLen);
  for (std::size_t i = 0; i < kWindowLen; ++i)
    window.push_back(stream_[cursor_ + i * step]);
  cursor_ += step * kWindowLen;
  return window;
}

SyntheticSource::SyntheticSource(std::vector<FineLabel> schedule,
                                 std::size_t total_windows, std::uint64_t seed,
                                 ProfileMap profiles)
    : schedule_(std::move(schedule)),
      total_windows_(total_windows),
      seed_(seed),
      profiles_(std::move(profiles)) {
  if (schedule_.empty()) throw std::invalid_argument("SyntheticSource: empty schedule");
}

std::optional<std::vector<ImuSample>> SyntheticSource::next_window(int rate_hz) {
  if (emitted_ >= total_windows_) return std::nullopt;
  const FineLabel label = schedule_[emitted_ % schedule_.size()];
  const double duration = static_cast<double>(kWindowLen) / rate_hz;
  std::vector<ImuSample> window = generate_activity_stream(
      label, duration, rate_hz, seed_ + emitted_, profiles_);
  ++emitted_;
  return window;
}

StreamRunResult stream_run(SampleSource& source, const ModelSet& models,
                           const ChannelStats& stats, const RamTable& ram_table,
                           double gabor_sigma, int initial_rate_hz) {
  StreamRunResult result;
  int rate = initial_rate_hz;
  std::size_t window_idx = 0;
  while (true) {
    std::optional<std::vector<ImuSample>> raw = source.next_window(rate);
    if (!raw) break;
    if (raw->size() != kWindowLen)
      throw std::runtime_error("stream_run: source returned a short window");

    std::vector<ImuSample> filtered = median_filter_stream(*raw);
    std::vector<SampleWindow> windows = segment_windows(filtered);
    const SampleWindow window = standardize(windows.front(), stats);
    const PseudoImageSet images = pseudoimage_set(window, gabor_sigma);

    // The branch module must be resident before the second stage runs.
    const DispatchResult dispatch =
        dispatch_window(images, models, [&](CoarseLabel coarse) {
          residency_step(result.residency, coarse, ram_table, window_idx);
        });

    StreamEvent event;
    event.window = window_idx;
    event.coarse = dispatch.coarse;
    event.fine = dispatch.fine;
    event.rate_hz = rate;
    event.resident_ram_kib = result.residency.resident_ram_kib(ram_table);
    result.events.push_back(event);

    rate = asra_rate(dispatch.coarse);  // applies from the next window
    ++window_idx;
  }
  return result;
}

void write_stream_csv(const std::filesystem::path& path,
                      std::span<const StreamEvent> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "window,coarse,fine,rate_hz,resident_ram_kib\n";
  out.precision(10);
  for (const StreamEvent& e : events)
    out << e.window << ',' << to_string(e.coarse) << ',' << to_string(e.fine) << ','
        << e.rate_hz << ',' << e.resident_ram_kib << '\n';
}

}  // namespace hppi
