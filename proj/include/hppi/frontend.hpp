#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "hppi/labels.hpp"
#include "hppi/tensor.hpp"

namespace hppi {

inline constexpr std::size_t kWindowLen = 16;
inline constexpr std::size_t kNumChannels = 6;  // ax, ay, az, gx, gy, gz
inline constexpr double kDefaultGaborSigma = 4.0;

struct ImuSample {
  double t = 0.0;
  double ax = 0.0, ay = 0.0, az = 0.0;  // m/s^2
  double gx = 0.0, gy = 0.0, gz = 0.0;  // rad/s
  FineLabel label = FineLabel::A1;

  double channel(std::size_t c) const {
    switch (c) {
      case 0: return ax;
      case 1: return ay;
      case 2: return az;
      case 3: return gx;
      case 4: return gy;
      case 5: return gz;
    }
    throw std::out_of_range("ImuSample: channel index");
  }
  void set_channel(std::size_t c, double v) {
    switch (c) {
      case 0: ax = v; return;
      case 1: ay = v; return;
      case 2: az = v; return;
      case 3: gx = v; return;
      case 4: gy = v; return;
      case 5: gz = v; return;
    }
    throw std::out_of_range("ImuSample: channel index");
  }
};

// One denoised 16x6 segment. Rows are time steps, columns the fixed
// channel order ax, ay, az, gx, gy, gz.
struct SampleWindow {
  Tensor samples;  // {16, 6}
  FineLabel label = FineLabel::A1;
  CoarseLabel coarse = CoarseLabel::A;
};

// The three spectral views of one window, each 16x6 (feature index x channel).
struct PseudoImageSet {
  Tensor fft;
  Tensor wt;
  Tensor gt;
  FineLabel source_label = FineLabel::A1;
};

// Per-channel standardization statistics, computed on the training split only.
struct ChannelStats {
  std::array<double, kNumChannels> mean{};
  std::array<double, kNumChannels> stddev{};  // floored at kStdFloor
};

inline constexpr double kStdFloor = 1e-6;

// 3-point median filter with replicate padding at both ends.
std::vector<double> median_filter3(std::span<const double> series);

// Applies the median filter to each of the six channels of a stream.
std::vector<ImuSample> median_filter_stream(const std::vector<ImuSample>& stream);

// Non-overlapping 16-sample windows; the trailing remainder is dropped.
// Window label = most frequent sample label, ties broken by enum order.
std::vector<SampleWindow> segment_windows(std::span<const ImuSample> stream);

ChannelStats compute_channel_stats(std::span<const SampleWindow> windows);
SampleWindow standardize(const SampleWindow& window, const ChannelStats& stats);

// Column c holds |X(k)| of the 16-point DFT of channel c, k = 0..15
// (two-sided magnitude, no normalization).
Tensor fft_spectrogram(const SampleWindow& window);

// Column c holds the full-depth orthonormal Haar coefficients of channel c,
// ordered coarse-to-fine: [a4, d4, d3 (2), d2 (4), d1 (8)].
Tensor haar_dwt_spectrogram(const SampleWindow& window);

// Column c holds |G(t_c, f_k)| with a single Gaussian slice centered at
// t_c = 7.5 samples and frequency bins f_k = k/16 cycles/sample.
Tensor gabor_spectrogram(const SampleWindow& window, double sigma = kDefaultGaborSigma);

PseudoImageSet pseudoimage_set(const SampleWindow& window,
                               double sigma = kDefaultGaborSigma);

// CSV stream format: header `t,ax,ay,az,gx,gy,gz,label`, LF line endings.
void write_imu_csv(const std::filesystem::path& path,
                   std::span<const ImuSample> stream);
std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path);

}  // namespace hppi
