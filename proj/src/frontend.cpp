#include "hppi/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace hppi {

std::vector<double> median_filter3(std::span<const double> series) {
  if (series.empty()) throw std::invalid_argument("median_filter3: empty input");
  const std::size_t n = series.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double a = series[i == 0 ? 0 : i - 1];
    double b = series[i];
    double c = series[i + 1 < n ? i + 1 : n - 1];
    out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
  }
  return out;
}

std::vector<ImuSample> median_filter_stream(const std::vector<ImuSample>& stream) {
  if (stream.empty()) return {};
  std::vector<ImuSample> out = stream;
  std::vector<double> series(stream.size());
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t i = 0; i < stream.size(); ++i) series[i] = stream[i].channel(c);
    std::vector<double> filtered = median_filter3(series);
    for (std::size_t i = 0; i < stream.size(); ++i) out[i].set_channel(c, filtered[i]);
  }
  return out;
}

std::vector<SampleWindow> segment_windows(std::span<const ImuSample> stream) {
  std::vector<SampleWindow> windows;
  const std::size_t count = stream.size() / kWindowLen;
  windows.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    SampleWindow win;
    win.samples = Tensor({kWindowLen, kNumChannels});
    std::array<int, kNumFine> votes{};
    for (std::size_t n = 0; n < kWindowLen; ++n) {
      const ImuSample& s = stream[w * kWindowLen + n];
      for (std::size_t c = 0; c < kNumChannels; ++c) win.samples.at(n, c) = s.channel(c);
      votes[static_cast<std::size_t>(s.label)]++;
    }
    // argmax with ties resolved by the fixed label order
    std::size_t best = 0;
    for (std::size_t i = 1; i < kNumFine; ++i)
      if (votes[i] > votes[best]) best = i;
    win.label = static_cast<FineLabel>(best);
    win.coarse = coarse_of(win.label);
    windows.push_back(std::move(win));
  }
  return windows;
}

ChannelStats compute_channel_stats(std::span<const SampleWindow> windows) {
  if (windows.empty())
    throw std::invalid_argument("compute_channel_stats: no windows");
  ChannelStats stats;
  const double n = static_cast<double>(windows.size() * kWindowLen);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    double sum = 0.0;
    for (const SampleWindow& w : windows)
      for (std::size_t i = 0; i < kWindowLen; ++i) sum += w.samples.at(i, c);
    const double mean = sum / n;
    double sq = 0.0;
    for (const SampleWindow& w : windows)
      for (std::size_t i = 0; i < kWindowLen; ++i) {
        const double d = w.samples.at(i, c) - mean;
        sq += d * d;
      }
    stats.mean[c] = mean;
    stats.stddev[c] = std::max(std::sqrt(sq / n), kStdFloor);
  }
  return stats;
}

SampleWindow standardize(const SampleWindow& window, const ChannelStats& stats) {
  for (std::size_t c = 0; c < kNumChannels; ++c)
    if (!std::isfinite(stats.mean[c]) || !std::isfinite(stats.stddev[c]))
      throw std::invalid_argument("standardize: non-finite channel stats");
  SampleWindow out = window;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const double m = stats.mean[c];
    const double s = std::max(stats.stddev[c], kStdFloor);
    for (std::size_t i = 0; i < kWindowLen; ++i)
      out.samples.at(i, c) = (window.samples.at(i, c) - m) / s;
  }
  return out;
}

namespace {

// Iterative radix-2 FFT, in place. n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void check_window(const SampleWindow& w) {
  if (w.samples.shape != std::vector<std::size_t>{kWindowLen, kNumChannels})
    throw std::invalid_argument("window is not 16x6");
  if (!w.samples.all_finite())
    throw std::invalid_argument("window contains non-finite values");
}

}  // namespace

Tensor fft_spectrogram(const SampleWindow& window) {
  check_window(window);
  Tensor out({kWindowLen, kNumChannels});
  std::vector<std::complex<double>> buf(kWindowLen);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t n = 0; n < kWindowLen; ++n)
      buf[n] = std::complex<double>(window.samples.at(n, c), 0.0);
    fft_radix2(buf);
    for (std::size_t k = 0; k < kWindowLen; ++k) out.at(k, c) = std::abs(buf[k]);
  }
  return out;
}

Tensor haar_dwt_spectrogram(const SampleWindow& window) {
  check_window(window);
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Tensor out({kWindowLen, kNumChannels});
  std::vector<double> approx(kWindowLen), next(kWindowLen);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t n = 0; n < kWindowLen; ++n) approx[n] = window.samples.at(n, c);
    // Cascade: four levels; details of level j land at rows [2^(4-j), 2^(5-j)).
    std::size_t len = kWindowLen;
    while (len > 1) {
      const std::size_t half = len / 2;
      for (std::size_t k = 0; k < half; ++k) {
        next[k] = (approx[2 * k] + approx[2 * k + 1]) * inv_sqrt2;
        out.at(half + k, c) = (approx[2 * k] - approx[2 * k + 1]) * inv_sqrt2;
      }
      std::copy(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(half),
                approx.begin());
      len = half;
    }
    out.at(0, c) = approx[0];  // a4
  }
  return out;
}

Tensor gabor_spectrogram(const SampleWindow& window, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("gabor_spectrogram: sigma must be > 0");
  check_window(window);
  constexpr double t_center = (kWindowLen - 1) / 2.0;  // 7.5
  Tensor out({kWindowLen, kNumChannels});
  std::array<double, kWindowLen> envelope;
  for (std::size_t tau = 0; tau < kWindowLen; ++tau) {
    const double d = static_cast<double>(tau) - t_center;
    envelope[tau] = std::exp(-std::numbers::pi * d * d / (sigma * sigma));
  }
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t k = 0; k < kWindowLen; ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(kWindowLen);
      std::complex<double> acc(0.0, 0.0);
      for (std::size_t tau = 0; tau < kWindowLen; ++tau) {
        const double phase = -2.0 * std::numbers::pi * f * static_cast<double>(tau);
        acc += window.samples.at(tau, c) * envelope[tau] *
               std::complex<double>(std::cos(phase), std::sin(phase));
      }
      out.at(k, c) = std::abs(acc);
    }
  }
  return out;
}

PseudoImageSet pseudoimage_set(const SampleWindow& window, double sigma) {
  PseudoImageSet set;
  set.fft = fft_spectrogram(window);
  set.wt = haar_dwt_spectrogram(window);
  set.gt = gabor_spectrogram(window, sigma);
  set.source_label = window.label;
  return set;
}

void write_imu_csv(const std::filesystem::path& path,
                   std::span<const ImuSample> stream) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "t,ax,ay,az,gx,gy,gz,label\n";
  out.precision(17);
  for (const ImuSample& s : stream) {
    out << s.t << ',' << s.ax << ',' << s.ay << ',' << s.az << ',' << s.gx << ','
        << s.gy << ',' << s.gz << ',' << to_string(s.label) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty stream file: " + path.string());
  if (line.ends_with('\r')) line.pop_back();
  if (line != "t,ax,ay,az,gx,gy,gz,label")
    throw std::runtime_error("bad stream header in " + path.string());
  std::vector<ImuSample> stream;
  double prev_t = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    if (line.ends_with('\r')) line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::array<double, 7> vals{};
    for (double& v : vals) {
      if (!std::getline(ss, field, ','))
        throw std::runtime_error("short row in " + path.string());
      v = std::stod(field);
      if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + path.string());
    }
    if (!std::getline(ss, field, ','))
      throw std::runtime_error("missing label in " + path.string());
    ImuSample s;
    s.t = vals[0];
    s.ax = vals[1]; s.ay = vals[2]; s.az = vals[3];
    s.gx = vals[4]; s.gy = vals[5]; s.gz = vals[6];
    s.label = parse_fine_label(field);
    if (s.t <= prev_t)
      throw std::runtime_error("timestamps not strictly increasing in " + path.string());
    prev_t = s.t;
    stream.push_back(s);
  }
  return stream;
}

}  // namespace hppi
