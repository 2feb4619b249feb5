#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>

#include "hppi/frontend.hpp"
#include "oracles.hpp"

using namespace hppi;
using oracles::column;
using oracles::random_window;

namespace {

SampleWindow make_window(const std::function<double(std::size_t, std::size_t)>& fn,
                         FineLabel label = FineLabel::A1) {
  SampleWindow w;
  w.samples = Tensor({kWindowLen, kNumChannels});
  for (std::size_t n = 0; n < kWindowLen; ++n)
    for (std::size_t c = 0; c < kNumChannels; ++c) w.samples.at(n, c) = fn(n, c);
  w.label = label;
  w.coarse = coarse_of(label);
  return w;
}

}  // namespace

TEST_CASE("median filter basics") {
  CHECK(median_filter3(std::vector<double>{5, 5, 5, 5}) == std::vector<double>{5, 5, 5, 5});
  CHECK(median_filter3(std::vector<double>{1, 2, 3, 4}) == std::vector<double>{1, 2, 3, 4});
  CHECK(median_filter3(std::vector<double>{1, 9, 2, 3}) == std::vector<double>{1, 2, 3, 3});
  CHECK(median_filter3(std::vector<double>{7}) == std::vector<double>{7});
  CHECK_THROWS_AS(median_filter3(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("median filter idempotent on monotone, bounded by input range") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(33);
    for (double& v : x) v = dist(rng);
    const std::vector<double> once = median_filter3(x);
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    for (double v : once) {
      CHECK(v >= lo);
      CHECK(v <= hi);
    }
    std::sort(x.begin(), x.end());
    CHECK(median_filter3(x) == x);  // monotone fixed point
  }
}

TEST_CASE("segment_windows counts and majority labels") {
  std::vector<ImuSample> stream;
  for (int i = 0; i < 40; ++i) {
    ImuSample s;
    s.t = i * 0.02;
    s.label = FineLabel::A1;
    stream.push_back(s);
  }
  CHECK(segment_windows(stream).size() == 2);
  CHECK(segment_windows(std::span(stream).subspan(0, 15)).empty());

  // 9 x A1 + 7 x A2 -> A1; an 8/8 tie resolves to the earlier label.
  for (int i = 0; i < 16; ++i) stream[i].label = i < 7 ? FineLabel::A2 : FineLabel::A1;
  CHECK(segment_windows(std::span(stream).subspan(0, 16)).front().label == FineLabel::A1);
  for (int i = 0; i < 16; ++i) stream[i].label = i < 8 ? FineLabel::B1 : FineLabel::A4;
  CHECK(segment_windows(std::span(stream).subspan(0, 16)).front().label == FineLabel::A4);
}

TEST_CASE("windowing partitions the stream") {
  std::vector<ImuSample> stream;
  for (int i = 0; i < 100; ++i) {
    ImuSample s;
    s.t = i * 0.02;
    s.ax = static_cast<double>(i);  // encode the index
    stream.push_back(s);
  }
  const auto windows = segment_windows(stream);
  CHECK(windows.size() == 100 / 16);
  for (std::size_t w = 0; w < windows.size(); ++w)
    for (std::size_t n = 0; n < kWindowLen; ++n)
      CHECK(windows[w].samples.at(n, 0) == doctest::Approx(w * 16.0 + n));
}

TEST_CASE("standardize") {
  ChannelStats identity;
  identity.mean.fill(0.0);
  identity.stddev.fill(1.0);
  const SampleWindow w = random_window(3);
  const SampleWindow same = standardize(w, identity);
  for (std::size_t i = 0; i < w.samples.numel(); ++i)
    CHECK(same.samples.data[i] == w.samples.data[i]);

  ChannelStats stats;
  stats.mean.fill(1.0);
  stats.stddev.fill(2.0);
  const SampleWindow c = make_window([](std::size_t, std::size_t) { return 3.0; });
  CHECK(standardize(c, stats).samples.at(0, 0) == doctest::Approx(1.0));

  ChannelStats bad = identity;
  bad.mean[2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(standardize(w, bad), std::invalid_argument);
}

TEST_CASE("training split standardized with its own stats is zero mean unit std") {
  std::vector<SampleWindow> windows;
  for (int i = 0; i < 12; ++i) windows.push_back(random_window(100 + i));
  const ChannelStats stats = compute_channel_stats(windows);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (const SampleWindow& w : windows) {
      const SampleWindow z = standardize(w, stats);
      for (std::size_t n = 0; n < kWindowLen; ++n) {
        sum += z.samples.at(n, c);
        sq += z.samples.at(n, c) * z.samples.at(n, c);
      }
    }
    const double count = windows.size() * kWindowLen;
    CHECK(std::abs(sum / count) < 1e-9);
    CHECK(std::abs(std::sqrt(sq / count) - 1.0) < 1e-9);
  }
}

TEST_CASE("fft spectrogram against direct DFT") {
  const SampleWindow zero = make_window([](std::size_t, std::size_t) { return 0.0; });
  for (double v : fft_spectrogram(zero).data) CHECK(v == 0.0);

  const SampleWindow constant = make_window([](std::size_t, std::size_t) { return -2.5; });
  const Tensor cfft = fft_spectrogram(constant);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    CHECK(cfft.at(0, c) == doctest::Approx(16.0 * 2.5).epsilon(1e-12));
    for (std::size_t k = 1; k < kWindowLen; ++k) CHECK(cfft.at(k, c) < 1e-9);
  }

  const SampleWindow cosine = make_window([](std::size_t n, std::size_t) {
    return std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / 16.0);
  });
  const Tensor t = fft_spectrogram(cosine);
  for (std::size_t k = 0; k < kWindowLen; ++k) {
    const double expected = (k == 1 || k == 15) ? 8.0 : 0.0;
    CHECK(std::abs(t.at(k, 0) - expected) < 1e-9);
  }

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SampleWindow w = random_window(seed);
    const Tensor fft = fft_spectrogram(w);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const std::vector<double> x = column(w.samples, c);
      for (std::size_t k = 0; k < kWindowLen; ++k) {
        const double expected = oracles::dft_magnitude(x, k);
        CHECK(std::abs(fft.at(k, c) - expected) <=
              1e-9 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST_CASE("fft Parseval") {
  for (std::uint64_t seed = 40; seed < 50; ++seed) {
    const SampleWindow w = random_window(seed);
    const Tensor fft = fft_spectrogram(w);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double freq = 0.0, time = 0.0;
      for (std::size_t k = 0; k < kWindowLen; ++k) freq += fft.at(k, c) * fft.at(k, c);
      for (std::size_t n = 0; n < kWindowLen; ++n)
        time += w.samples.at(n, c) * w.samples.at(n, c);
      CHECK(freq == doctest::Approx(16.0 * time).epsilon(1e-9));
    }
  }
}

TEST_CASE("haar transform against explicit basis") {
  const SampleWindow constant = make_window([](std::size_t, std::size_t) { return 3.0; });
  const Tensor ct = haar_dwt_spectrogram(constant);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    CHECK(ct.at(0, c) == doctest::Approx(12.0));  // 4v with v = 3
    for (std::size_t k = 1; k < kWindowLen; ++k) CHECK(std::abs(ct.at(k, c)) < 1e-12);
  }

  const SampleWindow spike = make_window([](std::size_t n, std::size_t) {
    return n == 0 ? 1.0 : (n == 1 ? 3.0 : 0.0);
  });
  // First d1 coefficient: (x[0] - x[1]) / sqrt(2) = -sqrt(2).
  CHECK(haar_dwt_spectrogram(spike).at(8, 0) == doctest::Approx(-std::sqrt(2.0)));

  const auto basis = oracles::haar_basis();
  for (std::uint64_t seed = 60; seed < 80; ++seed) {
    const SampleWindow w = random_window(seed);
    const Tensor wt = haar_dwt_spectrogram(w);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const std::vector<double> x = column(w.samples, c);
      for (std::size_t k = 0; k < kWindowLen; ++k) {
        double expected = 0.0;
        for (std::size_t n = 0; n < kWindowLen; ++n) expected += basis[k][n] * x[n];
        CHECK(std::abs(wt.at(k, c) - expected) < 1e-12);
      }
    }
  }
}

TEST_CASE("haar Parseval") {
  for (std::uint64_t seed = 90; seed < 100; ++seed) {
    const SampleWindow w = random_window(seed);
    const Tensor wt = haar_dwt_spectrogram(w);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double coeff = 0.0, time = 0.0;
      for (std::size_t k = 0; k < kWindowLen; ++k) coeff += wt.at(k, c) * wt.at(k, c);
      for (std::size_t n = 0; n < kWindowLen; ++n)
        time += w.samples.at(n, c) * w.samples.at(n, c);
      CHECK(coeff == doctest::Approx(time).epsilon(1e-9));
    }
  }
}

TEST_CASE("gabor spectrogram") {
  CHECK_THROWS_AS(gabor_spectrogram(random_window(1), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(gabor_spectrogram(random_window(1), -1.0), std::invalid_argument);

  const SampleWindow zero = make_window([](std::size_t, std::size_t) { return 0.0; });
  for (double v : gabor_spectrogram(zero).data) CHECK(v == 0.0);

  // Unit impulse: flat magnitude exp(-pi (tau0 - tc)^2 / sigma^2) over k.
  for (std::size_t tau0 : {0u, 5u, 12u}) {
    const SampleWindow impulse = make_window(
        [&](std::size_t n, std::size_t) { return n == tau0 ? 1.0 : 0.0; });
    const Tensor gt = gabor_spectrogram(impulse, 4.0);
    const double d = static_cast<double>(tau0) - 7.5;
    const double expected = std::exp(-std::numbers::pi * d * d / 16.0);
    for (std::size_t k = 0; k < kWindowLen; ++k)
      CHECK(gt.at(k, 0) == doctest::Approx(expected).epsilon(1e-12));
  }

  const SampleWindow cos2 = make_window([](std::size_t n, std::size_t) {
    return std::cos(2.0 * std::numbers::pi * 2.0 * static_cast<double>(n) / 16.0);
  });
  const Tensor gt = gabor_spectrogram(cos2, 4.0);
  std::size_t best = 0;
  for (std::size_t k = 1; k < kWindowLen; ++k)
    if (gt.at(k, 0) > gt.at(best, 0)) best = k;
  CHECK((best == 2 || best == 14));

  for (std::uint64_t seed = 110; seed < 120; ++seed) {
    const SampleWindow w = random_window(seed);
    const Tensor g = gabor_spectrogram(w, 4.0);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const std::vector<double> x = column(w.samples, c);
      for (std::size_t k = 0; k < kWindowLen; ++k) {
        const double expected = oracles::gabor_magnitude(x, k, 4.0);
        CHECK(std::abs(g.at(k, c) - expected) <=
              1e-9 * std::max(1.0, std::abs(expected)));
      }
    }
  }
}

TEST_CASE("transform linearity under input scaling") {
  const SampleWindow w = random_window(123);
  SampleWindow scaled = w;
  const double alpha = -2.5;
  for (double& v : scaled.samples.data) v *= alpha;

  const Tensor fft = fft_spectrogram(w), fft_s = fft_spectrogram(scaled);
  const Tensor wt = haar_dwt_spectrogram(w), wt_s = haar_dwt_spectrogram(scaled);
  const Tensor gt = gabor_spectrogram(w), gt_s = gabor_spectrogram(scaled);
  for (std::size_t i = 0; i < fft.numel(); ++i) {
    CHECK(fft_s.data[i] == doctest::Approx(std::abs(alpha) * fft.data[i]).epsilon(1e-9));
    CHECK(wt_s.data[i] == doctest::Approx(alpha * wt.data[i]).epsilon(1e-9));
    CHECK(gt_s.data[i] == doctest::Approx(std::abs(alpha) * gt.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("pseudoimage_set bundles, stays deterministic, magnitudes nonnegative") {
  const SampleWindow zero = make_window([](std::size_t, std::size_t) { return 0.0; });
  const PseudoImageSet zs = pseudoimage_set(zero);
  for (double v : zs.fft.data) CHECK(v == 0.0);
  for (double v : zs.wt.data) CHECK(v == 0.0);
  for (double v : zs.gt.data) CHECK(v == 0.0);

  const SampleWindow w = random_window(321);
  const PseudoImageSet a = pseudoimage_set(w);
  const PseudoImageSet b = pseudoimage_set(w);
  CHECK(a.fft.data == b.fft.data);
  CHECK(a.wt.data == b.wt.data);
  CHECK(a.gt.data == b.gt.data);
  for (double v : a.fft.data) CHECK(v >= 0.0);
  for (double v : a.gt.data) CHECK(v >= 0.0);
  CHECK(a.source_label == w.label);
}

TEST_CASE("imu csv round trip") {
  const auto path = std::filesystem::temp_directory_path() / "hppi_stream_test.csv";
  std::vector<ImuSample> stream;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    ImuSample s;
    s.t = i * 0.02;
    for (std::size_t c = 0; c < kNumChannels; ++c) s.set_channel(c, dist(rng));
    s.label = kAllFine[static_cast<std::size_t>(i) % kNumFine];
    stream.push_back(s);
  }
  write_imu_csv(path, stream);
  const std::vector<ImuSample> back = read_imu_csv(path);
  REQUIRE(back.size() == stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    CHECK(back[i].t == stream[i].t);
    for (std::size_t c = 0; c < kNumChannels; ++c)
      CHECK(back[i].channel(c) == stream[i].channel(c));
    CHECK(back[i].label == stream[i].label);
  }
  std::filesystem::remove(path);
}
