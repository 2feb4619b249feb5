#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hppi/synth.hpp"

using namespace hppi;

namespace {

double channel_std(std::span<const ImuSample> stream, std::size_t c) {
  double mean = 0.0;
  for (const ImuSample& s : stream) mean += s.channel(c);
  mean /= static_cast<double>(stream.size());
  double var = 0.0;
  for (const ImuSample& s : stream) {
    const double d = s.channel(c) - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(stream.size()));
}

double windowed_variance(std::span<const ImuSample> stream, std::size_t c) {
  const auto windows = segment_windows(stream);
  double acc = 0.0;
  for (const SampleWindow& w : windows) {
    double mean = 0.0;
    for (std::size_t n = 0; n < kWindowLen; ++n) mean += w.samples.at(n, c);
    mean /= kWindowLen;
    double var = 0.0;
    for (std::size_t n = 0; n < kWindowLen; ++n) {
      const double d = w.samples.at(n, c) - mean;
      var += d * d;
    }
    acc += var / kWindowLen;
  }
  return acc / static_cast<double>(windows.size());
}

}  // namespace

TEST_CASE("generator is deterministic and honors the rate") {
  for (int rate : kSupportedRates) {
    const auto a = generate_activity_stream(FineLabel::A1, 4.0, rate, 7);
    const auto b = generate_activity_stream(FineLabel::A1, 4.0, rate, 7);
    REQUIRE(a.size() == b.size());
    CHECK(std::llabs(static_cast<long long>(a.size()) - 4LL * rate) <= 1);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].t == b[i].t);
      for (std::size_t c = 0; c < kNumChannels; ++c)
        CHECK(a[i].channel(c) == b[i].channel(c));
    }
  }
  const auto c = generate_activity_stream(FineLabel::A1, 4.0, 50, 8);
  const auto d = generate_activity_stream(FineLabel::A1, 4.0, 50, 7);
  bool differs = false;
  for (std::size_t i = 0; i < c.size() && !differs; ++i)
    if (c[i].ax != d[i].ax) differs = true;
  CHECK(differs);

  CHECK_THROWS_AS(generate_activity_stream(FineLabel::A1, 4.0, 33, 7),
                  std::invalid_argument);
  CHECK_THROWS_AS(generate_activity_stream(FineLabel::A1, -1.0, 50, 7),
                  std::invalid_argument);
}

TEST_CASE("all generated values finite, labels and timestamps valid") {
  for (FineLabel label : kAllFine) {
    const auto stream = generate_activity_stream(label, 5.0, 50, 11);
    double prev = -1.0;
    for (const ImuSample& s : stream) {
      CHECK(s.label == label);
      CHECK(s.t > prev);
      prev = s.t;
      for (std::size_t c = 0; c < kNumChannels; ++c) CHECK(std::isfinite(s.channel(c)));
    }
  }
}

TEST_CASE("standing is an order of magnitude stiller than running") {
  const auto b1 = generate_activity_stream(FineLabel::B1, 10.0, 50, 13);
  const auto a2 = generate_activity_stream(FineLabel::A2, 10.0, 50, 13);
  CHECK(channel_std(b1, 0) < 0.1 * channel_std(a2, 0));
}

TEST_CASE("stationary windowed variance at least 10x below dynamic, every accel axis") {
  std::vector<FineLabel> stationary = {FineLabel::B1, FineLabel::B2};
  std::vector<FineLabel> dynamic = {FineLabel::A1, FineLabel::A2, FineLabel::A3,
                                    FineLabel::A4, FineLabel::C1};
  for (std::size_t c = 0; c < 3; ++c) {  // accelerometer axes
    double worst_stationary = 0.0;
    for (FineLabel l : stationary)
      worst_stationary = std::max(
          worst_stationary, windowed_variance(generate_activity_stream(l, 20.0, 50, 17), c));
    for (FineLabel l : dynamic) {
      const double dyn = windowed_variance(generate_activity_stream(l, 20.0, 50, 17), c);
      CHECK(dyn >= 10.0 * worst_stationary);
    }
  }
}

TEST_CASE("cycling concentrates gz energy in the configured bin") {
  const auto stream = generate_activity_stream(FineLabel::C1, 20.0, 50, 19);
  const auto windows = segment_windows(stream);
  // 3.125 Hz at 50 Hz over 16 samples lands exactly on bin 1.
  std::size_t hits = 0;
  for (const SampleWindow& w : windows) {
    const Tensor fft = fft_spectrogram(w);
    std::size_t best = 0;
    for (std::size_t k = 1; k <= 8; ++k)
      if (fft.at(k, 5) > fft.at(best, 5)) best = k;
    if (best == 1) ++hits;
  }
  CHECK(hits == windows.size());
}

TEST_CASE("gravity orientation separates standing from lying") {
  const auto b1 = generate_activity_stream(FineLabel::B1, 5.0, 50, 23);
  const auto b2 = generate_activity_stream(FineLabel::B2, 5.0, 50, 23);
  double b1_az = 0.0, b2_ax = 0.0, b1_ax = 0.0, b2_az = 0.0;
  for (const ImuSample& s : b1) {
    b1_az += s.az;
    b1_ax += s.ax;
  }
  for (const ImuSample& s : b2) {
    b2_ax += s.ax;
    b2_az += s.az;
  }
  CHECK(b1_az / b1.size() == doctest::Approx(9.8).epsilon(0.05));
  CHECK(b2_ax / b2.size() == doctest::Approx(9.8).epsilon(0.05));
  CHECK(std::abs(b1_ax / b1.size()) < 0.5);
  CHECK(std::abs(b2_az / b2.size()) < 0.5);
}

TEST_CASE("make_dataset: split arithmetic and class balance") {
  const DatasetSplit split =
      make_dataset(default_profiles(), 100, SplitRatios{0.7, 0.15, 0.15}, 41);
  CHECK(split.train.size() == 490);
  CHECK(split.val.size() == 105);
  CHECK(split.test.size() == 105);
  for (FineLabel label : kAllFine) {
    const auto count = [&](const std::vector<DatasetEntry>& v) {
      return std::count_if(v.begin(), v.end(),
                           [&](const DatasetEntry& e) { return e.label == label; });
    };
    CHECK(count(split.train) == 70);
    CHECK(count(split.val) == 15);
    CHECK(count(split.test) == 15);
  }
  CHECK_THROWS_AS(make_dataset(default_profiles(), 100, SplitRatios{0.7, 0.2, 0.2}, 41),
                  std::invalid_argument);
}

TEST_CASE("make_dataset: no leakage, val/test means off-zero") {
  const DatasetSplit split =
      make_dataset(default_profiles(), 40, SplitRatios{0.7, 0.15, 0.15}, 43);
  // Train standardization statistics came from the train split only, so the
  // val/test FFT DC bins (16 x |window mean|) are not centered like train's.
  const auto dc_mean = [](const std::vector<DatasetEntry>& v) {
    double acc = 0.0;
    for (const DatasetEntry& e : v)
      for (std::size_t c = 0; c < kNumChannels; ++c) acc += e.images.fft.at(0, c);
    return acc / static_cast<double>(v.size() * kNumChannels);
  };
  CHECK(dc_mean(split.val) > 0.0);  // nonzero by construction

  // Determinism of the whole assembly.
  const DatasetSplit again =
      make_dataset(default_profiles(), 40, SplitRatios{0.7, 0.15, 0.15}, 43);
  REQUIRE(again.train.size() == split.train.size());
  for (std::size_t i = 0; i < split.train.size(); ++i)
    CHECK(again.train[i].images.fft.data == split.train[i].images.fft.data);
}

TEST_CASE("manifest lists counts per class") {
  const DatasetSplit split =
      make_dataset(default_profiles(), 20, SplitRatios{0.7, 0.15, 0.15}, 47);
  const std::string manifest = dataset_manifest(split);
  CHECK(manifest.find("seed 47") != std::string::npos);
  CHECK(manifest.find("A1 train=14 val=3 test=3") != std::string::npos);
  CHECK(manifest.find("C1") != std::string::npos);
}

TEST_CASE("graph sample conversion per label space") {
  const DatasetSplit split =
      make_dataset(default_profiles(), 10, SplitRatios{0.7, 0.15, 0.15}, 53);
  const auto coarse = graph_samples(split.train, LabelSpace::Coarse);
  CHECK(coarse.size() == split.train.size());
  const auto a_only = graph_samples(split.train, LabelSpace::FineA);
  CHECK(a_only.size() == 4 * 7);
  const auto b_only = graph_samples(split.train, LabelSpace::FineB);
  CHECK(b_only.size() == 2 * 7);
  for (const GraphSample& s : a_only) {
    CHECK(s.label >= 0);
    CHECK(s.label < 4);
  }
  for (const GraphSample& s : b_only) {
    CHECK(s.label >= 0);
    CHECK(s.label < 2);
  }
}
