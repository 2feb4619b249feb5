#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "hppi/resources.hpp"
#include "hppi/synth.hpp"
#include "hppi/train.hpp"

namespace hppi {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Line-oriented `key=value` experiment configuration. Blank lines and lines
// starting with '#' are ignored; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 42;
  int rate_hz = 50;
  std::size_t windows_per_class = 120;
  double train_ratio = 0.7;
  double val_ratio = 0.15;
  double test_ratio = 0.15;
  double learning_rate = 0.0001;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double gabor_sigma = 4.0;
  double p = 0.5;
  std::size_t stream_windows = 1000;

  // Optional per-module metric injection for the resources command; used
  // only when all twelve values are present.
  std::optional<ModuleMetrics> fl_metrics;
  std::optional<ModuleMetrics> plmn_metrics;
  std::optional<ModuleMetrics> s_metrics;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_string(const std::string& text);

  bool has_injected_metrics() const { return fl_metrics && plmn_metrics && s_metrics; }
  TrainConfig train_config() const;
  SplitRatios split_ratios() const;
};

}  // namespace hppi
