#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hppi/graph.hpp"

namespace hppi {

// Per-layer MACC conventions. Conv, DSC, dense and LSTM use their closed
// forms; the remaining layers have no universal convention, so these are
// fixed here:
//   batch norm  2 per output element
//   ECA         kE*C + C
//   max pool    pool^2 per output element
//   GAP / frame GAP  1 per input element
//   relu / softmax / concat / reshape / input  0
std::uint64_t macc_of_node(const Node& node, const ModelGraph& graph);
std::uint64_t macc_of(const ModelGraph& graph);

// Peak live activation bytes over the graph's execution order (each
// activation is live from production to its last consumer), plus the largest
// per-layer scratch workspace (LSTM: 6H doubles; ECA: C doubles; others
// none). Parameters are excluded; they are ROM. KiB = 1024 bytes.
double ram_of_kib(const ModelGraph& graph);

// Serialized parameter bytes (the exact model-container size), float64 or
// int8 per the flag. The span overload counts tensors shared across graphs
// once, the deployment-bundle view.
double rom_of_kib(const ModelGraph& graph, bool quantized = false);
double rom_of_kib(std::span<const ModelGraph* const> graphs, bool quantized = false);

struct ModuleMetrics {
  std::string name;
  double acc = 0.0;       // fraction in [0, 1]
  double ram_kib = 0.0;
  double rom_kib = 0.0;
  std::uint64_t macc = 0;

  void validate() const;
};

struct SystemMetrics {
  double expected_acc = 0.0;
  double expected_ram_kib = 0.0;
  double total_rom_kib = 0.0;
  std::uint64_t total_macc = 0;
  double p = 0.0;  // probability that a window proceeds to the dynamic branch
};

// Expected system metrics under activation probability p:
//   ACC = ACC_FL * (p*ACC_PLMN + (1-p)*ACC_S)
//   RAM = RAM_FL + p*RAM_PLMN + (1-p)*RAM_S
// ROM and MACC are sums over the three modules.
SystemMetrics expected_system_metrics(const ModuleMetrics& fl, const ModuleMetrics& plmn,
                                      const ModuleMetrics& stationary, double p);

// `module,acc,ram_kib,rom_kib,macc` rows plus a system summary line.
std::string resource_report_csv(std::span<const ModuleMetrics> modules,
                                const SystemMetrics& system);
std::string resource_report_table(std::span<const ModuleMetrics> modules,
                                  const SystemMetrics& system);

}  // namespace hppi
