#include "hppi/resources.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "hppi/model_zoo.hpp"

namespace hppi {

std::uint64_t macc_of_node(const Node& node, const ModelGraph& graph) {
  const auto out_elems = [&]() { return Tensor::numel_of(node.out_shape); };
  const auto in_elems = [&]() {
    return Tensor::numel_of(
        graph.nodes[static_cast<std::size_t>(node.spec.inputs[0])].out_shape);
  };
  const std::uint64_t k = static_cast<std::uint64_t>(node.spec.kernel);
  switch (node.spec.type) {
    case LayerType::Conv2d:
      return k * k * node.spec.in_width * node.spec.out_width *
             node.out_shape[0] * node.out_shape[1];
    case LayerType::Dsc:
      return (k * k * node.spec.in_width + node.spec.in_width * node.spec.out_width) *
             node.out_shape[0] * node.out_shape[1];
    case LayerType::Dense:
      return static_cast<std::uint64_t>(node.spec.in_width) * node.spec.out_width;
    case LayerType::Lstm: {
      const std::uint64_t t =
          graph.nodes[static_cast<std::size_t>(node.spec.inputs[0])].out_shape[0];
      return t * 4 * (node.spec.in_width + node.spec.out_width) * node.spec.out_width;
    }
    case LayerType::BatchNorm:
      return 2 * out_elems();
    case LayerType::Eca:
      return k * node.spec.in_width + node.spec.in_width;
    case LayerType::MaxPool:
      return k * k * out_elems();
    case LayerType::Gap:
    case LayerType::GapFrames:
      return in_elems();
    default:
      return 0;  // input, relu, softmax, concat, reshape, simplex norm
  }
}

std::uint64_t macc_of(const ModelGraph& graph) {
  std::uint64_t total = 0;
  for (const Node& node : graph.nodes) total += macc_of_node(node, graph);
  return total;
}

double ram_of_kib(const ModelGraph& graph) {
  const std::size_t n = graph.nodes.size();
  if (n == 0) return 0.0;

  // Death step of each node's activation: the last step that reads it. The
  // final output stays live through the last step.
  std::vector<std::size_t> death(n);
  for (std::size_t i = 0; i < n; ++i) death[i] = i;
  for (std::size_t i = 0; i < n; ++i)
    for (int p : graph.nodes[i].spec.inputs)
      death[static_cast<std::size_t>(p)] =
          std::max(death[static_cast<std::size_t>(p)], i);
  death[n - 1] = n - 1;

  double peak_bytes = 0.0;
  for (std::size_t step = 0; step < n; ++step) {
    double live = 0.0;
    for (std::size_t i = 0; i <= step; ++i)
      if (death[i] >= step)
        live += 8.0 * static_cast<double>(Tensor::numel_of(graph.nodes[i].out_shape));
    peak_bytes = std::max(peak_bytes, live);
  }

  double scratch = 0.0;
  for (const Node& node : graph.nodes) {
    if (node.spec.type == LayerType::Lstm)
      scratch = std::max(scratch, 8.0 * 6.0 * static_cast<double>(node.spec.out_width));
    else if (node.spec.type == LayerType::Eca)
      scratch = std::max(scratch, 8.0 * static_cast<double>(node.spec.in_width));
  }
  return (peak_bytes + scratch) / 1024.0;
}

double rom_of_kib(const ModelGraph& graph, bool quantized) {
  const ModelGraph* g = &graph;
  return rom_of_kib(std::span<const ModelGraph* const>(&g, 1), quantized);
}

double rom_of_kib(std::span<const ModelGraph* const> graphs, bool quantized) {
  return static_cast<double>(serialize_models(graphs, quantized).size()) / 1024.0;
}

void ModuleMetrics::validate() const {
  if (!(acc >= 0.0 && acc <= 1.0))
    throw std::invalid_argument("module metrics: acc must be in [0, 1]");
  if (ram_kib < 0.0 || rom_kib < 0.0)
    throw std::invalid_argument("module metrics: ram/rom must be >= 0");
}

SystemMetrics expected_system_metrics(const ModuleMetrics& fl, const ModuleMetrics& plmn,
                                      const ModuleMetrics& stationary, double p) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument("expected_system_metrics: p must be in [0, 1]");
  fl.validate();
  plmn.validate();
  stationary.validate();
  SystemMetrics m;
  m.p = p;
  m.expected_acc = fl.acc * (p * plmn.acc + (1.0 - p) * stationary.acc);
  m.expected_ram_kib = fl.ram_kib + p * plmn.ram_kib + (1.0 - p) * stationary.ram_kib;
  m.total_rom_kib = fl.rom_kib + plmn.rom_kib + stationary.rom_kib;
  m.total_macc = fl.macc + plmn.macc + stationary.macc;
  return m;
}

namespace {

std::string format_double(double v, int decimals) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(decimals);
  ss << v;
  return ss.str();
}

}  // namespace

std::string resource_report_csv(std::span<const ModuleMetrics> modules,
                                const SystemMetrics& system) {
  std::ostringstream out;
  out << "module,acc,ram_kib,rom_kib,macc\n";
  for (const ModuleMetrics& m : modules)
    out << m.name << ',' << format_double(m.acc, 4) << ',' << format_double(m.ram_kib, 2)
        << ',' << format_double(m.rom_kib, 2) << ',' << m.macc << '\n';
  out << "system_p" << format_double(system.p, 2) << ','
      << format_double(system.expected_acc, 4) << ','
      << format_double(system.expected_ram_kib, 2) << ','
      << format_double(system.total_rom_kib, 2) << ',' << system.total_macc << '\n';
  return out.str();
}

std::string resource_report_table(std::span<const ModuleMetrics> modules,
                                  const SystemMetrics& system) {
  std::ostringstream out;
  out << "module        acc       RAM (KiB)   ROM (KiB)   MACC\n";
  for (const ModuleMetrics& m : modules) {
    out << m.name;
    for (std::size_t i = m.name.size(); i < 14; ++i) out << ' ';
    const std::string acc = format_double(m.acc * 100.0, 2) + "%";
    out << acc;
    for (std::size_t i = acc.size(); i < 10; ++i) out << ' ';
    const std::string ram = format_double(m.ram_kib, 1);
    out << ram;
    for (std::size_t i = ram.size(); i < 12; ++i) out << ' ';
    const std::string rom = format_double(m.rom_kib, 1);
    out << rom;
    for (std::size_t i = rom.size(); i < 12; ++i) out << ' ';
    out << m.macc << '\n';
  }
  out << "expected system metrics at p = " << format_double(system.p, 2) << ":\n";
  out << "  ACC  " << format_double(system.expected_acc * 100.0, 2) << "%\n";
  out << "  RAM  " << format_double(system.expected_ram_kib, 2) << " KiB\n";
  out << "  ROM  " << format_double(system.total_rom_kib, 1) << " KiB\n";
  out << "  MACC " << system.total_macc << '\n';
  return out.str();
}

}  // namespace hppi
