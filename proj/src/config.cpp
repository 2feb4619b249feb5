#include "hppi/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace hppi {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct InjectedMetrics {
  std::optional<double> acc, ram, rom;
  std::optional<std::uint64_t> macc;

  std::optional<ModuleMetrics> build(const std::string& name) const {
    if (!acc && !ram && !rom && !macc) return std::nullopt;
    if (!(acc && ram && rom && macc))
      throw ConfigError("incomplete metric injection for module " + name);
    ModuleMetrics m;
    m.name = name;
    m.acc = *acc;
    m.ram_kib = *ram;
    m.rom_kib = *rom;
    m.macc = *macc;
    return m;
  }
};

}  // namespace

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  InjectedMetrics fl, plmn, st;

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty())
      throw ConfigError("config key '" + key + "' has no value");

    const auto as_double = [&]() {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + value + "'");
      }
    };
    const auto as_u64 = [&]() {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument("");
        return static_cast<std::uint64_t>(v);
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + value + "'");
      }
    };

    if (key == "seed") cfg.seed = as_u64();
    else if (key == "rate_hz") cfg.rate_hz = static_cast<int>(as_u64());
    else if (key == "windows_per_class") cfg.windows_per_class = as_u64();
    else if (key == "train_ratio") cfg.train_ratio = as_double();
    else if (key == "val_ratio") cfg.val_ratio = as_double();
    else if (key == "test_ratio") cfg.test_ratio = as_double();
    else if (key == "lr") cfg.learning_rate = as_double();
    else if (key == "batch_size") cfg.batch_size = as_u64();
    else if (key == "max_epochs") cfg.max_epochs = as_u64();
    else if (key == "patience") cfg.patience = as_u64();
    else if (key == "gabor_sigma") cfg.gabor_sigma = as_double();
    else if (key == "p") cfg.p = as_double();
    else if (key == "stream_windows") cfg.stream_windows = as_u64();
    else if (key == "fl_acc") fl.acc = as_double();
    else if (key == "fl_ram_kib") fl.ram = as_double();
    else if (key == "fl_rom_kib") fl.rom = as_double();
    else if (key == "fl_macc") fl.macc = as_u64();
    else if (key == "plmn_acc") plmn.acc = as_double();
    else if (key == "plmn_ram_kib") plmn.ram = as_double();
    else if (key == "plmn_rom_kib") plmn.rom = as_double();
    else if (key == "plmn_macc") plmn.macc = as_u64();
    else if (key == "s_acc") st.acc = as_double();
    else if (key == "s_ram_kib") st.ram = as_double();
    else if (key == "s_rom_kib") st.rom = as_double();
    else if (key == "s_macc") st.macc = as_u64();
    else throw ConfigError("unknown config key '" + key + "'");
  }

  cfg.fl_metrics = fl.build("first_layer");
  cfg.plmn_metrics = plmn.build("plmn");
  cfg.s_metrics = st.build("stationary");
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.learning_rate = learning_rate;
  t.batch_size = batch_size;
  t.max_epochs = max_epochs;
  t.early_stop_patience = patience;
  t.seed = seed;
  return t;
}

SplitRatios RunConfig::split_ratios() const {
  return SplitRatios{train_ratio, val_ratio, test_ratio};
}

}  // namespace hppi
