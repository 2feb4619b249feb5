// Command-line driver wiring the pipeline into reproducible experiments.
// Every artifact lands under --out; all randomness comes from the config
// seed, so rerunning a command reproduces its outputs byte for byte.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hppi/config.hpp"
#include "hppi/explain.hpp"
#include "hppi/model_zoo.hpp"
#include "hppi/quantize.hpp"
#include "hppi/resources.hpp"
#include "hppi/runtime.hpp"
#include "hppi/synth.hpp"
#include "hppi/train.hpp"

namespace fs = std::filesystem;
using namespace hppi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct Context {
  RunConfig cfg;
  fs::path out;
};

Context make_context(const std::string& config_path, const std::string& out_dir) {
  Context ctx;
  if (!config_path.empty()) ctx.cfg = RunConfig::from_file(config_path);
  ctx.out = out_dir;
  fs::create_directories(ctx.out);
  return ctx;
}

DatasetSplit dataset_of(const RunConfig& cfg) {
  return make_dataset(default_profiles(), cfg.windows_per_class, cfg.split_ratios(),
                      cfg.seed, cfg.rate_hz, cfg.gabor_sigma);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

void write_confusion_csv(const fs::path& path, const EvalResult& result) {
  std::ostringstream out;
  out << "true\\pred";
  for (std::size_t j = 0; j < result.confusion.size(); ++j) out << ',' << j;
  out << '\n';
  for (std::size_t i = 0; i < result.confusion.size(); ++i) {
    out << i;
    for (std::size_t j = 0; j < result.confusion.size(); ++j)
      out << ',' << result.confusion[i][j];
    out << '\n';
  }
  write_text(path, out.str());
}

LabelSpace label_space_of(const std::string& module) {
  if (module == "first") return LabelSpace::Coarse;
  if (module == "plmn") return LabelSpace::FineA;
  if (module == "stationary") return LabelSpace::FineB;
  throw std::runtime_error("unknown module: " + module);
}

fs::path model_path(const Context& ctx, const std::string& module,
                    const std::string& variant = "full") {
  if (module == "first") return ctx.out / "first.hppi";
  if (module == "stationary") return ctx.out / "stationary.hppi";
  if (module == "plmn")
    return ctx.out / (variant == "full" ? "plmn.hppi" : "plmn_" + variant + ".hppi");
  throw std::runtime_error("unknown module: " + module);
}

ModelGraph load_required(const fs::path& path) {
  if (!fs::exists(path))
    throw std::runtime_error("model file missing: " + path.string() +
                             " (run `hppi train` first)");
  return load_model(path);
}

int cmd_synth(const Context& ctx) {
  const double duration = static_cast<double>(ctx.cfg.windows_per_class * kWindowLen) /
                          ctx.cfg.rate_hz;
  const fs::path streams = ctx.out / "streams";
  fs::create_directories(streams);
  for (FineLabel label : kAllFine) {
    const auto stream = generate_activity_stream(label, duration, ctx.cfg.rate_hz,
                                                 ctx.cfg.seed, default_profiles());
    write_imu_csv(streams / (std::string(to_string(label)) + ".csv"), stream);
  }
  const DatasetSplit split = dataset_of(ctx.cfg);
  write_text(ctx.out / "dataset_manifest.txt", dataset_manifest(split));
  std::cout << dataset_manifest(split);
  return kExitOk;
}

int cmd_train(const Context& ctx, const std::string& module, const std::string& variant) {
  const DatasetSplit data = dataset_of(ctx.cfg);
  const TrainConfig cfg = ctx.cfg.train_config();

  if (module == "first") {
    ModelGraph fl = build_first_layer(3, ctx.cfg.seed);
    const auto tr = graph_samples(data.train, LabelSpace::Coarse);
    const auto va = graph_samples(data.val, LabelSpace::Coarse);
    const TrainHistory h = train_model(fl, tr, va, cfg);
    save_model(fl, model_path(ctx, module));
    write_history_csv(ctx.out / "history_first.csv", h);
    std::cout << "first_layer: epochs " << h.stopped_epoch << ", val acc "
              << h.val_acc.back() << "\n";
    return kExitOk;
  }
  if (module == "plmn") {
    ModelGraph plmn = build_plmn(parse_plmn_variant(variant), ctx.cfg.seed);
    const auto tr = graph_samples(data.train, LabelSpace::FineA);
    const auto va = graph_samples(data.val, LabelSpace::FineA);
    const TrainHistory h = train_model(plmn, tr, va, cfg);
    save_model(plmn, model_path(ctx, module, variant));
    write_history_csv(ctx.out / ("history_plmn_" + variant + ".csv"), h);
    std::cout << "plmn (" << variant << "): epochs " << h.stopped_epoch << ", val acc "
              << h.val_acc.back() << "\n";
    return kExitOk;
  }
  if (module == "stationary") {
    ModelGraph fl = load_required(model_path(ctx, "first"));
    ModelGraph st = build_stationary(fl, ctx.cfg.seed + 1);
    const auto ctr = graph_samples(data.train, LabelSpace::Coarse);
    const auto cva = graph_samples(data.val, LabelSpace::Coarse);
    const auto btr = graph_samples(data.train, LabelSpace::FineB);
    const auto bva = graph_samples(data.val, LabelSpace::FineB);
    const SharedBackboneHistories h =
        train_stationary_shared(fl, st, ctr, cva, btr, bva, cfg);
    // The backbone is shared, so the first-layer file is refreshed too.
    save_model(st, model_path(ctx, "stationary"));
    save_model(fl, model_path(ctx, "first"));
    write_history_csv(ctx.out / "history_stationary.csv", h.stationary);
    write_history_csv(ctx.out / "history_first_recalibration.csv", h.head_recalibration);
    std::cout << "stationary: epochs " << h.stationary.stopped_epoch << ", val acc "
              << h.stationary.val_acc.back() << " (first-layer head recalibrated)\n";
    return kExitOk;
  }
  throw std::runtime_error("unknown module: " + module);
}

int cmd_eval(const Context& ctx, const std::string& module, const std::string& variant) {
  const ModelGraph g = load_required(model_path(ctx, module, variant));
  const DatasetSplit data = dataset_of(ctx.cfg);
  const auto test = graph_samples(data.test, label_space_of(module));
  const EvalResult r = evaluate(g, test);
  write_confusion_csv(ctx.out / ("confusion_" + module + ".csv"), r);
  std::cout << module << " test accuracy " << r.accuracy << " over " << test.size()
            << " windows\n";
  return kExitOk;
}

int cmd_quantize(const Context& ctx, const std::string& module, const std::string& variant) {
  const ModelGraph g = load_required(model_path(ctx, module, variant));
  const DatasetSplit data = dataset_of(ctx.cfg);
  const auto test = graph_samples(data.test, label_space_of(module));
  const QuantizeResult r = quantize_model(g, test);

  fs::path out_file = model_path(ctx, module, variant);
  out_file.replace_extension(".int8.hppi");
  std::ofstream f(out_file, std::ios::binary);
  f.write(reinterpret_cast<const char*>(r.file_bytes.data()),
          static_cast<std::streamsize>(r.file_bytes.size()));

  std::ostringstream report;
  report << "float bytes " << r.report.float_bytes << "\n"
         << "int8 bytes " << r.report.int8_bytes << "\n"
         << "size ratio " << static_cast<double>(r.report.int8_bytes) / r.report.float_bytes
         << "\n"
         << "float accuracy " << r.report.float_accuracy << "\n"
         << "int8 accuracy " << r.report.int8_accuracy << "\n"
         << "accuracy delta " << r.report.accuracy_delta << "\n"
         << "argmax preserved " << r.report.argmax_preserved << "\n";
  write_text(ctx.out / ("quantize_" + module + ".txt"), report.str());
  std::cout << report.str();
  return kExitOk;
}

int cmd_resources(const Context& ctx, double p) {
  std::vector<ModuleMetrics> modules;
  if (ctx.cfg.has_injected_metrics()) {
    modules = {*ctx.cfg.fl_metrics, *ctx.cfg.plmn_metrics, *ctx.cfg.s_metrics};
  } else {
    const ModelGraph fl = load_required(model_path(ctx, "first"));
    const ModelGraph plmn = load_required(model_path(ctx, "plmn"));
    const ModelGraph st = load_required(model_path(ctx, "stationary"));
    const DatasetSplit data = dataset_of(ctx.cfg);
    const auto metrics = [&](const ModelGraph& g, const std::string& name,
                             LabelSpace space) {
      ModuleMetrics m;
      m.name = name;
      m.acc = evaluate(g, graph_samples(data.test, space)).accuracy;
      m.ram_kib = ram_of_kib(g);
      m.rom_kib = rom_of_kib(g);
      m.macc = macc_of(g);
      return m;
    };
    modules = {metrics(fl, "first_layer", LabelSpace::Coarse),
               metrics(plmn, "plmn", LabelSpace::FineA),
               metrics(st, "stationary", LabelSpace::FineB)};
  }
  const SystemMetrics sys = expected_system_metrics(modules[0], modules[1], modules[2], p);
  write_text(ctx.out / "resources.csv", resource_report_csv(modules, sys));
  std::cout << resource_report_table(modules, sys);
  return kExitOk;
}

int cmd_stream(const Context& ctx, std::size_t windows) {
  const ModelGraph fl = load_required(model_path(ctx, "first"));
  const ModelGraph plmn = load_required(model_path(ctx, "plmn"));
  const ModelGraph st = load_required(model_path(ctx, "stationary"));
  const ModelSet models{&fl, &plmn, &st};
  const DatasetSplit data = dataset_of(ctx.cfg);

  const RamTable table{ram_of_kib(fl), ram_of_kib(plmn), ram_of_kib(st)};
  // Mixed schedule covering all seven activities, starting on a dynamic
  // window so a second-stage module is resident from the first event.
  const std::vector<FineLabel> schedule = {
      FineLabel::A1, FineLabel::B1, FineLabel::A2, FineLabel::C1,
      FineLabel::A3, FineLabel::B2, FineLabel::A4};
  SyntheticSource source(schedule, windows, ctx.cfg.seed);
  const StreamRunResult run =
      stream_run(source, models, data.stats, table, ctx.cfg.gabor_sigma);
  write_stream_csv(ctx.out / "stream_events.csv", run.events);

  double ram_sum = 0.0;
  std::size_t plmn_windows = 0;
  for (const StreamEvent& e : run.events) {
    ram_sum += e.resident_ram_kib;
    if (e.coarse == CoarseLabel::A) ++plmn_windows;
  }
  std::cout << "windows " << run.events.size() << ", loads+unloads "
            << run.residency.log.size() << ", peak RAM " << run.residency.peak_ram_kib
            << " KiB, mean resident RAM " << ram_sum / run.events.size()
            << " KiB, PLMN fraction "
            << static_cast<double>(plmn_windows) / run.events.size() << "\n";
  return kExitOk;
}

int cmd_explain(const Context& ctx) {
  const ModelGraph plmn = load_required(model_path(ctx, "plmn"));
  const DatasetSplit data = dataset_of(ctx.cfg);
  const AttributionReport report =
      build_attribution_report(plmn, data.test, ctx.cfg.seed);
  write_text(ctx.out / "attribution.csv", attribution_report_csv(report));
  std::cout << attribution_report_text(report);
  return kExitOk;
}

int cmd_ablate(const Context& ctx) {
  const DatasetSplit data = dataset_of(ctx.cfg);
  const TrainConfig cfg = ctx.cfg.train_config();
  const auto tr = graph_samples(data.train, LabelSpace::FineA);
  const auto va = graph_samples(data.val, LabelSpace::FineA);
  const auto te = graph_samples(data.test, LabelSpace::FineA);

  // Table order: single branches, attention-free, standard-conv, full.
  const PlmnVariant variants[6] = {PlmnVariant::SingleFft, PlmnVariant::SingleWt,
                                   PlmnVariant::SingleGt, PlmnVariant::NoAttention,
                                   PlmnVariant::Plcn, PlmnVariant::Full};
  std::ostringstream csv;
  csv << "variant,accuracy,rom_kib\n";
  std::cout << "variant        accuracy   ROM (KiB)\n";
  for (PlmnVariant v : variants) {
    ModelGraph g = build_plmn(v, ctx.cfg.seed);
    train_model(g, tr, va, cfg);
    const double acc = evaluate(g, te).accuracy;
    const double rom = rom_of_kib(g);
    csv << to_string(v) << ',' << acc << ',' << rom << '\n';
    std::cout << std::string(to_string(v)) << std::string(15 - to_string(v).size(), ' ')
              << acc << "     " << rom << "\n";
  }
  write_text(ctx.out / "ablation.csv", csv.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical multi-spectral HAR pipeline"};
  app.require_subcommand(1);
  app.fallthrough(true);  // --config/--out may follow the subcommand

  std::string config_path, out_dir = "out";
  app.add_option("--config", config_path, "key=value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (default: out)");

  auto* synth = app.add_subcommand("synth", "generate synthetic IMU streams and dataset");

  std::string train_module, train_variant = "full";
  auto* train = app.add_subcommand("train", "train one module");
  train->add_option("--module", train_module, "first | plmn | stationary")
      ->required()
      ->check(CLI::IsMember({"first", "plmn", "stationary"}));
  train->add_option("--variant", train_variant,
                    "plmn variant: full | no_attention | fft | wt | gt | plcn")
      ->check(CLI::IsMember({"full", "no_attention", "fft", "wt", "gt", "plcn"}));

  std::string eval_module, eval_variant = "full";
  auto* eval_cmd = app.add_subcommand("eval", "accuracy and confusion matrix");
  eval_cmd->add_option("--module", eval_module, "first | plmn | stationary")
      ->required()
      ->check(CLI::IsMember({"first", "plmn", "stationary"}));
  eval_cmd->add_option("--variant", eval_variant, "plmn variant");

  std::string quant_module, quant_variant = "full";
  auto* quant = app.add_subcommand("quantize", "int8 weight quantization report");
  quant->add_option("--module", quant_module, "first | plmn | stationary")
      ->required()
      ->check(CLI::IsMember({"first", "plmn", "stationary"}));
  quant->add_option("--variant", quant_variant, "plmn variant");

  double p = 0.5;
  auto* resources = app.add_subcommand("resources", "module and system resource report");
  auto* p_opt = resources->add_option("--p", p, "dynamic-branch activation probability");

  std::size_t stream_windows = 0;
  auto* stream = app.add_subcommand("stream", "two-stage runtime over a synthetic stream");
  stream->add_option("--windows", stream_windows, "window count (default from config)");

  auto* explain = app.add_subcommand("explain", "post-hoc attribution report");
  auto* ablate = app.add_subcommand("ablate", "train and tabulate all variants");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx = make_context(config_path, out_dir);
    if (!p_opt->count()) p = ctx.cfg.p;
    if (stream_windows == 0) stream_windows = ctx.cfg.stream_windows;

    if (synth->parsed()) return cmd_synth(ctx);
    if (train->parsed()) return cmd_train(ctx, train_module, train_variant);
    if (eval_cmd->parsed()) return cmd_eval(ctx, eval_module, eval_variant);
    if (quant->parsed()) return cmd_quantize(ctx, quant_module, quant_variant);
    if (resources->parsed()) return cmd_resources(ctx, p);
    if (stream->parsed()) return cmd_stream(ctx, stream_windows);
    if (explain->parsed()) return cmd_explain(ctx);
    if (ablate->parsed()) return cmd_ablate(ctx);
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
