#include <CLI11.hpp>

#include <iostream>

#include "adagent/harness.hpp"

namespace {

using namespace adagent;

struct CommonArgs {
  std::string dataset;
  std::string layout = "mvtec_dirs";
  std::string config_path;
  std::string cache_mode = "record";
  std::string out_dir;
  std::vector<std::string> classes;
  int shots = 0;
  int seed = -1;
  int workers = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_shots) {
  cmd->add_option("--dataset", args.dataset, "Dataset root directory or manifest CSV")
      ->required();
  cmd->add_option("--layout", args.layout, "Dataset layout")
      ->check(CLI::IsMember({"mvtec_dirs", "manifest_csv"}));
  cmd->add_option("--config", args.config_path, "Run config JSON file")->required();
  cmd->add_option("--cache-mode", args.cache_mode, "Provider cache mode")
      ->check(CLI::IsMember({"record", "replay-strict", "passthrough"}));
  cmd->add_option("--out", args.out_dir, "Output directory")->required();
  cmd->add_option("--classes", args.classes, "Restrict to these classes")->delimiter(',');
  if (with_shots) {
    cmd->add_option("--shots", args.shots, "Normal references per class (0 = zero-shot)")
        ->check(CLI::IsMember({0, 1, 2, 4}));
  }
  cmd->add_option("--seed", args.seed, "Shot-sampling seed (overrides config)");
  cmd->add_option("--workers", args.workers, "Concurrent episodes (overrides config)");
}

int run_or_calibrate(const CommonArgs& args, bool calibrate_only) {
  RunConfig cfg = RunConfig::from_file(args.config_path);
  if (args.seed >= 0) cfg.seed = static_cast<unsigned>(args.seed);
  if (args.workers != -1) cfg.workers = args.workers;
  cfg.validate();

  const auto mode = providers::cache_mode_from_string(args.cache_mode);
  const auto manifest =
      eval::load_dataset(args.dataset, eval::layout_from_string(args.layout), cfg.seed);
  const auto prompts = semantic::PromptLibrary::load(
      cfg.data_dir.empty() ? semantic::PromptLibrary::default_data_dir()
                           : std::filesystem::path(cfg.data_dir));
  const auto bundle = eval::make_provider_bundle(cfg, mode);

  eval::RunOptions options;
  options.out_dir = args.out_dir;
  options.shots = args.shots;
  options.class_filter = args.classes;

  if (calibrate_only) {
    const auto banks = eval::build_memory_banks(manifest, cfg, options, bundle, prompts);
    for (const auto& b : banks) std::cout << "memory bank: " << b.string() << "\n";
    return 0;
  }

  const auto summary = eval::run_benchmark(manifest, cfg, options, bundle, prompts);
  for (const auto& [name, dm] : summary.datasets) {
    std::cout << name << ": auroc=" << (dm.auroc ? std::to_string(*dm.auroc) : "n/a")
              << " f1_max=" << (dm.f1_max ? std::to_string(*dm.f1_max) : "n/a")
              << " records=" << dm.records << " failures=" << dm.failures
              << " fallbacks=" << dm.fallbacks << "\n";
  }
  std::cout << "report: " << (options.out_dir / "metrics.json").string() << "\n";
  return summary.total_failures() > 0 ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ad-agent: training-free agentic anomaly detection over image datasets"};
  app.require_subcommand(1);

  CommonArgs run_args;
  CLI::App* run_cmd = app.add_subcommand("run", "Run the benchmark and emit metrics");
  add_common(run_cmd, run_args, /*with_shots=*/true);

  CommonArgs cal_args;
  cal_args.shots = 1;
  CLI::App* cal_cmd = app.add_subcommand("calibrate", "Build per-class memory banks only");
  add_common(cal_cmd, cal_args, /*with_shots=*/false);
  cal_cmd->add_option("--shots", cal_args.shots, "Normal references per class")
      ->check(CLI::IsMember({1, 2, 4}));

  std::string traces_dir;
  std::string metrics_out;
  CLI::App* metrics_cmd =
      app.add_subcommand("metrics", "Recompute metrics from persisted traces");
  metrics_cmd->add_option("--traces", traces_dir, "Traces directory (contains <dataset>/<class>/)")
      ->required();
  metrics_cmd->add_option("--out", metrics_out, "Output directory (default: traces parent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return run_or_calibrate(run_args, false);
    if (cal_cmd->parsed()) return run_or_calibrate(cal_args, true);
    if (metrics_cmd->parsed()) {
      const std::filesystem::path traces(traces_dir);
      const std::filesystem::path out =
          metrics_out.empty() ? traces.parent_path() : std::filesystem::path(metrics_out);
      const auto summary = adagent::eval::metrics_from_traces(traces);
      adagent::eval::emit_report(summary, out);
      std::cout << "report: " << (out / "metrics.json").string() << "\n";
      return 0;
    }
  } catch (const adagent::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const adagent::LayoutError& e) {
    std::cerr << "dataset layout error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
