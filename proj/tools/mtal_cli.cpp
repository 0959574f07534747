#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "mtal/errors.hpp"
#include "mtal/experiments.hpp"

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file")->required();
  cmd->add_option("--seed", c.seed, "run only this seed");
  cmd->add_option("--out", c.out, "output directory (overrides experiment.output)");
}

mtal::ExperimentConfig load(const Common& c) {
  auto cfg = mtal::load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.output = c.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task adaptive kernel sharing experiments"};
  app.require_subcommand(1);

  Common train_opts, sweep_opts, report_opts, dump_opts, gen_opts;
  std::string report_checkpoint, dump_checkpoint, dump_input;
  std::size_t dump_layer = 1, dump_samples = 1;
  bool dump_raw = false;

  auto* train = app.add_subcommand("train", "train the configured method for every seed");
  add_common(train, train_opts);
  auto* sweep = app.add_subcommand("sweep-delta", "train across sharing thresholds");
  add_common(sweep, sweep_opts);
  auto* report = app.add_subcommand("report-sharing", "sharing ratios of a checkpoint");
  add_common(report, report_opts);
  report->add_option("--checkpoint", report_checkpoint, "checkpoint file")->required();
  auto* dump = app.add_subcommand("dump-activations", "write activation maps as CSV grids");
  add_common(dump, dump_opts);
  dump->add_option("--checkpoint", dump_checkpoint, "checkpoint file")->required();
  dump->add_option("--layer", dump_layer, "conv layer, 1-based")->capture_default_str();
  dump->add_option("--samples", dump_samples, "examples per task")->capture_default_str();
  dump->add_option("--input", dump_input, "dataset directory fed to every task");
  dump->add_flag("--raw", dump_raw, "use raw kernels instead of shared effective kernels");
  auto* gen = app.add_subcommand("gen-data", "write the synthetic tasks to disk");
  add_common(gen, gen_opts);

  CLI11_PARSE(app, argc, argv);

  const std::string verb = app.get_subcommands().front()->get_name();
  try {
    if (*train) {
      const auto cfg = load(train_opts);
      const auto summary = mtal::run_experiment(cfg);
      std::cout << "wrote " << (cfg.output / "results.csv").string() << " ("
                << summary.rows.size() << " runs)\n";
    } else if (*sweep) {
      const auto cfg = load(sweep_opts);
      const auto rows = mtal::sweep_delta(cfg);
      std::cout << "wrote " << (cfg.output / "sweep.csv").string() << " (" << rows.size()
                << " cells)\n";
    } else if (*report) {
      const auto cfg = load(report_opts);
      const auto r = mtal::report_sharing(cfg, report_checkpoint, cfg.output);
      std::cout << "total sharing ratio " << 100.0 * r.total_ratio() << "%\n";
    } else if (*dump) {
      const auto cfg = load(dump_opts);
      mtal::DumpOptions o;
      o.layer = dump_layer;
      o.samples = dump_samples;
      o.shared = !dump_raw;
      o.seed = cfg.seeds.front();
      o.input = dump_input;
      const auto n = mtal::dump_activations(cfg, dump_checkpoint, o, cfg.output);
      std::cout << "wrote " << n << " activation maps under " << cfg.output.string() << "\n";
    } else if (*gen) {
      const auto cfg = load(gen_opts);
      mtal::gen_data(cfg, cfg.seeds.front(), cfg.output);
      std::cout << "wrote " << cfg.task_ids.size() << " datasets under " << cfg.output.string()
                << "\n";
    }
  } catch (const mtal::ConfigError& e) {
    std::cerr << "mtal " << verb << ": config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "mtal " << verb << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
