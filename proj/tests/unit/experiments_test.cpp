#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "../support/oracles.hpp"
#include "mtal/checkpoint.hpp"
#include "mtal/errors.hpp"
#include "mtal/experiments.hpp"

using namespace mtal;
namespace fs = std::filesystem;

namespace {

const char* kTinyIni = R"(
[experiment]
method = mtal
seeds = 0, 1
output = unused

[mtal]
epochs = 1
batch_size = 16
delta = 0.4

[architecture]
conv_layers = 2
kernels = 3
pool_after = 2

[tasks]
seed = 3

[task.0]
height = 8
width = 8
classes = 3
examples = 40

[task.1]
height = 12
width = 12
classes = 2
examples = 30

[sweep]
epochs = 1
)";

ExperimentConfig tiny(const std::string& name) {
  std::istringstream in(kTinyIni);
  auto cfg = parse_config(in, "tiny");
  cfg.output = fs::temp_directory_path() / ("mtal_experiments_test_" + name);
  fs::remove_all(cfg.output);
  return cfg;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string parse_error(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_config(in, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return {};
}

}  // namespace

TEST(ConfigTest, ParsesTinyConfig) {
  const auto cfg = tiny("parse");
  EXPECT_EQ(cfg.method, Method::Mtal);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(cfg.mtal.epochs, 1u);
  EXPECT_EQ(cfg.mtal.arch.kernels, 3u);
  EXPECT_EQ(cfg.mtal.arch.pool_after, (std::vector<std::size_t>{2}));
  EXPECT_EQ(cfg.task_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(cfg.family.tasks[1].dims, (InputDims{1, 12, 12}));
  EXPECT_EQ(cfg.family.tasks[0].classes, 3u);
  EXPECT_EQ(cfg.sweep_epochs, 1u);
}

TEST(ConfigTest, FieldNamedErrors) {
  EXPECT_NE(parse_error("[mtal]\ndelta = 0.95\n[task.0]\nclasses=2\n").find("delta"),
            std::string::npos);
  EXPECT_NE(parse_error("[mtal]\nlearning_rat = 0.1\n").find("mtal.learning_rat: unknown key"),
            std::string::npos);
  EXPECT_NE(parse_error("[mtal]\nbatch_size = many\n").find("mtal.batch_size"),
            std::string::npos);
  EXPECT_NE(parse_error("[bogus]\nx = 1\n").find("unknown section"), std::string::npos);
  EXPECT_NE(parse_error("[experiment]\nmethod = mtda\n").find("experiment.method"),
            std::string::npos);
  EXPECT_NE(parse_error("[experiment]\nmethod = mtal\n").find("tasks"), std::string::npos);
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(ResultsTest, MeanAndPopulationStdRows) {
  const std::vector<AccuracyRow> rows{{"mtal", 0, 0, 0.5}, {"mtal", 0, 1, 0.75},
                                      {"mtal", 0, 2, 1.0}, {"mtal", 1, 0, 0.25}};
  std::ostringstream os;
  write_results_csv(os, rows);
  std::istringstream in(os.str());
  std::map<std::string, double> stats;
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "method,task,seed,accuracy");
  std::size_t count = 0;
  while (std::getline(in, line)) {
    ++count;
    const auto a = line.find(','), b = line.find(',', a + 1), c = line.find(',', b + 1);
    stats[line.substr(a + 1, b - a - 1) + "/" + line.substr(b + 1, c - b - 1)] =
        std::stod(line.substr(c + 1));
  }
  EXPECT_EQ(count, 4u + 2 * 2);
  const std::vector<double> acc{0.5, 0.75, 1.0};
  EXPECT_NEAR(stats["0/mean"], mtal::testing::mean_oracle(acc), 1e-9);
  EXPECT_NEAR(stats["0/std"], mtal::testing::population_std_oracle(acc), 1e-9);
  EXPECT_NEAR(stats["1/std"], 0.0, 1e-12);
}

TEST(ExperimentTest, RunWritesPerSeedAndSummaryFiles) {
  const auto cfg = tiny("run");
  const auto summary = run_experiment(cfg);
  EXPECT_EQ(summary.rows.size(), 4u);
  const auto rows = read_csv(cfg.output / "results.csv");
  EXPECT_EQ(rows.size(), 1u + 4 + 4);
  for (const char* f : {"results.csv", "losses.csv", "total.csv", "sharing_report.csv",
                        "seed_0/checkpoint.bin", "seed_1/results.csv"}) {
    EXPECT_TRUE(fs::exists(cfg.output / f)) << f;
  }
  // Recompute the summary rows from the per-seed rows.
  for (std::size_t task = 0; task < 2; ++task) {
    std::vector<double> acc;
    for (const auto& r : summary.rows)
      if (r.task == task) acc.push_back(r.accuracy);
    for (const auto& row : rows) {
      if (row[1] != std::to_string(task)) continue;
      if (row[2] == "mean") EXPECT_NEAR(std::stod(row[3]), mtal::testing::mean_oracle(acc), 1e-9);
      if (row[2] == "std")
        EXPECT_NEAR(std::stod(row[3]), mtal::testing::population_std_oracle(acc), 1e-9);
    }
  }
}

TEST(ExperimentTest, RerunIsByteIdentical) {
  auto a = tiny("rerun_a");
  auto b = tiny("rerun_b");
  a.seeds = b.seeds = {4};
  run_experiment(a);
  run_experiment(b);
  for (const char* f : {"results.csv", "losses.csv", "seed_4/checkpoint.bin"}) {
    std::ifstream fa(a.output / f, std::ios::binary), fb(b.output / f, std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    EXPECT_EQ(sa.str(), sb.str()) << f;
  }
}

TEST(ExperimentTest, SweepRowsAndMonotoneSharing) {
  auto cfg = tiny("sweep");
  cfg.seeds = {0};
  const auto rows = sweep_delta(cfg);
  EXPECT_EQ(rows.size(), 9u * 2);
  const auto agg = read_csv(cfg.output / "sweep.csv");
  EXPECT_EQ(agg.size(), 1u + 9 * 2);
  EXPECT_TRUE(fs::exists(cfg.output / "reference_seed_0.bin"));
  double previous = 2.0;
  for (const auto& r : rows) {
    if (r.task != 0) continue;
    EXPECT_LE(r.sharing_ratio, previous + 1e-12);
    previous = r.sharing_ratio;
  }
  cfg.method = Method::Single;
  EXPECT_THROW(sweep_delta(cfg), ConfigError);
}

TEST(ExperimentTest, ReportAndDumpFromCheckpoint) {
  auto cfg = tiny("dump");
  cfg.seeds = {0};
  run_experiment(cfg);
  const auto ckpt = cfg.output / "seed_0" / "checkpoint.bin";
  const auto report = report_sharing(cfg, ckpt, cfg.output / "report");
  EXPECT_TRUE(fs::exists(cfg.output / "report" / "similarity.csv"));
  EXPECT_EQ(report.kernel_total, 2u * 2 * 3);

  DumpOptions options;
  options.layer = 1;
  options.samples = 2;
  const auto written = dump_activations(cfg, ckpt, options, cfg.output / "maps");
  EXPECT_EQ(written, 2u * 2 * 3);
  EXPECT_TRUE(fs::exists(cfg.output / "maps" / "sample1" / "task1_kernel2.csv"));
  options.layer = 3;
  EXPECT_THROW(dump_activations(cfg, ckpt, options, cfg.output / "bad"), ConfigError);
}

TEST(ExperimentTest, ZeroInputGivesBiasOnlyMaps) {
  auto cfg = tiny("maps");
  const auto specs = std::vector<TaskSpec>{TaskSpec{0, {1, 8, 8}, 3}};
  auto nets = build_networks<double>(specs, cfg.mtal);
  const auto& conv = nets[0].convs().layer(0);
  for (auto& b : conv.bias->mutable_value().data()) b = 0.0;
  const std::vector<Var<double>> kernels{conv.kernels, nets[0].convs().layer(1).kernels};
  const auto maps = activation_maps<double>(nets[0], kernels, Tensor64({1, 1, 8, 8}), 0);
  EXPECT_EQ(maps.shape(), (Shape{1, 3, 8, 8}));
  for (double v : maps.data()) EXPECT_EQ(v, 0.0);
}

TEST(ExperimentTest, GenDataWritesLoadableTasks) {
  auto cfg = tiny("gen");
  gen_data(cfg, 0, cfg.output);
  const auto ds = load_dataset(cfg.output / "task1");
  EXPECT_EQ(ds.dims, (InputDims{1, 12, 12}));
  EXPECT_EQ(ds.size(), 30u);
  const auto again = load_tasks(cfg, 0);
  EXPECT_EQ(again[1].data.data, ds.data);
}
