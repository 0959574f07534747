#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "mtal/baselines.hpp"
#include "mtal/data.hpp"
#include "mtal/network.hpp"
#include "mtal/trainer.hpp"

namespace mtal {

enum class TaskSource { Synthetic, Disk };

// Parsed experiment file. Sections:
//   [experiment]    method, seeds, output, split
//   [mtal]          preset, delta, learning_rate, lambda, phi_mode, fixed_phi,
//                   share_every, sharing, batch_size, epochs, early_stop,
//                   early_stop_tolerance, checkpoint_every
//   [architecture]  conv_layers, kernels, kernel_size, pool_after, pool_window
//   [tasks]         source, seed, relatedness, noise, jitter
//   [task.ID]       path (disk) or channels, height, width, classes, examples,
//                   quarter_turns, channel_permutation, class_map (synthetic)
//   [sweep]         deltas, epochs
struct ExperimentConfig {
  Method method = Method::Mtal;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output = "out";
  SplitMode split = SplitMode::Stratified;
  MtalConfig mtal;
  TaskSource source = TaskSource::Synthetic;
  SyntheticTaskFamily family;          // synthetic source; family.seed is the base seed
  std::vector<std::size_t> task_ids;   // parallel to family.tasks or task_paths
  std::vector<std::filesystem::path> task_paths;
  std::vector<double> sweep_deltas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t sweep_epochs = 10;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// `origin` names the source in error messages.
ExperimentConfig parse_config(std::istream& in, const std::string& origin = "config");
ExperimentConfig load_config(const std::filesystem::path& path);

// Family seed actually used for run seed `seed`.
std::uint64_t data_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Raw (unnormalized) datasets for one run, in task order.
std::vector<GeneratedTask> load_tasks(const ExperimentConfig& cfg, std::uint64_t seed);

// Split and normalized datasets for one run.
std::vector<TaskData> prepare_tasks(const ExperimentConfig& cfg, std::uint64_t seed);

struct AccuracyRow {
  std::string method;
  std::size_t task = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct ExperimentSummary {
  std::vector<AccuracyRow> rows;
  std::vector<FitResult> runs;  // one per seed
};

// method,task,seed,accuracy rows in input order, then per task a `mean` and a
// `std` row (population standard deviation over seeds), 12 decimals.
void write_results_csv(std::ostream& out, std::span<const AccuracyRow> rows);

// Trains cfg.method for every seed. Writes seed_K/ (results.csv, losses.csv,
// total.csv, sharing_report.csv, checkpoint.bin) under cfg.output and an
// aggregate results.csv plus the first seed's losses.csv, total.csv and
// sharing_report.csv at the top level.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct SweepRow {
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::size_t task = 0;
  double accuracy = 0.0;
  double sharing_ratio = 0.0;          // on the run's reference checkpoint
  double trained_sharing_ratio = 0.0;  // on the model trained at this delta
};

// For every seed and delta, trains MTAL for cfg.sweep_epochs. The reference
// checkpoint of a seed is the model trained at the smallest delta; its
// sharing ratio is re-measured at every delta. Writes sweep.csv (per delta and
// task: mean and std accuracy, mean ratios) and sweep_runs.csv.
std::vector<SweepRow> sweep_delta(const ExperimentConfig& cfg);

// Loads an MTAL checkpoint, nominates at cfg.mtal.delta and writes
// sharing_report.csv and similarity.csv to out_dir.
SharingReport report_sharing(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                             const std::filesystem::path& out_dir);

// relu(conv) output of conv layer `layer` (0-based), before pooling, for a
// batch of inputs [S,C,H,W] -> [S,m,H',W'].
template <typename T>
BasicTensor<T> activation_maps(const TaskNetwork<T>& network, std::span<const Var<T>> kernels,
                               const BasicTensor<T>& inputs, std::size_t layer);

struct DumpOptions {
  std::size_t layer = 1;    // 1-based
  std::size_t samples = 1;  // first test examples of each task
  bool shared = true;       // effective kernels under the plans at cfg delta
  std::uint64_t seed = 0;
  // Optional dataset fed to every task instead of its own test examples.
  std::filesystem::path input;
};

// Writes out_dir/sample{s}/task{id}_kernel{p}.csv grids; returns the file count.
std::size_t dump_activations(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
                             const DumpOptions& options, const std::filesystem::path& out_dir);

// Writes each synthetic task of run `seed` to out_dir/task{id} in the on-disk
// dataset format.
void gen_data(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace mtal
