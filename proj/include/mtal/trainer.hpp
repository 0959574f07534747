#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtal/autodiff.hpp"
#include "mtal/data.hpp"
#include "mtal/network.hpp"
#include "mtal/sharing.hpp"

namespace mtal {

// Softmax cross-entropy plus lambda * sum of squared Frobenius norms of
// `weights`. Throws ConfigError when lambda < 0.
template <typename T>
Var<T> task_loss(const Var<T>& logits, std::span<const int> labels,
                 std::span<const Var<T>> weights, double lambda);

// Unweighted sum; throws std::invalid_argument on an empty list.
template <typename T>
Var<T> total_loss(std::span<const Var<T>> task_losses);

// One task's data after normalization with train-split statistics.
struct TaskData {
  TaskSpec spec;
  Dataset train;
  Dataset test;
};

// Splits 70/30, fits normalization on the train part and applies it to both.
TaskData prepare_task(const TaskSpec& spec, const Dataset& raw, std::uint64_t seed,
                      SplitMode mode = SplitMode::Stratified);

// Endless shuffled passes over n indices in chunks of batch_size; the last
// chunk of a pass may be short. Reshuffles at the start of every pass.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch_size, std::mt19937_64 rng);

  std::vector<std::size_t> next();
  std::size_t passes() const noexcept { return passes_; }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  std::size_t passes_ = 0;
  std::mt19937_64 rng_;
};

std::size_t batches_per_pass(std::size_t n, std::size_t batch_size);

// Per-task losses of one step plus a term counted once in the total (shared
// regularization), which may be null.
template <typename T>
struct StepLosses {
  std::vector<Var<T>> task;
  Var<T> shared;
};

// A multi-task model trained by fit(). Task order follows the TaskData list.
template <typename T>
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string name() const = 0;
  virtual StepLosses<T> losses(std::size_t step, std::span<const Var<T>> inputs,
                               std::span<const std::vector<int>> labels, double lambda) = 0;
  // Logits of one task (position `task`) for evaluation.
  virtual Var<T> predict(std::size_t task, const Var<T>& input) = 0;
  virtual std::vector<Var<T>> parameters() const = 0;
  virtual std::vector<NamedTensor> named_tensors() const = 0;
  virtual void load(std::span<const NamedTensor> tensors) = 0;
  // Called once after the last optimizer step, before evaluation.
  virtual void finalize() {}
  virtual SharingReport sharing_report() const = 0;
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t task_id = 0;
  double loss = 0.0;
};

struct TotalRecord {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::vector<LossRecord> losses;  // one per task per step, append-only
  std::vector<TotalRecord> totals;
  SgdState sgd;
};

struct FitOptions {
  // Optimizer steps per epoch; 0 derives it from the longest train split.
  std::size_t steps_per_epoch = 0;
  // Where losses.csv, total.csv, sharing_report.csv and checkpoints go; no
  // files are written when empty.
  std::filesystem::path out_dir;
};

struct FitResult {
  TrainState state;
  std::vector<double> accuracy;  // test accuracy per task
  SharingReport sharing;
};

std::size_t default_steps_per_epoch(std::span<const TaskData> tasks, std::size_t batch_size);

// Batch streams are seeded per task id, so a task's batch sequence does not
// depend on which other tasks train alongside it.
template <typename T>
FitResult fit(Learner<T>& learner, std::span<const TaskData> tasks, const MtalConfig& cfg,
              const FitOptions& options = {});

// Fraction of correctly classified examples (argmax, lowest index on ties).
template <typename T>
std::vector<double> evaluate(Learner<T>& learner, std::span<const TaskData> tasks,
                             std::size_t chunk = 256);

// Trailing moving average: out[s] = mean(values[max(0,s-w+1)..s]).
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

// Writes losses.csv, total.csv, sharing_report.csv and checkpoint.bin.
void write_run_outputs(const std::filesystem::path& dir, const FitResult& result,
                       std::span<const NamedTensor> checkpoint);

void write_losses_csv(std::ostream& out, std::span<const LossRecord> losses);
void write_totals_csv(std::ostream& out, std::span<const TotalRecord> totals);

// The sharing network: one TaskNetwork per task coupled through per-step
// kernel sharing plans; raw phi scalars live in a persistent PhiStore.
template <typename T>
class MtalLearner final : public Learner<T> {
 public:
  MtalLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg);

  std::string name() const override { return "mtal"; }
  StepLosses<T> losses(std::size_t step, std::span<const Var<T>> inputs,
                       std::span<const std::vector<int>> labels, double lambda) override;
  Var<T> predict(std::size_t task, const Var<T>& input) override;
  std::vector<Var<T>> parameters() const override;
  // Network tensors, then phi/conv{l}/task{a}k{p}/task{b}k{q} raw scalars.
  std::vector<NamedTensor> named_tensors() const override;
  void load(std::span<const NamedTensor> tensors) override;
  // Re-nominates from the final weights; predict() uses these plans.
  void finalize() override;
  SharingReport sharing_report() const override;

  // Plans nominated from the current weights (empty when sharing is off).
  std::vector<SharingPlan<T>> nominate();
  void set_plans(std::vector<SharingPlan<T>> plans) { plans_ = std::move(plans); }
  const std::vector<SharingPlan<T>>& plans() const noexcept { return plans_; }

  const std::vector<TaskNetwork<T>>& networks() const noexcept { return networks_; }
  PhiStore<T>& phi() noexcept { return phi_; }
  const MtalConfig& config() const noexcept { return cfg_; }

 private:
  MtalConfig cfg_;
  std::vector<TaskNetwork<T>> networks_;
  PhiStore<T> phi_;
  std::vector<SharingPlan<T>> plans_;
};

std::vector<std::size_t> kernels_per_layer(const ArchitectureSpec& arch);

}  // namespace mtal
