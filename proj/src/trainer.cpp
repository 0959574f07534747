#include "mtal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mtal/errors.hpp"
#include "mtal/ops.hpp"
#include "mtal/rng.hpp"

namespace fs = std::filesystem;

namespace mtal {
namespace {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string phi_name(const PhiKey& k, std::size_t id_i, std::size_t id_j) {
  return "phi/conv" + std::to_string(k.layer) + "/task" + std::to_string(id_i) + "k" +
         std::to_string(k.kernel_p) + "/task" + std::to_string(id_j) + "k" +
         std::to_string(k.kernel_q);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace

template <typename T>
Var<T> task_loss(const Var<T>& logits, std::span<const int> labels,
                 std::span<const Var<T>> weights, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
  Var<T> ce = softmax_cross_entropy<T>(logits, labels);
  if (lambda == 0.0 || weights.empty()) return ce;
  std::vector<Var<T>> squares;
  squares.reserve(weights.size());
  for (const auto& w : weights) squares.push_back(sum_squares<T>(w));
  return add<T>(ce, scale<T>(add_n<T>(squares), lambda));
}

template <typename T>
Var<T> total_loss(std::span<const Var<T>> task_losses) {
  if (task_losses.empty()) throw std::invalid_argument("total_loss: no task losses");
  if (task_losses.size() == 1) return task_losses.front();
  return add_n<T>(task_losses);
}

TaskData prepare_task(const TaskSpec& spec, const Dataset& raw, std::uint64_t seed,
                      SplitMode mode) {
  raw.validate();
  if (raw.dims != spec.dims || raw.classes != spec.classes) {
    throw ShapeError("task " + std::to_string(spec.id) + ": dataset is " + to_string(raw.dims) +
                     " with " + std::to_string(raw.classes) + " classes, spec expects " +
                     to_string(spec.dims) + " with " + std::to_string(spec.classes));
  }
  const Split split = split_70_30(raw, seed, mode);
  Dataset train = subset(raw, split.train);
  Dataset test = subset(raw, split.test);
  const Normalization stats = fit_normalization(train);
  return {spec, normalize(train, stats), normalize(test, stats)};
}

BatchStream::BatchStream(std::size_t n, std::size_t batch_size, std::mt19937_64 rng)
    : order_(n), batch_size_(batch_size), rng_(std::move(rng)) {
  if (n == 0) throw std::invalid_argument("BatchStream: empty dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::iota(order_.begin(), order_.end(), 0);
}

std::vector<std::size_t> BatchStream::next() {
  if (cursor_ == 0) {
    std::shuffle(order_.begin(), order_.end(), rng_);
    ++passes_;
  }
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end == order_.size() ? 0 : end;
  return batch;
}

std::size_t batches_per_pass(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

std::size_t default_steps_per_epoch(std::span<const TaskData> tasks, std::size_t batch_size) {
  std::size_t steps = 0;
  for (const auto& t : tasks) steps = std::max(steps, batches_per_pass(t.train.size(), batch_size));
  return steps;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: zero window");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t s = 0; s < values.size(); ++s) {
    sum += values[s];
    if (s >= window) sum -= values[s - window];
    out[s] = sum / static_cast<double>(std::min(window, s + 1));
  }
  return out;
}

void write_losses_csv(std::ostream& out, std::span<const LossRecord> losses) {
  out << "step,task_id,loss\n";
  for (const auto& r : losses) out << r.step << ',' << r.task_id << ',' << fmt_real(r.loss) << '\n';
}

void write_totals_csv(std::ostream& out, std::span<const TotalRecord> totals) {
  out << "step,total_loss\n";
  for (const auto& r : totals) out << r.step << ',' << fmt_real(r.loss) << '\n';
}

void write_run_outputs(const fs::path& dir, const FitResult& result,
                       std::span<const NamedTensor> checkpoint) {
  fs::create_directories(dir);
  std::ostringstream losses, totals, sharing;
  write_losses_csv(losses, result.state.losses);
  write_totals_csv(totals, result.state.totals);
  write_sharing_report_csv(sharing, result.sharing);
  write_file(dir / "losses.csv", losses.str());
  write_file(dir / "total.csv", totals.str());
  write_file(dir / "sharing_report.csv", sharing.str());
  write_checkpoint(dir / "checkpoint.bin", checkpoint);
}

template <typename T>
std::vector<double> evaluate(Learner<T>& learner, std::span<const TaskData> tasks,
                             std::size_t chunk) {
  std::vector<double> acc;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const Dataset& test = tasks[t].test;
    if (test.size() == 0) throw std::invalid_argument("evaluate: empty test split");
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < test.size(); begin += chunk) {
      idx.resize(std::min(chunk, test.size() - begin));
      std::iota(idx.begin(), idx.end(), begin);
      const auto logits = learner.predict(t, constant(batch_inputs<T>(test, idx)))->value();
      const std::size_t c = logits.dim(1);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const T* row = logits.raw() + r * c;
        const auto best = static_cast<int>(std::max_element(row, row + c) - row);
        if (best == test.labels[idx[r]]) ++correct;
      }
    }
    acc.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  return acc;
}

template <typename T>
FitResult fit(Learner<T>& learner, std::span<const TaskData> tasks, const MtalConfig& cfg,
              const FitOptions& options) {
  cfg.validate();
  if (tasks.empty()) throw std::invalid_argument("fit: no tasks");
  const std::size_t steps_per_epoch = options.steps_per_epoch != 0
                                          ? options.steps_per_epoch
                                          : default_steps_per_epoch(tasks, cfg.batch_size);
  if (!options.out_dir.empty()) fs::create_directories(options.out_dir);

  std::vector<BatchStream> streams;
  for (const auto& t : tasks) {
    streams.emplace_back(t.train.size(), cfg.batch_size,
                         make_rng(cfg.seed, {t.spec.id, kBatchStream}));
  }

  FitResult result;
  TrainState& st = result.state;
  st.sgd = SgdState(cfg.learning_rate);
  double previous_epoch_mean = std::numeric_limits<double>::infinity();

  for (st.epoch = 0; st.epoch < cfg.epochs; ++st.epoch) {
    double epoch_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++st.step) {
      std::vector<Var<T>> inputs;
      std::vector<std::vector<int>> labels;
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto idx = streams[t].next();
        inputs.push_back(constant(batch_inputs<T>(tasks[t].train, idx)));
        labels.push_back(batch_labels(tasks[t].train, idx));
      }
      StepLosses<T> step_losses = learner.losses(st.step, inputs, labels, cfg.lambda);
      if (step_losses.task.size() != tasks.size()) {
        throw std::logic_error(learner.name() + ": wrong number of task losses");
      }
      for (std::size_t t = 0; t < tasks.size(); ++t) {
        const double v = static_cast<double>(step_losses.task[t]->value().item());
        if (!std::isfinite(v)) {
          throw NumericError("trainer: non-finite loss for task " +
                             std::to_string(tasks[t].spec.id) + " at step " +
                             std::to_string(st.step));
        }
        st.losses.push_back({st.step, tasks[t].spec.id, v});
      }
      std::vector<Var<T>> terms = step_losses.task;
      if (step_losses.shared) terms.push_back(step_losses.shared);
      const Var<T> total = total_loss<T>(terms);
      const double total_value = static_cast<double>(total->value().item());
      if (!std::isfinite(total_value)) {
        throw NumericError("trainer: non-finite total loss at step " + std::to_string(st.step));
      }
      st.totals.push_back({st.step, total_value});
      epoch_sum += total_value;
      backward(total);
      const auto params = learner.parameters();
      sgd_step<T>(params, st.sgd);
    }
    if (!options.out_dir.empty() && cfg.checkpoint_every != 0 &&
        (st.epoch + 1) % cfg.checkpoint_every == 0) {
      write_checkpoint(options.out_dir / ("checkpoint_epoch" + std::to_string(st.epoch + 1) + ".bin"),
                       learner.named_tensors());
    }
    const double epoch_mean = epoch_sum / static_cast<double>(steps_per_epoch);
    if (cfg.early_stop && previous_epoch_mean - epoch_mean < cfg.early_stop_tolerance) {
      ++st.epoch;
      break;
    }
    previous_epoch_mean = epoch_mean;
  }

  learner.finalize();
  result.accuracy = evaluate(learner, tasks);
  result.sharing = learner.sharing_report();

  if (!options.out_dir.empty()) {
    write_run_outputs(options.out_dir, result, learner.named_tensors());
  }
  return result;
}

std::vector<std::size_t> kernels_per_layer(const ArchitectureSpec& arch) {
  return std::vector<std::size_t>(arch.conv_layers, arch.kernels);
}

template <typename T>
MtalLearner<T>::MtalLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg)
    : cfg_(cfg), networks_(build_networks<T>(specs, cfg)) {}

template <typename T>
std::vector<SharingPlan<T>> MtalLearner<T>::nominate() {
  if (!cfg_.sharing_enabled) return {};
  const auto records = nominate_all<T>(networks_, ThresholdConfig(cfg_.delta));
  std::vector<SharingPlan<T>> plans;
  plans.reserve(records.size());
  for (std::size_t l = 0; l < records.size(); ++l) {
    plans.push_back(make_plan<T>(l, records[l], cfg_.phi_mode, phi_, cfg_.fixed_phi));
  }
  return plans;
}

template <typename T>
StepLosses<T> MtalLearner<T>::losses(std::size_t step, std::span<const Var<T>> inputs,
                                     std::span<const std::vector<int>> labels, double lambda) {
  if (!cfg_.sharing_enabled) {
    plans_.clear();
  } else if (plans_.empty() || step % cfg_.share_every == 0) {
    plans_ = nominate();
  }
  const auto logits = forward_all<T>(networks_, inputs, plans_);
  StepLosses<T> out;
  for (std::size_t t = 0; t < networks_.size(); ++t) {
    const auto weights = networks_[t].parameters();
    out.task.push_back(task_loss<T>(logits[t], labels[t], weights, lambda));
  }
  return out;
}

template <typename T>
Var<T> MtalLearner<T>::predict(std::size_t task, const Var<T>& input) {
  const auto eff = effective_kernels<T>(networks_, plans_);
  return networks_.at(task).forward(input, eff[task]);
}

template <typename T>
std::vector<Var<T>> MtalLearner<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& net : networks_) {
    const auto p = net.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  const auto phi = phi_.parameters();
  out.insert(out.end(), phi.begin(), phi.end());
  return out;
}

template <typename T>
std::vector<NamedTensor> MtalLearner<T>::named_tensors() const {
  std::vector<NamedTensor> out;
  for (const auto& net : networks_) {
    auto named = net.named_tensors();
    out.insert(out.end(), std::make_move_iterator(named.begin()),
               std::make_move_iterator(named.end()));
  }
  for (const auto& [key, rho] : phi_.entries()) {
    out.push_back({phi_name(key, networks_.at(key.task_i).spec().id,
                            networks_.at(key.task_j).spec().id),
                   rho->value().template cast<float>()});
  }
  return out;
}

template <typename T>
void MtalLearner<T>::load(std::span<const NamedTensor> tensors) {
  for (auto& net : networks_) net.load(tensors);
  for (const auto& nt : tensors) {
    if (!nt.name.starts_with("phi/")) continue;
    unsigned long l = 0, a = 0, p = 0, b = 0, q = 0;
    if (std::sscanf(nt.name.c_str(), "phi/conv%lu/task%luk%lu/task%luk%lu", &l, &a, &p, &b, &q) !=
            5 ||
        nt.tensor.size() != 1) {
      throw FormatError("checkpoint: malformed phi entry " + nt.name);
    }
    auto position = [&](std::size_t id) {
      for (std::size_t t = 0; t < networks_.size(); ++t) {
        if (networks_[t].spec().id == id) return t;
      }
      throw FormatError("checkpoint: " + nt.name + " names unknown task " + std::to_string(id));
    };
    const PhiKey key{l, position(a), p, position(b), q};
    phi_.raw(key)->mutable_value()[0] = static_cast<T>(nt.tensor[0]);
  }
}

template <typename T>
void MtalLearner<T>::finalize() {
  plans_ = nominate();
}

template <typename T>
SharingReport MtalLearner<T>::sharing_report() const {
  const auto kernels = kernels_per_layer(cfg_.arch);
  if (plans_.empty()) {
    std::vector<std::vector<SimilarityRecord>> none(cfg_.arch.conv_layers);
    return mtal::sharing_report(none, networks_.size(), kernels);
  }
  return mtal::sharing_report<T>(plans_, networks_.size(), kernels);
}

#define MTAL_INSTANTIATE(T)                                                                   \
  template Var<T> task_loss(const Var<T>&, std::span<const int>, std::span<const Var<T>>,     \
                            double);                                                          \
  template Var<T> total_loss(std::span<const Var<T>>);                                        \
  template std::vector<double> evaluate(Learner<T>&, std::span<const TaskData>, std::size_t); \
  template FitResult fit(Learner<T>&, std::span<const TaskData>, const MtalConfig&,           \
                         const FitOptions&);                                                  \
  template class MtalLearner<T>;

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
