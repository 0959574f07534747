#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mtal/autodiff.hpp"
#include "mtal/checkpoint.hpp"
#include "mtal/ops.hpp"
#include "mtal/sharing.hpp"

namespace mtal {

struct InputDims {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const InputDims&, const InputDims&) = default;
};

std::string to_string(const InputDims& dims);

// One heterogeneous task: its own input dimensions and class count.
struct TaskSpec {
  std::size_t id = 0;
  InputDims dims;
  std::size_t classes = 2;
};

// Conv stack shared by every task network: conv_layers blocks of
// conv(kernel_size, same padding) -> relu, with a max pool after the blocks
// listed (1-based) in pool_after.
struct ArchitectureSpec {
  std::size_t conv_layers = 4;
  std::size_t kernels = 8;
  std::size_t kernel_size = 3;
  std::vector<std::size_t> pool_after{2, 4};
  std::size_t pool_window = 2;

  bool pools_after(std::size_t layer) const;
  // Feature-map dims after the whole stack; throws ShapeError if a pool does
  // not divide the map.
  InputDims output_dims(const InputDims& input) const;
  void validate() const;
};

struct MtalConfig {
  double delta = kRelatedDelta;
  double learning_rate = 0.01;
  double lambda = 0.1;
  PhiMode phi_mode = PhiMode::Learnable;
  double fixed_phi = 0.5;
  // Extension: re-nominate pairs every k steps, reusing the plan in between.
  std::size_t share_every = 1;
  // false -> every plan is empty (independent training).
  bool sharing_enabled = true;
  ArchitectureSpec arch;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  // Stop once an epoch improves the moving-average total loss by less than
  // early_stop_tolerance.
  bool early_stop = false;
  double early_stop_tolerance = 1e-4;
  // Write a checkpoint every this many epochs (0: only at the end).
  std::size_t checkpoint_every = 0;

  void validate() const;
};

template <typename T>
struct ConvLayer {
  Var<T> kernels;  // [m, C, k, k]
  Var<T> bias;     // [m]
};

template <typename T>
class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(std::size_t in_channels, const ArchitectureSpec& arch, std::mt19937_64& rng);

  const ArchitectureSpec& arch() const noexcept { return arch_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const ConvLayer<T>& layer(std::size_t l) const { return layers_.at(l); }

  // conv (with the given kernels in place of the stored ones) -> relu -> pool?
  Var<T> block(std::size_t l, const Var<T>& x, const Var<T>& kernels) const;
  Var<T> forward(const Var<T>& x) const;
  Var<T> forward(const Var<T>& x, std::span<const Var<T>> kernels) const;

  void append_parameters(std::vector<Var<T>>& out) const;
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load(const std::string& prefix, std::span<const NamedTensor> tensors);

 private:
  ArchitectureSpec arch_;
  std::vector<ConvLayer<T>> layers_;
};

template <typename T>
class DenseHead {
 public:
  DenseHead() = default;
  DenseHead(std::size_t features, std::size_t outputs, std::mt19937_64& rng);

  Var<T> forward(const Var<T>& features) const;  // flatten -> dense
  const Var<T>& weight() const noexcept { return weight_; }
  const Var<T>& bias() const noexcept { return bias_; }

  void append_parameters(std::vector<Var<T>>& out) const;
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void load(const std::string& prefix, std::span<const NamedTensor> tensors);

 private:
  Var<T> weight_;  // [F, c]
  Var<T> bias_;    // [c]
};

// Conv stack plus a task-specific classifier head sized from the task's
// input dims and class count.
template <typename T>
class TaskNetwork {
 public:
  TaskNetwork(const TaskSpec& spec, const ArchitectureSpec& arch, std::uint64_t seed);

  const TaskSpec& spec() const noexcept { return spec_; }
  const ConvStack<T>& convs() const noexcept { return convs_; }
  const DenseHead<T>& head() const noexcept { return head_; }
  std::size_t feature_size() const noexcept { return feature_size_; }

  Var<T> forward(const Var<T>& x) const;
  Var<T> forward(const Var<T>& x, std::span<const Var<T>> kernels) const;

  // Raw conv kernels and biases, then head weight and bias.
  std::vector<Var<T>> parameters() const;
  // Names: task{id}/conv{l}/kernels, task{id}/conv{l}/bias, task{id}/head/weight,
  // task{id}/head/bias.
  std::vector<NamedTensor> named_tensors() const;
  void load(std::span<const NamedTensor> tensors);

 private:
  TaskSpec spec_;
  ConvStack<T> convs_;
  DenseHead<T> head_;
  std::size_t feature_size_ = 0;
};

std::string task_prefix(std::size_t task_id);

// One network per spec; conv stacks are shape-identical and each network is
// initialized from its own stream of cfg.seed keyed by the task id.
template <typename T>
std::vector<TaskNetwork<T>> build_networks(std::span<const TaskSpec> specs, const MtalConfig& cfg);

// Throws unless every network has the same kernel shape at every layer.
template <typename T>
void check_architecture_identity(std::span<const TaskNetwork<T>> networks);

// Layer l kernel values of every network; KernelSet::task is the position.
template <typename T>
std::vector<KernelSet<T>> kernel_sets(std::span<const TaskNetwork<T>> networks, std::size_t layer);

// Nomination at every layer (positions as task indices).
template <typename T>
std::vector<std::vector<SimilarityRecord>> nominate_all(std::span<const TaskNetwork<T>> networks,
                                                        const ThresholdConfig& threshold);

// Per-task logits [batch, c_i]. plans is empty (no sharing) or holds one plan
// per conv layer in layer order.
template <typename T>
std::vector<Var<T>> forward_all(std::span<const TaskNetwork<T>> networks,
                                std::span<const Var<T>> inputs,
                                std::span<const SharingPlan<T>> plans);

// Effective kernels [task][layer] under the plans.
template <typename T>
std::vector<std::vector<Var<T>>> effective_kernels(std::span<const TaskNetwork<T>> networks,
                                                   std::span<const SharingPlan<T>> plans);

}  // namespace mtal
