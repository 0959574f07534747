#include "mtal/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtal/errors.hpp"
#include "mtal/rng.hpp"

namespace mtal {
namespace {

template <typename T>
Var<T> uniform_parameter(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return parameter(std::move(t));
}

template <typename T>
void load_into(const Var<T>& target, std::span<const NamedTensor> tensors, const std::string& name) {
  const Tensor& src = find_tensor(tensors, name);
  if (src.shape() != target->shape()) {
    throw FormatError("checkpoint tensor " + name + " has shape " + to_string(src.shape()) +
                      ", network expects " + to_string(target->shape()));
  }
  auto dst = target->mutable_value().data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(src[k]);
  target->zero_grad();
}

}  // namespace

std::string to_string(const InputDims& d) {
  return std::to_string(d.channels) + "x" + std::to_string(d.height) + "x" +
         std::to_string(d.width);
}

std::string task_prefix(std::size_t task_id) { return "task" + std::to_string(task_id); }

bool ArchitectureSpec::pools_after(std::size_t layer) const {
  return std::find(pool_after.begin(), pool_after.end(), layer + 1) != pool_after.end();
}

void ArchitectureSpec::validate() const {
  if (conv_layers == 0) throw ConfigError("architecture.conv_layers must be >= 1");
  if (kernels == 0) throw ConfigError("architecture.kernels must be >= 1");
  if (kernel_size == 0 || kernel_size % 2 == 0) {
    throw ConfigError("architecture.kernel_size must be odd for same padding, got " +
                      std::to_string(kernel_size));
  }
  if (pool_window == 0) throw ConfigError("architecture.pool_window must be >= 1");
  for (auto p : pool_after) {
    if (p == 0 || p > conv_layers) {
      throw ConfigError("architecture.pool_after entry " + std::to_string(p) +
                        " outside 1.." + std::to_string(conv_layers));
    }
  }
}

InputDims ArchitectureSpec::output_dims(const InputDims& input) const {
  InputDims d{kernels, input.height, input.width};
  for (std::size_t l = 0; l < conv_layers; ++l) {
    if (!pools_after(l)) continue;
    if (d.height % pool_window != 0 || d.width % pool_window != 0 || d.height < pool_window ||
        d.width < pool_window) {
      throw ShapeError("pool after conv layer " + std::to_string(l + 1) + " cannot divide " +
                       std::to_string(d.height) + "x" + std::to_string(d.width) +
                       " feature maps by window " + std::to_string(pool_window));
    }
    d.height /= pool_window;
    d.width /= pool_window;
  }
  return d;
}

void MtalConfig::validate() const {
  ThresholdConfig{delta};
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  if (!(fixed_phi >= 0.0 && fixed_phi <= 1.0)) throw ConfigError("fixed_phi must lie in [0, 1]");
  if (share_every == 0) throw ConfigError("share_every must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  arch.validate();
}

template <typename T>
ConvStack<T>::ConvStack(std::size_t in_channels, const ArchitectureSpec& arch,
                        std::mt19937_64& rng)
    : arch_(arch) {
  arch_.validate();
  std::size_t channels = in_channels;
  for (std::size_t l = 0; l < arch_.conv_layers; ++l) {
    const std::size_t fan_in = channels * arch_.kernel_size * arch_.kernel_size;
    ConvLayer<T> layer;
    layer.kernels = uniform_parameter<T>(
        {arch_.kernels, channels, arch_.kernel_size, arch_.kernel_size},
        std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
    layer.bias = parameter(BasicTensor<T>(Shape{arch_.kernels}));
    layers_.push_back(std::move(layer));
    channels = arch_.kernels;
  }
}

template <typename T>
Var<T> ConvStack<T>::block(std::size_t l, const Var<T>& x, const Var<T>& kernels) const {
  auto h = relu(conv2d(x, kernels, layers_.at(l).bias, Padding::Same));
  if (arch_.pools_after(l)) h = max_pool2d(h, arch_.pool_window, PoolPolicy::Strict);
  return h;
}

template <typename T>
Var<T> ConvStack<T>::forward(const Var<T>& x) const {
  Var<T> h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) h = block(l, h, layers_[l].kernels);
  return h;
}

template <typename T>
Var<T> ConvStack<T>::forward(const Var<T>& x, std::span<const Var<T>> kernels) const {
  if (kernels.size() != layers_.size()) {
    throw ShapeError("conv stack has " + std::to_string(layers_.size()) + " layers, got " +
                     std::to_string(kernels.size()) + " kernel tensors");
  }
  Var<T> h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) h = block(l, h, kernels[l]);
  return h;
}

template <typename T>
void ConvStack<T>::append_parameters(std::vector<Var<T>>& out) const {
  for (const auto& layer : layers_) {
    out.push_back(layer.kernels);
    out.push_back(layer.bias);
  }
}

template <typename T>
void ConvStack<T>::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + "/conv" + std::to_string(l);
    out.push_back({base + "/kernels", layers_[l].kernels->value().template cast<float>()});
    out.push_back({base + "/bias", layers_[l].bias->value().template cast<float>()});
  }
}

template <typename T>
void ConvStack<T>::load(const std::string& prefix, std::span<const NamedTensor> tensors) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + "/conv" + std::to_string(l);
    load_into(layers_[l].kernels, tensors, base + "/kernels");
    load_into(layers_[l].bias, tensors, base + "/bias");
  }
}

template <typename T>
DenseHead<T>::DenseHead(std::size_t features, std::size_t outputs, std::mt19937_64& rng)
    : weight_(uniform_parameter<T>({features, outputs},
                                   std::sqrt(3.0 / static_cast<double>(features)), rng)),
      bias_(parameter(BasicTensor<T>(Shape{outputs}))) {}

template <typename T>
Var<T> DenseHead<T>::forward(const Var<T>& features) const {
  return dense(flatten(features), weight_, bias_);
}

template <typename T>
void DenseHead<T>::append_parameters(std::vector<Var<T>>& out) const {
  out.push_back(weight_);
  out.push_back(bias_);
}

template <typename T>
void DenseHead<T>::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + "/weight", weight_->value().template cast<float>()});
  out.push_back({prefix + "/bias", bias_->value().template cast<float>()});
}

template <typename T>
void DenseHead<T>::load(const std::string& prefix, std::span<const NamedTensor> tensors) {
  load_into(weight_, tensors, prefix + "/weight");
  load_into(bias_, tensors, prefix + "/bias");
}

template <typename T>
TaskNetwork<T>::TaskNetwork(const TaskSpec& spec, const ArchitectureSpec& arch,
                            std::uint64_t seed)
    : spec_(spec) {
  if (spec.classes < 2) {
    throw ConfigError("task " + std::to_string(spec.id) + " needs at least 2 classes");
  }
  InputDims out;
  try {
    out = arch.output_dims(spec.dims);
  } catch (const ShapeError& e) {
    throw ShapeError("architecture incompatible with task " + std::to_string(spec.id) +
                     " input " + to_string(spec.dims) + ": " + e.what());
  }
  feature_size_ = out.size();
  auto rng = make_rng(seed, {spec.id, kInitStream});
  convs_ = ConvStack<T>(spec.dims.channels, arch, rng);
  head_ = DenseHead<T>(feature_size_, spec.classes, rng);
}

template <typename T>
Var<T> TaskNetwork<T>::forward(const Var<T>& x) const {
  return head_.forward(convs_.forward(x));
}

template <typename T>
Var<T> TaskNetwork<T>::forward(const Var<T>& x, std::span<const Var<T>> kernels) const {
  const auto& s = x->shape();
  if (s.size() != 4 || s[1] != spec_.dims.channels || s[2] != spec_.dims.height ||
      s[3] != spec_.dims.width) {
    throw ShapeError("task " + std::to_string(spec_.id) + " expects input [N," +
                     std::to_string(spec_.dims.channels) + "," +
                     std::to_string(spec_.dims.height) + "," + std::to_string(spec_.dims.width) +
                     "], got " + to_string(s));
  }
  return head_.forward(convs_.forward(x, kernels));
}

template <typename T>
std::vector<Var<T>> TaskNetwork<T>::parameters() const {
  std::vector<Var<T>> out;
  convs_.append_parameters(out);
  head_.append_parameters(out);
  return out;
}

template <typename T>
std::vector<NamedTensor> TaskNetwork<T>::named_tensors() const {
  std::vector<NamedTensor> out;
  const auto prefix = task_prefix(spec_.id);
  convs_.append_named(prefix, out);
  head_.append_named(prefix + "/head", out);
  return out;
}

template <typename T>
void TaskNetwork<T>::load(std::span<const NamedTensor> tensors) {
  const auto prefix = task_prefix(spec_.id);
  convs_.load(prefix, tensors);
  head_.load(prefix + "/head", tensors);
}

template <typename T>
std::vector<TaskNetwork<T>> build_networks(std::span<const TaskSpec> specs, const MtalConfig& cfg) {
  if (specs.empty()) throw ConfigError("build_networks: no tasks");
  cfg.validate();
  for (const auto& s : specs) {
    if (s.dims.channels != specs[0].dims.channels) {
      throw ShapeError("architecture incompatible with task " + std::to_string(s.id) + ": " +
                       std::to_string(s.dims.channels) + " input channels, task " +
                       std::to_string(specs[0].id) + " has " +
                       std::to_string(specs[0].dims.channels) +
                       " (first conv layers must have identical kernel shapes)");
    }
  }
  std::vector<TaskNetwork<T>> nets;
  nets.reserve(specs.size());
  for (const auto& s : specs) nets.emplace_back(s, cfg.arch, cfg.seed);
  check_architecture_identity<T>(nets);
  return nets;
}

template <typename T>
void check_architecture_identity(std::span<const TaskNetwork<T>> networks) {
  if (networks.empty()) return;
  const auto& ref = networks[0].convs();
  for (const auto& net : networks) {
    if (net.convs().size() != ref.size()) {
      throw ShapeError("task " + std::to_string(net.spec().id) + " has " +
                       std::to_string(net.convs().size()) + " conv layers, expected " +
                       std::to_string(ref.size()));
    }
    for (std::size_t l = 0; l < ref.size(); ++l) {
      if (net.convs().layer(l).kernels->shape() != ref.layer(l).kernels->shape()) {
        throw ShapeError("task " + std::to_string(net.spec().id) + " conv layer " +
                         std::to_string(l) + " kernels " +
                         to_string(net.convs().layer(l).kernels->shape()) + " differ from " +
                         to_string(ref.layer(l).kernels->shape()));
      }
    }
  }
}

template <typename T>
std::vector<KernelSet<T>> kernel_sets(std::span<const TaskNetwork<T>> networks,
                                      std::size_t layer) {
  std::vector<KernelSet<T>> sets;
  sets.reserve(networks.size());
  for (std::size_t t = 0; t < networks.size(); ++t) {
    sets.push_back({layer, t, networks[t].convs().layer(layer).kernels->value()});
  }
  return sets;
}

template <typename T>
std::vector<std::vector<SimilarityRecord>> nominate_all(std::span<const TaskNetwork<T>> networks,
                                                        const ThresholdConfig& threshold) {
  std::vector<std::vector<SimilarityRecord>> out;
  if (networks.empty()) return out;
  for (std::size_t l = 0; l < networks[0].convs().size(); ++l) {
    const auto sets = kernel_sets(networks, l);
    out.push_back(nominate_pairs<T>(sets, threshold));
  }
  return out;
}

template <typename T>
std::vector<std::vector<Var<T>>> effective_kernels(std::span<const TaskNetwork<T>> networks,
                                                   std::span<const SharingPlan<T>> plans) {
  const std::size_t tasks = networks.size();
  const std::size_t layers = tasks ? networks[0].convs().size() : 0;
  if (!plans.empty() && plans.size() != layers) {
    throw ShapeError("forward_all: " + std::to_string(plans.size()) + " plans for " +
                     std::to_string(layers) + " conv layers");
  }
  std::vector<std::vector<Var<T>>> eff(tasks, std::vector<Var<T>>(layers));
  for (std::size_t l = 0; l < layers; ++l) {
    std::vector<Var<T>> raw;
    raw.reserve(tasks);
    for (const auto& net : networks) raw.push_back(net.convs().layer(l).kernels);
    if (!plans.empty()) {
      if (plans[l].layer != l) {
        throw std::invalid_argument("forward_all: plan " + std::to_string(l) + " is for layer " +
                                    std::to_string(plans[l].layer));
      }
      raw = apply_sharing<T>(raw, plans[l]);
    }
    for (std::size_t t = 0; t < tasks; ++t) eff[t][l] = raw[t];
  }
  return eff;
}

template <typename T>
std::vector<Var<T>> forward_all(std::span<const TaskNetwork<T>> networks,
                                std::span<const Var<T>> inputs,
                                std::span<const SharingPlan<T>> plans) {
  if (inputs.size() != networks.size()) {
    throw ShapeError("forward_all: " + std::to_string(inputs.size()) + " input batches for " +
                     std::to_string(networks.size()) + " tasks");
  }
  const auto eff = effective_kernels(networks, plans);
  std::vector<Var<T>> logits;
  logits.reserve(networks.size());
  for (std::size_t t = 0; t < networks.size(); ++t) {
    logits.push_back(networks[t].forward(inputs[t], eff[t]));
  }
  return logits;
}

#define MTAL_INSTANTIATE(T)                                                                     \
  template class ConvStack<T>;                                                                  \
  template class DenseHead<T>;                                                                  \
  template class TaskNetwork<T>;                                                                \
  template std::vector<TaskNetwork<T>> build_networks(std::span<const TaskSpec>,                \
                                                      const MtalConfig&);                       \
  template void check_architecture_identity(std::span<const TaskNetwork<T>>);                  \
  template std::vector<KernelSet<T>> kernel_sets(std::span<const TaskNetwork<T>>, std::size_t); \
  template std::vector<std::vector<SimilarityRecord>> nominate_all(                             \
      std::span<const TaskNetwork<T>>, const ThresholdConfig&);                                 \
  template std::vector<std::vector<Var<T>>> effective_kernels(std::span<const TaskNetwork<T>>,  \
                                                              std::span<const SharingPlan<T>>); \
  template std::vector<Var<T>> forward_all(std::span<const TaskNetwork<T>>,                     \
                                           std::span<const Var<T>>,                             \
                                           std::span<const SharingPlan<T>>);

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
