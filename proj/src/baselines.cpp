#include "mtal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "mtal/errors.hpp"
#include "mtal/ops.hpp"
#include "mtal/rng.hpp"

namespace mtal {
namespace {

template <typename T>
Var<T> uniform_parameter(Shape shape, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  BasicTensor<T> value(std::move(shape));
  for (auto& v : value.data()) v = static_cast<T>(dist(rng));
  return parameter(std::move(value));
}

template <typename T>
Var<T> l2_term(std::span<const Var<T>> weights, double lambda) {
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0, got " + std::to_string(lambda));
  if (lambda == 0.0 || weights.empty()) return nullptr;
  std::vector<Var<T>> squares;
  for (const auto& w : weights) squares.push_back(sum_squares<T>(w));
  return scale<T>(add_n<T>(squares), lambda);
}

void require_common_dims(std::span<const TaskSpec> specs, const std::string& who) {
  if (specs.empty()) throw ConfigError(who + ": no tasks");
  for (const auto& s : specs) {
    if (s.dims != specs.front().dims) {
      throw ConfigError(who + ": task " + std::to_string(s.id) + " has input " +
                        to_string(s.dims) + ", expected " + to_string(specs.front().dims) +
                        " (resize to a common size first)");
    }
  }
}

template <typename T>
Var<T> coefficient_matrix(std::size_t n, double diagonal, double off, bool trainable) {
  BasicTensor<T> a({n, n}, static_cast<T>(off));
  for (std::size_t i = 0; i < n; ++i) a.at({i, i}) = static_cast<T>(diagonal);
  return trainable ? parameter(std::move(a)) : constant(std::move(a));
}

SharingReport empty_report(const ArchitectureSpec& arch, std::size_t tasks) {
  std::vector<std::vector<SimilarityRecord>> none(arch.conv_layers);
  const auto kernels = kernels_per_layer(arch);
  return sharing_report(none, tasks, kernels);
}

std::string sub_prefix(std::size_t c) { return "subnet" + std::to_string(c); }

}  // namespace

template <typename T>
CrossStitchUnit<T> CrossStitchUnit<T>::near_identity(std::size_t n, bool trainable) {
  if (n == 0) throw ShapeError("cross-stitch unit needs n >= 1");
  if (n == 1) return {coefficient_matrix<T>(1, 1.0, 0.0, trainable)};
  return {coefficient_matrix<T>(n, 0.9, 0.1 / static_cast<double>(n - 1), trainable)};
}

template <typename T>
CrossStitchUnit<T> CrossStitchUnit<T>::identity(std::size_t n, bool trainable) {
  if (n == 0) throw ShapeError("cross-stitch unit needs n >= 1");
  return {coefficient_matrix<T>(n, 1.0, 0.0, trainable)};
}

template <typename T>
std::vector<Var<T>> cross_stitch(std::span<const Var<T>> xs, const CrossStitchUnit<T>& unit) {
  const auto& shape = unit.alpha->shape();
  if (shape.size() != 2 || shape[0] != xs.size() || shape[1] != xs.size()) {
    throw ShapeError("cross_stitch: alpha " + to_string(shape) + " for " +
                     std::to_string(xs.size()) + " inputs");
  }
  for (const auto& x : xs) {
    if (x->shape() != xs.front()->shape()) {
      throw ShapeError("cross_stitch: input shapes " + to_string(xs.front()->shape()) + " and " +
                       to_string(x->shape()) + " differ");
    }
  }
  std::vector<Var<T>> out;
  for (std::size_t t = 0; t < xs.size(); ++t) out.push_back(mix<T>(xs, unit.alpha, t));
  return out;
}

template <typename T>
std::pair<Var<T>, Var<T>> cross_stitch(const Var<T>& x_a, const Var<T>& x_b,
                                       const CrossStitchUnit<T>& unit) {
  const std::vector<Var<T>> xs{x_a, x_b};
  auto out = cross_stitch<T>(std::span<const Var<T>>(xs), unit);
  return {out[0], out[1]};
}

template <typename T>
Var<T> snr_route_output(std::span<const Var<T>> u, const SnrRouter<T>& router, std::size_t r) {
  const std::size_t rows = router.outputs();
  const std::size_t cols = router.inputs();
  const Shape want{rows, cols};
  if (!router.z || router.z->shape() != want) {
    throw ShapeError("snr_route: gates " + (router.z ? to_string(router.z->shape()) : "null") +
                     " for " + std::to_string(rows) + " outputs x " + std::to_string(cols) +
                     " inputs");
  }
  if (u.size() != cols) {
    throw ShapeError("snr_route: " + std::to_string(u.size()) + " inputs, router expects " +
                     std::to_string(cols));
  }
  if (r >= rows) throw ShapeError("snr_route: output " + std::to_string(r) + " out of range");
  if (router.w[r].size() != cols) {
    throw ShapeError("snr_route: output " + std::to_string(r) + " has " +
                     std::to_string(router.w[r].size()) + " maps, expected " +
                     std::to_string(cols));
  }
  std::vector<Var<T>> terms;
  for (std::size_t c = 0; c < cols; ++c) terms.push_back(matmul<T>(u[c], router.w[r][c]));
  return mix<T>(terms, router.z, r);
}

template <typename T>
std::vector<Var<T>> snr_route(std::span<const Var<T>> u, const SnrRouter<T>& router) {
  for (const auto& row : router.w) {
    if (row.size() != router.inputs()) throw ShapeError("snr_route: ragged transformation maps");
  }
  std::vector<Var<T>> out;
  for (std::size_t r = 0; r < router.outputs(); ++r) out.push_back(snr_route_output(u, router, r));
  return out;
}

// Hard-shared.

template <typename T>
HardSharedLearner<T>::HardSharedLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg)
    : specs_(specs.begin(), specs.end()), cfg_(cfg) {
  cfg_.validate();
  require_common_dims(specs, "multi-hard");
  auto trunk_rng = make_rng(cfg.seed, {kSharedStream, 0, kInitStream});
  trunk_ = ConvStack<T>(specs.front().dims.channels, cfg.arch, trunk_rng);
  const std::size_t features = cfg.arch.output_dims(specs.front().dims).size();
  for (const auto& s : specs) {
    auto rng = make_rng(cfg.seed, {s.id, kInitStream});
    heads_.emplace_back(features, s.classes, rng);
  }
}

template <typename T>
StepLosses<T> HardSharedLearner<T>::losses(std::size_t, std::span<const Var<T>> inputs,
                                           std::span<const std::vector<int>> labels,
                                           double lambda) {
  StepLosses<T> out;
  for (std::size_t t = 0; t < heads_.size(); ++t) {
    std::vector<Var<T>> head_params;
    heads_[t].append_parameters(head_params);
    out.task.push_back(task_loss<T>(predict(t, inputs[t]), labels[t], head_params, lambda));
  }
  std::vector<Var<T>> trunk_params;
  trunk_.append_parameters(trunk_params);
  out.shared = l2_term<T>(trunk_params, lambda);
  return out;
}

template <typename T>
Var<T> HardSharedLearner<T>::predict(std::size_t task, const Var<T>& input) {
  return heads_.at(task).forward(trunk_.forward(input));
}

template <typename T>
std::vector<Var<T>> HardSharedLearner<T>::parameters() const {
  std::vector<Var<T>> out;
  trunk_.append_parameters(out);
  for (const auto& h : heads_) h.append_parameters(out);
  return out;
}

template <typename T>
std::vector<NamedTensor> HardSharedLearner<T>::named_tensors() const {
  std::vector<NamedTensor> out;
  trunk_.append_named("trunk", out);
  for (std::size_t t = 0; t < heads_.size(); ++t) {
    heads_[t].append_named(task_prefix(specs_[t].id) + "/head", out);
  }
  return out;
}

template <typename T>
void HardSharedLearner<T>::load(std::span<const NamedTensor> tensors) {
  trunk_.load("trunk", tensors);
  for (std::size_t t = 0; t < heads_.size(); ++t) {
    heads_[t].load(task_prefix(specs_[t].id) + "/head", tensors);
  }
}

template <typename T>
SharingReport HardSharedLearner<T>::sharing_report() const {
  return empty_report(cfg_.arch, heads_.size());
}

// Cross-stitch.

template <typename T>
CrossStitchLearner<T>::CrossStitchLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg,
                                          CrossStitchOptions options)
    : cfg_(cfg), options_(options) {
  require_common_dims(specs, "cross-stitch");
  networks_ = build_networks<T>(specs, cfg);
  for (std::size_t l = 0; l < cfg.arch.conv_layers; ++l) {
    units_.push_back(options.identity_init
                         ? CrossStitchUnit<T>::identity(specs.size(), options.train_alpha)
                         : CrossStitchUnit<T>::near_identity(specs.size(), options.train_alpha));
  }
}

template <typename T>
Var<T> CrossStitchLearner<T>::predict(std::size_t task, const Var<T>& input) {
  std::vector<Var<T>> streams(networks_.size(), input);
  for (std::size_t l = 0; l < units_.size(); ++l) {
    for (std::size_t c = 0; c < networks_.size(); ++c) {
      const auto& convs = networks_[c].convs();
      streams[c] = convs.block(l, streams[c], convs.layer(l).kernels);
    }
    if (l + 1 == units_.size()) {
      const Var<T> mine = mix<T>(streams, units_[l].alpha, task);
      return networks_.at(task).head().forward(mine);
    }
    streams = cross_stitch<T>(std::span<const Var<T>>(streams), units_[l]);
  }
  throw std::logic_error("cross-stitch: no conv layers");
}

template <typename T>
StepLosses<T> CrossStitchLearner<T>::losses(std::size_t, std::span<const Var<T>> inputs,
                                            std::span<const std::vector<int>> labels,
                                            double lambda) {
  StepLosses<T> out;
  for (std::size_t t = 0; t < networks_.size(); ++t) {
    out.task.push_back(
        task_loss<T>(predict(t, inputs[t]), labels[t], networks_[t].parameters(), lambda));
  }
  return out;
}

template <typename T>
std::vector<Var<T>> CrossStitchLearner<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& net : networks_) {
    const auto p = net.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  if (options_.train_alpha) {
    for (const auto& u : units_) out.push_back(u.alpha);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor> CrossStitchLearner<T>::named_tensors() const {
  std::vector<NamedTensor> out;
  for (const auto& net : networks_) {
    auto named = net.named_tensors();
    out.insert(out.end(), named.begin(), named.end());
  }
  for (std::size_t l = 0; l < units_.size(); ++l) {
    out.push_back({"stitch/conv" + std::to_string(l) + "/alpha",
                   units_[l].alpha->value().template cast<float>()});
  }
  return out;
}

template <typename T>
void CrossStitchLearner<T>::load(std::span<const NamedTensor> tensors) {
  for (auto& net : networks_) net.load(tensors);
  for (std::size_t l = 0; l < units_.size(); ++l) {
    const auto& src = find_tensor(tensors, "stitch/conv" + std::to_string(l) + "/alpha");
    if (src.shape() != units_[l].alpha->shape()) {
      throw FormatError("checkpoint: stitch/conv" + std::to_string(l) + "/alpha has shape " +
                        to_string(src.shape()));
    }
    units_[l].alpha->mutable_value() = src.template cast<T>();
  }
}

template <typename T>
SharingReport CrossStitchLearner<T>::sharing_report() const {
  return empty_report(cfg_.arch, networks_.size());
}

// SNR.

template <typename T>
SnrLearner<T>::SnrLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg,
                          SnrOptions options)
    : specs_(specs.begin(), specs.end()), cfg_(cfg), options_(options) {
  cfg_.validate();
  require_common_dims(specs, "snr");
  if (options.subnetworks == 0 || options.hidden == 0) {
    throw ConfigError("snr: subnetworks and hidden must be positive");
  }
  const std::size_t features = cfg.arch.output_dims(specs.front().dims).size();
  for (std::size_t c = 0; c < options.subnetworks; ++c) {
    auto rng = make_rng(cfg.seed, {kSharedStream, c + 1, kInitStream});
    subnets_.emplace_back(specs.front().dims.channels, cfg.arch, rng);
  }
  gate_logits_ = parameter(BasicTensor<T>({specs.size(), options.subnetworks}));
  for (const auto& s : specs) {
    auto rng = make_rng(cfg.seed, {s.id, kInitStream});
    std::vector<Var<T>> row;
    for (std::size_t c = 0; c < options.subnetworks; ++c) {
      row.push_back(uniform_parameter<T>({features, options.hidden},
                                         std::sqrt(6.0 / static_cast<double>(features)), rng));
    }
    maps_.push_back(std::move(row));
    heads_.emplace_back(options.hidden, s.classes, rng);
  }
}

template <typename T>
SnrRouter<T> SnrLearner<T>::router() const {
  return {sigmoid<T>(gate_logits_), maps_};
}

template <typename T>
Var<T> SnrLearner<T>::predict(std::size_t task, const Var<T>& input) {
  std::vector<Var<T>> u;
  for (const auto& net : subnets_) u.push_back(flatten<T>(net.forward(input)));
  const Var<T> v = snr_route_output<T>(u, router(), task);
  return heads_.at(task).forward(relu<T>(v));
}

template <typename T>
StepLosses<T> SnrLearner<T>::losses(std::size_t, std::span<const Var<T>> inputs,
                                    std::span<const std::vector<int>> labels, double lambda) {
  StepLosses<T> out;
  for (std::size_t r = 0; r < heads_.size(); ++r) {
    std::vector<Var<T>> own(maps_[r].begin(), maps_[r].end());
    heads_[r].append_parameters(own);
    out.task.push_back(task_loss<T>(predict(r, inputs[r]), labels[r], own, lambda));
  }
  std::vector<Var<T>> shared;
  for (const auto& net : subnets_) net.append_parameters(shared);
  out.shared = l2_term<T>(shared, lambda);
  return out;
}

template <typename T>
std::vector<Var<T>> SnrLearner<T>::parameters() const {
  std::vector<Var<T>> out;
  for (const auto& net : subnets_) net.append_parameters(out);
  out.push_back(gate_logits_);
  for (std::size_t r = 0; r < heads_.size(); ++r) {
    out.insert(out.end(), maps_[r].begin(), maps_[r].end());
    heads_[r].append_parameters(out);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor> SnrLearner<T>::named_tensors() const {
  std::vector<NamedTensor> out;
  for (std::size_t c = 0; c < subnets_.size(); ++c) subnets_[c].append_named(sub_prefix(c), out);
  out.push_back({"router/gate_logits", gate_logits_->value().template cast<float>()});
  for (std::size_t r = 0; r < heads_.size(); ++r) {
    const auto prefix = task_prefix(specs_[r].id);
    for (std::size_t c = 0; c < maps_[r].size(); ++c) {
      out.push_back({prefix + "/route" + std::to_string(c),
                     maps_[r][c]->value().template cast<float>()});
    }
    heads_[r].append_named(prefix + "/head", out);
  }
  return out;
}

template <typename T>
void SnrLearner<T>::load(std::span<const NamedTensor> tensors) {
  auto assign = [&](const Var<T>& dst, const std::string& name) {
    const auto& src = find_tensor(tensors, name);
    if (src.shape() != dst->shape()) {
      throw FormatError("checkpoint: " + name + " has shape " + to_string(src.shape()) +
                        ", expected " + to_string(dst->shape()));
    }
    dst->mutable_value() = src.template cast<T>();
  };
  for (std::size_t c = 0; c < subnets_.size(); ++c) subnets_[c].load(sub_prefix(c), tensors);
  assign(gate_logits_, "router/gate_logits");
  for (std::size_t r = 0; r < heads_.size(); ++r) {
    const auto prefix = task_prefix(specs_[r].id);
    for (std::size_t c = 0; c < maps_[r].size(); ++c) {
      assign(maps_[r][c], prefix + "/route" + std::to_string(c));
    }
    heads_[r].load(prefix + "/head", tensors);
  }
}

template <typename T>
SharingReport SnrLearner<T>::sharing_report() const {
  return empty_report(cfg_.arch, heads_.size());
}

// Method dispatch.

Method parse_method(std::string_view name) {
  if (name == "mtal") return Method::Mtal;
  if (name == "single") return Method::Single;
  if (name == "multi-hard" || name == "hard-shared") return Method::HardShared;
  if (name == "cross-stitch") return Method::CrossStitch;
  if (name == "snr") return Method::Snr;
  throw ConfigError("experiment.method: unknown method '" + std::string(name) +
                    "' (expected mtal, single, multi-hard, cross-stitch or snr)");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::Mtal: return "mtal";
    case Method::Single: return "single";
    case Method::HardShared: return "multi-hard";
    case Method::CrossStitch: return "cross-stitch";
    case Method::Snr: return "snr";
  }
  throw std::logic_error("unknown method");
}

bool needs_common_dims(Method method) {
  return method == Method::HardShared || method == Method::CrossStitch || method == Method::Snr;
}

std::vector<TaskData> resize_to_common(std::span<const TaskData> tasks) {
  std::size_t height = 0, width = 0;
  for (const auto& t : tasks) {
    if (t.spec.dims.channels != tasks.front().spec.dims.channels) {
      throw ConfigError("task " + std::to_string(t.spec.id) + " has " +
                        std::to_string(t.spec.dims.channels) +
                        " channels; resizing needs equal channel counts");
    }
    height = std::max(height, t.spec.dims.height);
    width = std::max(width, t.spec.dims.width);
  }
  std::vector<TaskData> out;
  for (const auto& t : tasks) {
    TaskData r{t.spec, resize_nearest(t.train, height, width), resize_nearest(t.test, height, width)};
    r.spec.dims = {t.spec.dims.channels, height, width};
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<TaskSpec> specs_of(std::span<const TaskData> tasks) {
  std::vector<TaskSpec> specs;
  for (const auto& t : tasks) specs.push_back(t.spec);
  return specs;
}

FitResult run_single(std::span<const TaskData> tasks, const MtalConfig& cfg,
                     const FitOptions& options) {
  MtalConfig solo = cfg;
  solo.sharing_enabled = false;
  FitOptions per_task;
  per_task.steps_per_epoch = options.steps_per_epoch != 0
                                 ? options.steps_per_epoch
                                 : default_steps_per_epoch(tasks, cfg.batch_size);
  FitResult merged;
  std::vector<FitResult> runs;
  std::vector<NamedTensor> checkpoint;
  for (const auto& t : tasks) {
    const TaskSpec spec = t.spec;
    MtalLearner<float> learner(std::span<const TaskSpec>(&spec, 1), solo);
    runs.push_back(fit<float>(learner, std::span<const TaskData>(&t, 1), solo, per_task));
    auto named = learner.named_tensors();
    checkpoint.insert(checkpoint.end(), named.begin(), named.end());
    merged.accuracy.push_back(runs.back().accuracy.front());
  }
  // Interleave per-task histories back into (step, task) order.
  const std::size_t steps = runs.front().state.step;
  merged.state = runs.front().state;
  merged.state.losses.clear();
  merged.state.totals.clear();
  for (std::size_t s = 0; s < steps; ++s) {
    double total = 0.0;
    for (const auto& r : runs) {
      merged.state.losses.push_back(r.state.losses.at(s));
      total += r.state.losses.at(s).loss;
    }
    merged.state.totals.push_back({s, total});
  }
  std::vector<std::vector<SimilarityRecord>> none(cfg.arch.conv_layers);
  const auto kernels = kernels_per_layer(cfg.arch);
  merged.sharing = sharing_report(none, tasks.size(), kernels);
  if (!options.out_dir.empty()) write_run_outputs(options.out_dir, merged, checkpoint);
  return merged;
}

}  // namespace

FitResult run_method(Method method, std::span<const TaskData> tasks, const MtalConfig& cfg,
                     const FitOptions& options) {
  if (tasks.empty()) throw ConfigError("run_method: no tasks");
  if (method == Method::Single) return run_single(tasks, cfg, options);
  std::vector<TaskData> resized;
  if (needs_common_dims(method)) {
    resized = resize_to_common(tasks);
    tasks = resized;
  }
  const auto specs = specs_of(tasks);
  switch (method) {
    case Method::Mtal: {
      MtalLearner<float> learner(specs, cfg);
      return fit<float>(learner, tasks, cfg, options);
    }
    case Method::HardShared: {
      HardSharedLearner<float> learner(specs, cfg);
      return fit<float>(learner, tasks, cfg, options);
    }
    case Method::CrossStitch: {
      CrossStitchLearner<float> learner(specs, cfg);
      return fit<float>(learner, tasks, cfg, options);
    }
    case Method::Snr: {
      SnrLearner<float> learner(specs, cfg);
      return fit<float>(learner, tasks, cfg, options);
    }
    case Method::Single: break;
  }
  throw std::logic_error("run_method: unhandled method");
}

#define MTAL_INSTANTIATE(T)                                                                   \
  template struct CrossStitchUnit<T>;                                                         \
  template std::vector<Var<T>> cross_stitch(std::span<const Var<T>>,                          \
                                            const CrossStitchUnit<T>&);                       \
  template std::pair<Var<T>, Var<T>> cross_stitch(const Var<T>&, const Var<T>&,               \
                                                  const CrossStitchUnit<T>&);                 \
  template Var<T> snr_route_output(std::span<const Var<T>>, const SnrRouter<T>&, std::size_t); \
  template std::vector<Var<T>> snr_route(std::span<const Var<T>>, const SnrRouter<T>&);       \
  template class HardSharedLearner<T>;                                                        \
  template class CrossStitchLearner<T>;                                                       \
  template class SnrLearner<T>;

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
