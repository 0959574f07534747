#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mtal/network.hpp"
#include "mtal/trainer.hpp"

namespace mtal {

// Mixing matrix alpha [N,N]; row t mixes the N columns into stream t. For two
// tasks alpha = [[a_AA, a_AB], [a_BA, a_BB]].
template <typename T>
struct CrossStitchUnit {
  Var<T> alpha;

  // Diagonal 0.9, off-diagonal 0.1 / (n - 1); identity when n == 1.
  static CrossStitchUnit near_identity(std::size_t n, bool trainable = true);
  static CrossStitchUnit identity(std::size_t n, bool trainable = false);
};

// (a_AA x_A + a_AB x_B, a_BA x_A + a_BB x_B); needs a 2x2 unit and equal shapes.
template <typename T>
std::pair<Var<T>, Var<T>> cross_stitch(const Var<T>& x_a, const Var<T>& x_b,
                                       const CrossStitchUnit<T>& unit);

// N-column form: out[t] = sum_s alpha[t,s] xs[s].
template <typename T>
std::vector<Var<T>> cross_stitch(std::span<const Var<T>> xs, const CrossStitchUnit<T>& unit);

// Gates z [R,C] and maps w[r][c] of shape [F_c, G].
template <typename T>
struct SnrRouter {
  Var<T> z;
  std::vector<std::vector<Var<T>>> w;

  std::size_t outputs() const noexcept { return w.size(); }
  std::size_t inputs() const noexcept { return w.empty() ? 0 : w.front().size(); }
};

// v_r = sum_c z[r,c] * (u_c [B,F_c] x w[r][c]); throws ShapeError on any
// dimension mismatch.
template <typename T>
std::vector<Var<T>> snr_route(std::span<const Var<T>> u, const SnrRouter<T>& router);

template <typename T>
Var<T> snr_route_output(std::span<const Var<T>> u, const SnrRouter<T>& router, std::size_t r);

// One conv trunk shared by every task plus per-task heads. All tasks must
// have the same input dims; L2 on the trunk is counted once.
template <typename T>
class HardSharedLearner final : public Learner<T> {
 public:
  HardSharedLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg);

  std::string name() const override { return "multi-hard"; }
  StepLosses<T> losses(std::size_t step, std::span<const Var<T>> inputs,
                       std::span<const std::vector<int>> labels, double lambda) override;
  Var<T> predict(std::size_t task, const Var<T>& input) override;
  std::vector<Var<T>> parameters() const override;
  std::vector<NamedTensor> named_tensors() const override;
  void load(std::span<const NamedTensor> tensors) override;
  SharingReport sharing_report() const override;

 private:
  std::vector<TaskSpec> specs_;
  MtalConfig cfg_;
  ConvStack<T> trunk_;
  std::vector<DenseHead<T>> heads_;
};

struct CrossStitchOptions {
  bool train_alpha = true;
  bool identity_init = false;  // otherwise diagonal 0.9
};

// One column per task; after every conv block the block outputs of all
// columns are mixed by that layer's unit. Each task's input runs through all
// columns, so all tasks need the same input dims.
template <typename T>
class CrossStitchLearner final : public Learner<T> {
 public:
  CrossStitchLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg,
                     CrossStitchOptions options = {});

  std::string name() const override { return "cross-stitch"; }
  StepLosses<T> losses(std::size_t step, std::span<const Var<T>> inputs,
                       std::span<const std::vector<int>> labels, double lambda) override;
  Var<T> predict(std::size_t task, const Var<T>& input) override;
  std::vector<Var<T>> parameters() const override;
  std::vector<NamedTensor> named_tensors() const override;
  void load(std::span<const NamedTensor> tensors) override;
  SharingReport sharing_report() const override;

  const std::vector<CrossStitchUnit<T>>& units() const noexcept { return units_; }

 private:
  MtalConfig cfg_;
  CrossStitchOptions options_;
  std::vector<TaskNetwork<T>> networks_;
  std::vector<CrossStitchUnit<T>> units_;  // one per conv layer
};

struct SnrOptions {
  std::size_t subnetworks = 2;
  std::size_t hidden = 32;
};

// Shared bottom split into conv sub-networks u_c; task r reads
// relu(v_r) with v_r routed by sigmoid gates. L2 on the sub-networks is
// counted once; gate logits are not regularized.
template <typename T>
class SnrLearner final : public Learner<T> {
 public:
  SnrLearner(std::span<const TaskSpec> specs, const MtalConfig& cfg, SnrOptions options = {});

  std::string name() const override { return "snr"; }
  StepLosses<T> losses(std::size_t step, std::span<const Var<T>> inputs,
                       std::span<const std::vector<int>> labels, double lambda) override;
  Var<T> predict(std::size_t task, const Var<T>& input) override;
  std::vector<Var<T>> parameters() const override;
  std::vector<NamedTensor> named_tensors() const override;
  void load(std::span<const NamedTensor> tensors) override;
  SharingReport sharing_report() const override;

  SnrRouter<T> router() const;

 private:
  std::vector<TaskSpec> specs_;
  MtalConfig cfg_;
  SnrOptions options_;
  std::vector<ConvStack<T>> subnets_;
  Var<T> gate_logits_;                      // [R,C]
  std::vector<std::vector<Var<T>>> maps_;   // [R][C], [F, hidden]
  std::vector<DenseHead<T>> heads_;
};

enum class Method { Mtal, Single, HardShared, CrossStitch, Snr };

// Accepts mtal, single, multi-hard (alias hard-shared), cross-stitch, snr.
Method parse_method(std::string_view name);
std::string method_name(Method method);
bool needs_common_dims(Method method);

// Resizes every task (nearest neighbour) to the largest height and width in
// the group; channel counts must already agree.
std::vector<TaskData> resize_to_common(std::span<const TaskData> tasks);

// Trains `method` on the tasks and reports in the shared schema. Single runs
// one independent network per task on the group's steps-per-epoch schedule
// and merges their losses and checkpoints. Common-dims methods resize first.
FitResult run_method(Method method, std::span<const TaskData> tasks, const MtalConfig& cfg,
                     const FitOptions& options = {});

}  // namespace mtal
