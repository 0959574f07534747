#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "mtal/autodiff.hpp"
#include "mtal/similarity.hpp"

namespace mtal {

enum class PhiMode { Learnable, Fixed };

// Identifies one directed kernel pair: kernel p of task i borrowing from
// kernel q of task j at conv layer `layer`.
struct PhiKey {
  std::size_t layer = 0;
  std::size_t task_i = 0;
  std::size_t kernel_p = 0;
  std::size_t task_j = 0;
  std::size_t kernel_q = 0;

  friend auto operator<=>(const PhiKey&, const PhiKey&) = default;
};

PhiKey phi_key(const SimilarityRecord& record);

// phi = sigmoid(rho), evaluated in double.
double phi_from_raw(double rho);

// Raw mixing scalars rho, one per directed pair, created at 0 (phi = 0.5) on
// first use and kept across batches even while the pair is not nominated.
template <typename T>
class PhiStore {
 public:
  Var<T> raw(const PhiKey& key);
  const std::map<PhiKey, Var<T>>& entries() const noexcept { return raw_; }
  std::vector<Var<T>> parameters() const;

 private:
  std::map<PhiKey, Var<T>> raw_;
};

template <typename T>
struct PlanEntry {
  SimilarityRecord record;
  Var<T> rho;               // null when phi is fixed
  double fixed_phi = 0.5;

  // Weight of task i's own kernel.
  double phi_forward() const { return rho ? phi_from_raw(rho->value()[0]) : fixed_phi; }
  // Weight of the partner kernel; phi_forward() + phi_backward() == 1.
  double phi_backward() const { return 1.0 - phi_forward(); }
};

template <typename T>
struct SharingPlan {
  std::size_t layer = 0;
  std::vector<PlanEntry<T>> entries;
};

template <typename T>
SharingPlan<T> make_plan(std::size_t layer, std::span<const SimilarityRecord> records,
                         PhiMode mode, PhiStore<T>& store, double fixed_phi = 0.5);

// phi * w_i + (1 - phi) * w_j, clamped elementwise to [min, max] of the two
// inputs so the result is a convex combination even after rounding.
template <typename T>
Var<T> aggregate_pair(const Var<T>& w_i, const Var<T>& w_j, double phi);

// Learnable form with phi = sigmoid(rho); rho is a single-element node.
template <typename T>
Var<T> aggregate_pair(const Var<T>& w_i, const Var<T>& w_j, const Var<T>& rho);

// Aggregated kernels feeding one effective kernel (task `task`, kernel
// `kernel`). A kernel without nominated partners has no bank.
template <typename T>
struct KernelBank {
  std::size_t layer = 0;
  std::size_t task = 0;
  std::size_t kernel = 0;
  std::vector<Var<T>> members;
};

// Elementwise mean of the members.
template <typename T>
Var<T> bank_average(std::span<const Var<T>> members);

template <typename T>
Var<T> bank_average(const KernelBank<T>& bank) {
  return bank_average<T>(std::span<const Var<T>>(bank.members));
}

// raw_kernels[t] is task t's [m,C,kh,kw] kernel node at the plan's layer.
template <typename T>
std::vector<KernelBank<T>> build_banks(std::span<const Var<T>> raw_kernels,
                                       const SharingPlan<T>& plan);

// Effective kernels per task: bank averages where a bank exists, raw kernels
// elsewhere. A task without plan entries gets its raw node back unchanged.
template <typename T>
std::vector<Var<T>> apply_sharing(std::span<const Var<T>> raw_kernels, const SharingPlan<T>& plan);

struct SharingReport {
  std::vector<std::size_t> shared;  // per layer
  std::vector<std::size_t> total;   // per layer
  std::size_t shared_total = 0;
  std::size_t kernel_total = 0;

  double layer_ratio(std::size_t layer) const;
  double total_ratio() const;
};

// Fraction of kernels taking part in at least one nominated pair (as either
// side). records_per_layer[l] holds layer l's records.
SharingReport sharing_report(std::span<const std::vector<SimilarityRecord>> records_per_layer,
                             std::size_t tasks, std::span<const std::size_t> kernels_per_layer);

template <typename T>
SharingReport sharing_report(std::span<const SharingPlan<T>> plans, std::size_t tasks,
                             std::span<const std::size_t> kernels_per_layer);

// "layer,ratio_percent" then conv1..convL and a total row, 1 decimal place.
void write_sharing_report_csv(std::ostream& out, const SharingReport& report);

}  // namespace mtal
