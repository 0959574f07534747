#pragma once

#include <compare>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

#include "mtal/tensor.hpp"

namespace mtal {

// The m kernels [m,C,kh,kw] of conv layer `layer` in task network `task`.
template <typename T>
struct KernelSet {
  std::size_t layer = 0;
  std::size_t task = 0;
  BasicTensor<T> kernels;
};

// Cosine similarity between kernel p of task i and kernel q of task j.
struct SimilarityRecord {
  std::size_t layer = 0;
  std::size_t task_i = 0;
  std::size_t kernel_p = 0;
  std::size_t task_j = 0;
  std::size_t kernel_q = 0;
  double similarity = 0.0;

  friend bool operator==(const SimilarityRecord&, const SimilarityRecord&) = default;
};

inline constexpr double kRelatedDelta = 0.4;
inline constexpr double kUnrelatedDelta = 0.55;

// Sharing threshold; only values in [0.1, 0.9] are accepted.
class ThresholdConfig {
 public:
  explicit ThresholdConfig(double delta);

  static ThresholdConfig related() { return ThresholdConfig(kRelatedDelta); }
  static ThresholdConfig unrelated() { return ThresholdConfig(kUnrelatedDelta); }

  double delta() const noexcept { return delta_; }

 private:
  double delta_;
};

// Row-major flattening of one kernel.
template <typename T>
BasicTensor<T> vectorize(const BasicTensor<T>& kernel);

// dot(a,b) / (|a| |b|) accumulated in double and clamped to [-1, 1].
// Throws DegenerateKernelError when either vector has zero norm.
template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b);

template <typename T>
double cosine_similarity(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return cosine_similarity<T>(a.data(), b.data());
}

enum class DegeneratePolicy { Skip, Throw };

// Cross-task kernel pairs with similarity >= delta. For every (i, p, j) with
// j != i only the best-matching q is kept (lowest q on ties). Output is
// ordered by (i, p, j, q). Zero-norm kernels are skipped with a warning on
// stderr, or reported as DegenerateKernelError under DegeneratePolicy::Throw.
template <typename T>
std::vector<SimilarityRecord> nominate_pairs(std::span<const KernelSet<T>> sets,
                                             const ThresholdConfig& threshold,
                                             DegeneratePolicy policy = DegeneratePolicy::Skip);

// layer,task_i,kernel_p,task_j,kernel_q,similarity (6 decimals).
void write_similarity_csv(std::ostream& out, std::span<const SimilarityRecord> records);

}  // namespace mtal
