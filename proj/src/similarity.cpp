#include "mtal/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>
#include <tuple>

#include "mtal/errors.hpp"

namespace mtal {
namespace {

std::string coordinates(std::size_t layer, std::size_t task, std::size_t kernel) {
  return "layer " + std::to_string(layer) + " task " + std::to_string(task) + " kernel " +
         std::to_string(kernel);
}

template <typename T>
double dot(std::span<const T> a, std::span<const T> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

}  // namespace

ThresholdConfig::ThresholdConfig(double delta) : delta_(delta) {
  if (!(delta >= 0.1 && delta <= 0.9)) {
    throw ConfigError("delta must lie in [0.1, 0.9], got " + std::to_string(delta));
  }
}

namespace {

// sqrt(x * x) == x in IEEE arithmetic, so a vector against itself gives
// exactly 1; the product form is only abandoned on overflow or underflow.
double cosine_from_dots(double ab, double aa, double bb) {
  const double prod = aa * bb;
  const double denom =
      std::isfinite(prod) && prod > 0.0 ? std::sqrt(prod) : std::sqrt(aa) * std::sqrt(bb);
  return std::clamp(ab / denom, -1.0, 1.0);
}

}  // namespace

template <typename T>
BasicTensor<T> vectorize(const BasicTensor<T>& kernel) {
  return kernel.reshaped(Shape{kernel.size()});
}

template <typename T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()) + " differ");
  }
  const double na2 = dot(a, a);
  const double nb2 = dot(b, b);
  if (na2 == 0.0 || nb2 == 0.0) {
    throw DegenerateKernelError("cosine_similarity: zero-norm kernel");
  }
  return cosine_from_dots(dot(a, b), na2, nb2);
}

template <typename T>
std::vector<SimilarityRecord> nominate_pairs(std::span<const KernelSet<T>> sets,
                                             const ThresholdConfig& threshold,
                                             DegeneratePolicy policy) {
  std::vector<SimilarityRecord> out;
  if (sets.empty()) return out;
  const Shape& shape = sets[0].kernels.shape();
  if (shape.empty()) throw ShapeError("nominate_pairs: kernel sets need a leading kernel axis");
  for (const auto& s : sets) {
    if (s.kernels.shape() != shape) {
      throw ShapeError("nominate_pairs: layer " + std::to_string(s.layer) + " task " +
                       std::to_string(s.task) + " kernels " + to_string(s.kernels.shape()) +
                       " differ from " + to_string(shape));
    }
    if (s.layer != sets[0].layer) {
      throw std::invalid_argument("nominate_pairs: kernel sets come from different layers");
    }
  }
  const std::size_t tasks = sets.size();
  const std::size_t m = shape[0];
  const std::size_t len = sets[0].kernels.size() / m;
  auto kernel = [&](std::size_t t, std::size_t p) {
    return sets[t].kernels.data().subspan(p * len, len);
  };

  std::vector<double> sq_norms(tasks * m);
  for (std::size_t t = 0; t < tasks; ++t) {
    for (std::size_t p = 0; p < m; ++p) {
      sq_norms[t * m + p] = dot(kernel(t, p), kernel(t, p));
      if (sq_norms[t * m + p] == 0.0) {
        const auto where = coordinates(sets[t].layer, sets[t].task, p);
        if (policy == DegeneratePolicy::Throw) {
          throw DegenerateKernelError("nominate_pairs: zero-norm kernel at " + where);
        }
        std::cerr << "warning: kernel-similarity skipping zero-norm kernel at " << where << '\n';
      }
    }
  }

  for (std::size_t i = 0; i < tasks; ++i) {
    for (std::size_t p = 0; p < m; ++p) {
      if (sq_norms[i * m + p] == 0.0) continue;
      for (std::size_t j = 0; j < tasks; ++j) {
        if (j == i) continue;
        bool found = false;
        SimilarityRecord best{sets[i].layer, sets[i].task, p, sets[j].task, 0, -2.0};
        for (std::size_t q = 0; q < m; ++q) {
          if (sq_norms[j * m + q] == 0.0) continue;
          const double sim =
              cosine_from_dots(dot(kernel(i, p), kernel(j, q)), sq_norms[i * m + p],
                               sq_norms[j * m + q]);
          if (sim >= threshold.delta() && sim > best.similarity) {
            best.kernel_q = q;
            best.similarity = sim;
            found = true;
          }
        }
        if (found) out.push_back(best);
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::tie(a.task_i, a.kernel_p, a.task_j, a.kernel_q) <
           std::tie(b.task_i, b.kernel_p, b.task_j, b.kernel_q);
  });
  return out;
}

void write_similarity_csv(std::ostream& out, std::span<const SimilarityRecord> records) {
  out << "layer,task_i,kernel_p,task_j,kernel_q,similarity\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.6f", r.similarity);
    out << r.layer << ',' << r.task_i << ',' << r.kernel_p << ',' << r.task_j << ',' << r.kernel_q
        << ',' << buf << '\n';
  }
}

#define MTAL_INSTANTIATE(T)                                                             \
  template BasicTensor<T> vectorize(const BasicTensor<T>&);                             \
  template double cosine_similarity(std::span<const T>, std::span<const T>);            \
  template std::vector<SimilarityRecord> nominate_pairs(std::span<const KernelSet<T>>, \
                                                        const ThresholdConfig&, DegeneratePolicy);

MTAL_INSTANTIATE(float)
MTAL_INSTANTIATE(double)
#undef MTAL_INSTANTIATE

}  // namespace mtal
