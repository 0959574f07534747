#pragma once

// Independent reference implementations written directly from the formulas.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mtal/similarity.hpp"
#include "mtal/tensor.hpp"

namespace mtal::testing {

// Direct nested-loop convolution, stride 1, zero padding `pad` on each side.
template <typename T>
std::vector<double> values(const mtal::BasicTensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

inline std::vector<double> naive_conv2d(const std::vector<double>& x, std::size_t n,
                                        std::size_t c, std::size_t h, std::size_t w,
                                        const std::vector<double>& k, std::size_t m,
                                        std::size_t kh, std::size_t kw,
                                        const std::vector<double>& bias, std::size_t pad) {
  const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  std::vector<double> out(n * m * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < m; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double s = bias[o];
          for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t dy = 0; dy < kh; ++dy)
              for (std::size_t dx = 0; dx < kw; ++dx) {
                const long iy = static_cast<long>(y + dy) - static_cast<long>(pad);
                const long ix = static_cast<long>(xx + dx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                s += x[((b * c + ci) * h + iy) * w + ix] * k[((o * c + ci) * kh + dy) * kw + dx];
              }
          out[((b * m + o) * oh + y) * ow + xx] = s;
        }
  return out;
}

inline std::vector<double> naive_dense(const std::vector<double>& x, std::size_t n,
                                       std::size_t f, const std::vector<double>& w,
                                       std::size_t g, const std::vector<double>& b) {
  std::vector<double> out(n * g);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < g; ++j) {
      double s = b[j];
      for (std::size_t i = 0; i < f; ++i) s += x[r * f + i] * w[i * g + j];
      out[r * g + j] = s;
    }
  return out;
}

// mean over rows of log(sum exp(z - max)) + max - z[label].
inline double cross_entropy_oracle(const std::vector<double>& logits, std::size_t n,
                                   std::size_t c, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* z = logits.data() + r * c;
    const double mx = *std::max_element(z, z + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z[j] - mx);
    total += std::log(s) + mx - z[labels[r]];
  }
  return total / static_cast<double>(n);
}

// Extended precision, rounded once, so values that are mathematically equal
// (ties, or exactly delta) come out as the same double.
inline double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / std::sqrt(na * nb));
}

// Every cross pair (i,p,j,q), filtered by delta, then reduced to the best q
// per (i,p,j) with the lowest q winning ties.
template <typename T>
std::vector<SimilarityRecord> brute_force_nominate(const std::vector<KernelSet<T>>& sets,
                                                   double delta) {
  std::vector<SimilarityRecord> all;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = 0; j < sets.size(); ++j) {
      if (i == j) continue;
      const std::size_t m = sets[i].kernels.dim(0);
      const std::size_t len = sets[i].kernels.size() / m;
      for (std::size_t p = 0; p < m; ++p)
        for (std::size_t q = 0; q < m; ++q) {
          std::vector<double> a(len), b(len);
          for (std::size_t k = 0; k < len; ++k) {
            a[k] = sets[i].kernels[p * len + k];
            b[k] = sets[j].kernels[q * len + k];
          }
          const double s = std::clamp(cosine_oracle(a, b), -1.0, 1.0);
          if (s >= delta) all.push_back({sets[i].layer, i, p, j, q, s});
        }
    }
  std::vector<SimilarityRecord> best;
  for (const auto& r : all) {
    auto it = std::find_if(best.begin(), best.end(), [&](const SimilarityRecord& b) {
      return b.task_i == r.task_i && b.kernel_p == r.kernel_p && b.task_j == r.task_j;
    });
    if (it == best.end()) {
      best.push_back(r);
    } else if (r.similarity > it->similarity) {
      *it = r;
    }
  }
  std::sort(best.begin(), best.end(), [](const SimilarityRecord& a, const SimilarityRecord& b) {
    return std::tie(a.task_i, a.kernel_p, a.task_j, a.kernel_q) <
           std::tie(b.task_i, b.kernel_p, b.task_j, b.kernel_q);
  });
  return best;
}

inline double mean_oracle(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_std_oracle(const std::vector<double>& v) {
  const double m = mean_oracle(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace mtal::testing
