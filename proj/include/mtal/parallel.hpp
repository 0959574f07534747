#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace mtal {

// Worker count for internal loops: MTAL_THREADS if set and positive, else 1.
std::size_t thread_count();

// Runs fn(i) for i in [0, n). Iterations are split into contiguous chunks;
// each index is processed by exactly one worker, so results do not depend on
// the thread count as long as fn writes only to index-owned outputs.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (std::size_t i = 0; i < std::min(n, chunk); ++i) fn(i);
}

}  // namespace mtal
