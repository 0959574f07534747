#include "mtal/parallel.hpp"

#include <cstdlib>
#include <string>

namespace mtal {

std::size_t thread_count() {
  static const std::size_t count = [] {
    const char* env = std::getenv("MTAL_THREADS");
    if (env == nullptr) return std::size_t{1};
    try {
      const long v = std::stol(env);
      return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
    } catch (...) {
      return std::size_t{1};
    }
  }();
  return count;
}

}  // namespace mtal
