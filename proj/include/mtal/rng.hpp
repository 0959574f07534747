#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace mtal {

// Independent generator for one purpose (e.g. {task id, init}) derived from a
// run seed, so adding a consumer never shifts another consumer's stream.
std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

// Stream salts.
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kBatchStream = 2;
inline constexpr std::uint64_t kSplitStream = 3;
inline constexpr std::uint64_t kDataStream = 4;
inline constexpr std::uint64_t kSharedStream = 5;

}  // namespace mtal
