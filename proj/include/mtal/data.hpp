#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mtal/network.hpp"
#include "mtal/tensor.hpp"

namespace mtal {

// In-memory labelled image set; examples are contiguous [C,H,W] blocks.
struct Dataset {
  InputDims dims;
  std::size_t classes = 2;
  std::vector<float> data;
  std::vector<int> labels;  // 0-based

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const float> example(std::size_t h) const {
    return std::span<const float>(data).subspan(h * dims.size(), dims.size());
  }
  // Throws FormatError on inconsistent lengths or out-of-range labels.
  void validate() const;
};

// Directory layout:
//   meta        key=value lines: channels, height, width, classes, count
//   data.bin    count*C*H*W little-endian f32, examples concatenated
//   labels.csv  one 0-based label per line
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

struct Split {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

enum class SplitMode { Stratified, Random };

// 70% train / 30% test. Stratified mode rounds 0.7 * n_c per class (a class
// with a single example goes to train). Deterministic given the seed.
Split split_70_30(const Dataset& dataset, std::uint64_t seed,
                  SplitMode mode = SplitMode::Stratified);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

// Per-channel mean and standard deviation (1 where the channel is constant).
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

Normalization fit_normalization(const Dataset& train);
Dataset normalize(const Dataset& dataset, const Normalization& stats);

// Nearest-neighbour resampling of every example to height x width.
Dataset resize_nearest(const Dataset& dataset, std::size_t height, std::size_t width);

// Counter-clockwise rotation of every example by quarter_turns * 90 degrees.
// Needs square images unless quarter_turns is even.
Dataset rotate_quarter_turns(const Dataset& dataset, int quarter_turns);

struct SyntheticTask {
  InputDims dims{1, 16, 16};
  std::size_t classes = 4;
  std::size_t examples = 300;
  int quarter_turns = 0;                       // rotation of the shared latent patterns
  std::vector<std::size_t> channel_permutation; // empty: identity
  std::vector<std::size_t> class_map;           // class -> shared latent index; empty: identity
};

// Tasks built from class prototypes that mix shared latent patterns (weight
// r) with task-private ones (weight sqrt(1 - r^2)). Each example is a
// prototype with random gain, sub-pixel shift and Gaussian pixel noise.
// Per-example draws (label order, gain, shift, noise) come from one stream
// shared by all tasks, so r = 1 with identity transforms and equal dims gives
// identical datasets.
struct SyntheticTaskFamily {
  std::uint64_t seed = 0;
  double relatedness = 0.9;
  double noise = 0.8;
  double jitter = 1.0;  // max shift in pixels
  std::vector<SyntheticTask> tasks;

  void validate() const;
};

struct GeneratedTask {
  TaskSpec spec;
  Dataset data;
};

std::vector<GeneratedTask> generate_tasks(const SyntheticTaskFamily& family);

// Noise-free class prototypes of one task, [classes][C*H*W].
std::vector<std::vector<float>> class_prototypes(const SyntheticTaskFamily& family,
                                                 std::size_t task);

// Stacks examples into [n, C, H, W] and gathers their labels.
template <typename T>
BasicTensor<T> batch_inputs(const Dataset& dataset, std::span<const std::size_t> indices) {
  const auto& d = dataset.dims;
  BasicTensor<T> out({indices.size(), d.channels, d.height, d.width});
  T* dst = out.raw();
  for (auto h : indices) {
    for (float v : dataset.example(h)) *dst++ = static_cast<T>(v);
  }
  return out;
}

std::vector<int> batch_labels(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace mtal
