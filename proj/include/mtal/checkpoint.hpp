#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mtal/tensor.hpp"

namespace mtal {

// Checkpoint layout: the 8 magic bytes "MTAL0001", then for each tensor
//   u32 name length | UTF-8 name | u32 rank | u32 extent x rank | f32 x size
// with every integer and float little-endian. Records run to end of file.
inline constexpr std::string_view kCheckpointMagic = "MTAL0001";

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

std::string encode_checkpoint(std::span<const NamedTensor> tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

// Looks a tensor up by name; throws FormatError when absent.
const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name);

}  // namespace mtal
