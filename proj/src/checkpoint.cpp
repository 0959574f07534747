#include "mtal/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>

#include "mtal/errors.hpp"

namespace mtal {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + std::string(what) + " at byte " +
                        std::to_string(pos_) + ": need " + std::to_string(n) + ", have " +
                        std::to_string(bytes_.size() - pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(what + " does not fit in u32");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_checkpoint(std::span<const NamedTensor> tensors) {
  std::string out(kCheckpointMagic);
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, checked_u32(name.size(), "name length of " + name));
    out += name;
    put_u32(out, checked_u32(tensor.rank(), "rank of " + name));
    for (auto e : tensor.shape()) put_u32(out, checked_u32(e, "extent of " + name));
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("checkpoint does not start with magic " + std::string(kCheckpointMagic));
  }
  Reader in(bytes.substr(kCheckpointMagic.size()));
  std::vector<NamedTensor> tensors;
  while (!in.done()) {
    const auto name_len = in.u32("name length");
    std::string name(in.take(name_len, "name"));
    const auto rank = in.u32("rank");
    Shape shape(rank);
    for (auto& e : shape) {
      e = in.u32("extent");
      if (e == 0) throw FormatError("checkpoint tensor " + name + " has a zero extent");
    }
    const std::size_t count = shape_size(shape);
    if (count > bytes.size() / 4) {
      throw FormatError("checkpoint tensor " + name + " claims " + std::to_string(count) +
                        " values, more than the file holds");
    }
    std::vector<float> data(count);
    for (auto& v : data) v = std::bit_cast<float>(in.u32(name.c_str()));
    tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  return tensors;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  const std::string bytes = encode_checkpoint(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing checkpoint: " + path.string());
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

const Tensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw FormatError("checkpoint has no tensor named " + std::string(name));
}

}  // namespace mtal
