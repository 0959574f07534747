#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mtal/checkpoint.hpp"
#include "mtal/errors.hpp"

using namespace mtal;
namespace fs = std::filesystem;

namespace {

std::vector<NamedTensor> sample() {
  Tensor a({2, 3}, std::vector<float>{0.1f, -0.0f, 3.4e38f, 1e-40f, -7.25f, 42.0f});
  Tensor b({1}, std::vector<float>{std::numeric_limits<float>::denorm_min()});
  return {{"task0/conv0/kernels", a}, {"task0/head/bias", b}};
}

}  // namespace

TEST(CheckpointTest, LayoutIsLittleEndianRecords) {
  const std::vector<NamedTensor> one{{"w", Tensor({2}, std::vector<float>{1.0f, -2.0f})}};
  const std::string bytes = encode_checkpoint(one);
  ASSERT_EQ(bytes.size(), 8u + 4 + 1 + 4 + 4 + 8);
  EXPECT_EQ(bytes.substr(0, 8), "MTAL0001");
  EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes[12], 'w');
  EXPECT_EQ(bytes.substr(13, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(17, 4), std::string("\x02\x00\x00\x00", 4));
  EXPECT_EQ(bytes.substr(21, 4), std::string("\x00\x00\x80\x3f", 4));
  EXPECT_EQ(bytes.substr(25, 4), std::string("\x00\x00\x00\xc0", 4));
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  const auto tensors = sample();
  const fs::path path = fs::temp_directory_path() / "mtal_ckpt_roundtrip.bin";
  write_checkpoint(path, tensors);
  const auto back = read_checkpoint(path);
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].tensor.shape(), tensors[i].tensor.shape());
    EXPECT_EQ(std::memcmp(back[i].tensor.raw(), tensors[i].tensor.raw(),
                          tensors[i].tensor.size() * sizeof(float)),
              0);
  }
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(tensors));
  fs::remove(path);
}

TEST(CheckpointTest, RejectsBadMagicAndTruncation) {
  std::string bytes = encode_checkpoint(sample());
  std::string bad = bytes;
  bad[7] = '2';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 10)), FormatError);
  EXPECT_EQ(decode_checkpoint(bytes.substr(0, 8)).size(), 0u);
}

TEST(CheckpointTest, FindTensorByName) {
  const auto tensors = sample();
  EXPECT_EQ(find_tensor(tensors, "task0/head/bias").shape(), (Shape{1}));
  EXPECT_THROW(find_tensor(tensors, "missing"), FormatError);
}

TEST(CheckpointTest, MissingFile) {
  EXPECT_THROW(read_checkpoint("/nonexistent/mtal.bin"), FormatError);
}
