#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mtal/errors.hpp"
#include "mtal/tensor.hpp"

using namespace mtal;

TEST(TensorTest, SizeIsProductOfExtents) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(TensorTest, RowMajorMultiIndex) {
  Tensor t({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({0, 2}), 2.0f);
  EXPECT_EQ(t.at({1, 0}), 3.0f);
  EXPECT_THROW(t.at({2, 0}), std::out_of_range);
  EXPECT_THROW(t.at({0}), ShapeError);
}

TEST(TensorTest, RejectsZeroExtentAndSizeMismatch) {
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(TensorTest, ScalarAndItem) {
  const auto s = Tensor::scalar(3.5f);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.item(), 3.5f);
  EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(TensorTest, ReshapeKeepsOrder) {
  Tensor t({2, 3}, std::vector<float>{0, 1, 2, 3, 4, 5});
  const auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.at({2, 1}), 5.0f);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(TensorTest, FiniteCheck) {
  Tensor t({2});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(TensorTest, CastRoundTrip) {
  Tensor t({3}, std::vector<float>{0.1f, -2.5f, 7.0f});
  EXPECT_EQ(t.cast<double>().cast<float>(), t);
}
