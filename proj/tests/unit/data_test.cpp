#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "../support/oracles.hpp"
#include "../support/fixtures.hpp"
#include "mtal/data.hpp"
#include "mtal/errors.hpp"

using namespace mtal;
using mtal::testing::synthetic_task;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mtal_data_test_" + name);
  fs::remove_all(dir);
  return dir;
}

Dataset counting_dataset(std::size_t n, std::size_t classes, InputDims dims = {1, 2, 2}) {
  Dataset ds;
  ds.dims = dims;
  ds.classes = classes;
  for (std::size_t h = 0; h < n; ++h) {
    ds.labels.push_back(static_cast<int>(h % classes));
    for (std::size_t k = 0; k < dims.size(); ++k) ds.data.push_back(static_cast<float>(h) + 0.25f * k);
  }
  return ds;
}

std::string expect_format_error(const fs::path& dir) {
  try {
    load_dataset(dir);
  } catch (const FormatError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no FormatError";
  return {};
}

double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  return mtal::testing::cosine_oracle(std::vector<double>(a.begin(), a.end()),
                                      std::vector<double>(b.begin(), b.end()));
}

}  // namespace

TEST(DatasetIoTest, RoundTripIsExact) {
  const auto dir = temp_dir("roundtrip");
  auto ds = counting_dataset(7, 3, {2, 3, 4});
  ds.data[5] = -1.0e-30f;
  write_dataset(dir, ds);
  const auto back = load_dataset(dir);
  EXPECT_EQ(back.dims, ds.dims);
  EXPECT_EQ(back.classes, 3u);
  EXPECT_EQ(back.labels, ds.labels);
  EXPECT_EQ(back.data, ds.data);
  EXPECT_EQ(fs::file_size(dir / "data.bin"), 7u * 24 * 4);
}

TEST(DatasetIoTest, TruncatedDataNamesByteCounts) {
  const auto dir = temp_dir("truncated");
  write_dataset(dir, counting_dataset(3, 2));
  fs::resize_file(dir / "data.bin", 40);
  const auto msg = expect_format_error(dir);
  EXPECT_NE(msg.find("data.bin truncated: expected 48 bytes, found 40"), std::string::npos) << msg;
}

TEST(DatasetIoTest, LabelOutOfRange) {
  const auto dir = temp_dir("label");
  write_dataset(dir, counting_dataset(3, 2));
  std::ofstream(dir / "labels.csv") << "0\n1\n2\n";
  const auto msg = expect_format_error(dir);
  EXPECT_NE(msg.find("labels.csv line 3"), std::string::npos) << msg;
}

TEST(DatasetIoTest, MissingMetaKeyAndCountMismatch) {
  const auto dir = temp_dir("meta");
  write_dataset(dir, counting_dataset(3, 2));
  std::ofstream(dir / "labels.csv") << "0\n1\n";
  EXPECT_THROW(load_dataset(dir), FormatError);
  std::ofstream(dir / "meta") << "channels=1\nheight=2\nwidth=2\ncount=3\n";
  EXPECT_NE(expect_format_error(dir).find("missing classes"), std::string::npos);
  EXPECT_THROW(load_dataset(temp_dir("absent")), FormatError);
}

TEST(SplitTest, HundredBalancedExamples) {
  const auto ds = counting_dataset(100, 10);
  const auto split = split_70_30(ds, 3);
  EXPECT_EQ(split.train.size(), 70u);
  EXPECT_EQ(split.test.size(), 30u);
  std::vector<int> per_class(10, 0);
  for (auto h : split.train) ++per_class[ds.labels[h]];
  for (int c : per_class) EXPECT_EQ(c, 7);
}

TEST(SplitTest, PartitionProperty) {
  for (std::size_t n : {10u, 11u, 37u, 100u, 301u}) {
    for (auto mode : {SplitMode::Stratified, SplitMode::Random}) {
      const auto ds = counting_dataset(n, 3);
      const auto s = split_70_30(ds, n, mode);
      EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
      EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
      std::vector<std::size_t> all(s.train);
      all.insert(all.end(), s.test.begin(), s.test.end());
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> want(n);
      std::iota(want.begin(), want.end(), 0);
      EXPECT_EQ(all, want);
      EXPECT_NEAR(static_cast<double>(s.train.size()) / n, 0.7, 0.1);
    }
  }
}

TEST(SplitTest, DeterministicAndSeedDependent) {
  const auto ds = counting_dataset(60, 4);
  EXPECT_EQ(split_70_30(ds, 1).train, split_70_30(ds, 1).train);
  EXPECT_NE(split_70_30(ds, 1).train, split_70_30(ds, 2).train);
  EXPECT_THROW(split_70_30(counting_dataset(9, 3), 0), std::invalid_argument);
}

TEST(NormalizationTest, TrainStatistics) {
  Dataset ds;
  ds.dims = {2, 1, 2};
  ds.classes = 2;
  ds.data = {1, 3, 5, 5, 3, 5, 5, 5};
  ds.labels = {0, 1};
  const auto stats = fit_normalization(ds);
  EXPECT_DOUBLE_EQ(stats.mean[0], 3.0);
  EXPECT_DOUBLE_EQ(stats.stddev[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(stats.mean[1], 5.0);
  EXPECT_DOUBLE_EQ(stats.stddev[1], 1.0);  // constant channel
  const auto out = normalize(ds, stats);
  EXPECT_NEAR(out.data[0], -2.0 / std::sqrt(2.0), 1e-6);
  EXPECT_EQ(out.data[2], 0.0f);
  Normalization wrong{{0.0}, {1.0}};
  EXPECT_THROW(normalize(ds, wrong), ShapeError);
}

TEST(TransformTest, RotationAndResize) {
  Dataset ds;
  ds.dims = {1, 2, 2};
  ds.classes = 2;
  ds.data = {1, 2, 3, 4};  // [[1,2],[3,4]]
  ds.labels = {0};
  EXPECT_EQ(rotate_quarter_turns(ds, 1).data, (std::vector<float>{2, 4, 1, 3}));
  EXPECT_EQ(rotate_quarter_turns(ds, 4).data, ds.data);
  EXPECT_EQ(rotate_quarter_turns(rotate_quarter_turns(ds, 1), 3).data, ds.data);
  const auto big = resize_nearest(ds, 4, 4);
  EXPECT_EQ(big.data, (std::vector<float>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_EQ(resize_nearest(big, 2, 2).data, ds.data);
  Dataset wide = ds;
  wide.dims = {1, 1, 4};
  EXPECT_THROW(rotate_quarter_turns(wide, 1), ShapeError);
  EXPECT_EQ(rotate_quarter_turns(wide, 2).data, (std::vector<float>{4, 3, 2, 1}));
}

TEST(SyntheticTest, FullyRelatedTasksAreIdentical) {
  SyntheticTaskFamily family;
  family.relatedness = 1.0;
  family.tasks = {synthetic_task({1, 8, 8}, 3, 40), synthetic_task({1, 8, 8}, 3, 40)};
  const auto tasks = generate_tasks(family);
  EXPECT_EQ(tasks[0].data.data, tasks[1].data.data);
  EXPECT_EQ(tasks[0].data.labels, tasks[1].data.labels);
  EXPECT_EQ(tasks[1].spec.id, 1u);
}

TEST(SyntheticTest, UnrelatedPrototypesAreNearlyOrthogonal) {
  // Mean signed cosine of matching class prototypes over 5 family seeds.
  double unrelated = 0.0, related = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticTaskFamily family;
    family.seed = seed;
    family.tasks = {synthetic_task({1, 16, 16}, 4, 40), synthetic_task({1, 16, 16}, 6, 60)};
    family.relatedness = 0.0;
    const auto a = class_prototypes(family, 0);
    const auto b = class_prototypes(family, 1);
    family.relatedness = 0.9;
    const auto ra = class_prototypes(family, 0);
    const auto rb = class_prototypes(family, 1);
    for (std::size_t c = 0; c < 4; ++c) {
      unrelated += cosine(a[c], b[c]) / 20.0;
      related += cosine(ra[c], rb[c]) / 20.0;
    }
  }
  EXPECT_LT(std::abs(unrelated), 0.1);
  EXPECT_GT(related, 0.7);
}

TEST(SyntheticTest, HeterogeneousShapesAndBalancedLabels) {
  SyntheticTaskFamily family;
  family.tasks = {synthetic_task({1, 16, 16}, 4, 100), synthetic_task({1, 12, 12}, 6, 120)};
  const auto tasks = generate_tasks(family);
  EXPECT_EQ(tasks[1].data.dims, (InputDims{1, 12, 12}));
  EXPECT_EQ(tasks[1].spec.classes, 6u);
  EXPECT_EQ(tasks[1].data.data.size(), 120u * 144);
  std::vector<int> counts(4, 0);
  for (int y : tasks[0].data.labels) ++counts[y];
  for (int c : counts) EXPECT_EQ(c, 25);
  EXPECT_EQ(generate_tasks(family)[0].data.data, tasks[0].data.data);
}

TEST(SyntheticTest, ValidationErrors) {
  SyntheticTaskFamily family;
  EXPECT_THROW(family.validate(), ConfigError);
  family.tasks = {synthetic_task({1, 8, 6}, 3, 40)};
  family.tasks[0].quarter_turns = 1;
  EXPECT_THROW(family.validate(), ConfigError);
  family.tasks[0].quarter_turns = 2;
  family.relatedness = 1.5;
  EXPECT_THROW(family.validate(), ConfigError);
}

TEST(BatchTest, GathersExamples) {
  const auto ds = counting_dataset(5, 2);
  const std::vector<std::size_t> idx{4, 1};
  const auto x = batch_inputs<double>(ds, idx);
  EXPECT_EQ(x.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(x[0], 4.0);
  EXPECT_EQ(x[4], 1.0);
  EXPECT_EQ(batch_labels(ds, idx), (std::vector<int>{0, 1}));
}
