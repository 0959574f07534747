#include <gtest/gtest.h>

#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "mtal/errors.hpp"
#include "mtal/similarity.hpp"

using namespace mtal;
using mtal::testing::random_tensor;

namespace {

std::vector<KernelSet<double>> random_sets(std::mt19937_64& rng, std::size_t tasks,
                                           std::size_t m, Shape kernel = {1, 2, 2}) {
  std::vector<KernelSet<double>> sets;
  Shape shape{m};
  shape.insert(shape.end(), kernel.begin(), kernel.end());
  for (std::size_t t = 0; t < tasks; ++t) sets.push_back({0, t, random_tensor(shape, rng)});
  return sets;
}

void expect_same_records(const std::vector<SimilarityRecord>& got,
                         const std::vector<SimilarityRecord>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t k = 0; k < got.size(); ++k) {
    EXPECT_EQ(got[k].task_i, want[k].task_i);
    EXPECT_EQ(got[k].kernel_p, want[k].kernel_p);
    EXPECT_EQ(got[k].task_j, want[k].task_j);
    EXPECT_EQ(got[k].kernel_q, want[k].kernel_q);
    EXPECT_NEAR(got[k].similarity, want[k].similarity, 1e-12);
  }
}

}  // namespace

TEST(VectorizeTest, RowMajor) {
  const Tensor64 k({1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  EXPECT_EQ(vectorize(k), Tensor64({4}, std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(vectorize(Tensor64({2, 3, 3})).size(), 18u);
  std::mt19937_64 rng(1);
  const auto r = random_tensor({2, 3, 3}, rng);
  EXPECT_EQ(vectorize(r).reshaped(r.shape()), r);
}

TEST(CosineTest, SpecExamples) {
  const Tensor64 a({3}, std::vector<double>{1, 2, 2});
  const Tensor64 b({3}, std::vector<double>{2, 1, 2});
  EXPECT_NEAR(cosine_similarity(a, b), 8.0 / 9.0, 1e-12);
  EXPECT_EQ(cosine_similarity(a, a), 1.0);
  EXPECT_EQ(cosine_similarity(Tensor64({2}, std::vector<double>{1, 0}),
                              Tensor64({2}, std::vector<double>{0, 1})),
            0.0);
}

TEST(CosineTest, Axioms) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_tensor({9}, rng);
    const auto b = random_tensor({9}, rng);
    const double s = cosine_similarity(a, b);
    EXPECT_EQ(s, cosine_similarity(b, a));
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    Tensor64 scaled = a;
    for (auto& v : scaled.data()) v *= 37.5;
    EXPECT_NEAR(cosine_similarity(scaled, b), s, 1e-6);
    EXPECT_EQ(cosine_similarity(a, a), 1.0);
  }
}

TEST(CosineTest, ZeroNormAndLengthErrors) {
  EXPECT_THROW(cosine_similarity(Tensor64({2}), Tensor64({2}, 1.0)), DegenerateKernelError);
  EXPECT_THROW(cosine_similarity(Tensor64({2}, 1.0), Tensor64({3}, 1.0)), ShapeError);
}

TEST(ThresholdTest, RangeAndPresets) {
  EXPECT_THROW(ThresholdConfig(0.05), ConfigError);
  EXPECT_THROW(ThresholdConfig(0.95), ConfigError);
  EXPECT_NO_THROW(ThresholdConfig(0.1));
  EXPECT_NO_THROW(ThresholdConfig(0.9));
  EXPECT_EQ(ThresholdConfig::related().delta(), 0.4);
  EXPECT_EQ(ThresholdConfig::unrelated().delta(), 0.55);
}

TEST(NominateTest, IdenticalCopiesPairWithTwins) {
  std::mt19937_64 rng(3);
  auto sets = random_sets(rng, 1, 3);
  sets.push_back({0, 1, sets[0].kernels});
  const auto records = nominate_pairs<double>(sets, ThresholdConfig(0.9));
  ASSERT_EQ(records.size(), 6u);
  for (const auto& r : records) {
    EXPECT_EQ(r.kernel_p, r.kernel_q);
    EXPECT_EQ(r.similarity, 1.0);
    EXPECT_NE(r.task_i, r.task_j);
  }
}

TEST(NominateTest, OrthogonalKernelsNeverPair) {
  Tensor64 a({2, 1, 2, 2}, std::vector<double>{1, 0, 0, 0, 0, 1, 0, 0});
  Tensor64 b({2, 1, 2, 2}, std::vector<double>{0, 0, 1, 0, 0, 0, 0, 1});
  const std::vector<KernelSet<double>> sets{{0, 0, a}, {0, 1, b}};
  EXPECT_TRUE(nominate_pairs<double>(sets, ThresholdConfig(0.1)).empty());
}

TEST(NominateTest, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sets = random_sets(rng, 2, 3);
    const auto got = nominate_pairs<double>(sets, ThresholdConfig(0.4));
    expect_same_records(got, mtal::testing::brute_force_nominate(sets, 0.4));
  }
}

TEST(NominateTest, SelectionIsMonotoneInDelta) {
  std::mt19937_64 rng(5);
  const auto sets = random_sets(rng, 3, 4);
  std::vector<SimilarityRecord> previous;
  for (int d = 1; d <= 9; ++d) {
    const auto current = nominate_pairs<double>(sets, ThresholdConfig(d / 10.0));
    if (d > 1) {
      for (const auto& r : current) {
        EXPECT_NE(std::find(previous.begin(), previous.end(), r), previous.end());
      }
    }
    previous = current;
  }
}

TEST(NominateTest, TiesPickLowestQ) {
  Tensor64 a({2, 1, 1, 2}, std::vector<double>{1, 1, -1, 1});
  Tensor64 b({2, 1, 1, 2}, std::vector<double>{2, 2, 3, 3});
  const std::vector<KernelSet<double>> sets{{0, 0, a}, {0, 1, b}};
  const auto records = nominate_pairs<double>(sets, ThresholdConfig(0.5));
  ASSERT_FALSE(records.empty());
  EXPECT_EQ(records[0].task_i, 0u);
  EXPECT_EQ(records[0].kernel_p, 0u);
  EXPECT_EQ(records[0].kernel_q, 0u);
}

TEST(NominateTest, MismatchedKernelSetsThrow) {
  const std::vector<KernelSet<double>> sets{{0, 0, Tensor64({1, 1, 1, 2}, 1.0)},
                                            {0, 1, Tensor64({2, 1, 1, 2}, 1.0)}};
  EXPECT_THROW(nominate_pairs<double>(sets, ThresholdConfig(0.5)), ShapeError);
}

TEST(NominateTest, DegenerateKernelPolicies) {
  Tensor64 a({2, 1, 1, 2}, std::vector<double>{0, 0, 1, 1});
  Tensor64 b({2, 1, 1, 2}, std::vector<double>{1, 1, 1, 1});
  const std::vector<KernelSet<double>> sets{{3, 0, a}, {3, 1, b}};
  const auto skipped = nominate_pairs<double>(sets, ThresholdConfig(0.5), DegeneratePolicy::Skip);
  for (const auto& r : skipped) {
    EXPECT_FALSE(r.task_i == 0 && r.kernel_p == 0);
    EXPECT_FALSE(r.task_j == 0 && r.kernel_q == 0);
  }
  try {
    nominate_pairs<double>(sets, ThresholdConfig(0.5), DegeneratePolicy::Throw);
    FAIL();
  } catch (const DegenerateKernelError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("layer 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("task 0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("kernel 0"), std::string::npos) << msg;
  }
}

TEST(SimilarityCsvTest, SixDecimals) {
  const std::vector<SimilarityRecord> records{{1, 0, 2, 1, 3, 8.0 / 9.0}};
  std::ostringstream os;
  write_similarity_csv(os, records);
  EXPECT_EQ(os.str(), "layer,task_i,kernel_p,task_j,kernel_q,similarity\n1,0,2,1,3,0.888889\n");
}
