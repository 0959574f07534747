#include <gtest/gtest.h>

#include <random>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "mtal/errors.hpp"
#include "mtal/network.hpp"
#include "mtal/ops.hpp"

using namespace mtal;
using mtal::testing::random_tensor;
using mtal::testing::values;

namespace {

MtalConfig small_config() {
  MtalConfig cfg;
  cfg.arch.conv_layers = 2;
  cfg.arch.kernels = 3;
  cfg.arch.pool_after = {2};
  cfg.seed = 5;
  return cfg;
}

std::vector<TaskSpec> two_tasks() {
  return {TaskSpec{0, {1, 8, 8}, 3}, TaskSpec{1, {1, 12, 12}, 5}};
}

}  // namespace

TEST(ArchitectureTest, OutputDims) {
  ArchitectureSpec arch;  // 4 layers, pools after 2 and 4
  EXPECT_EQ(arch.output_dims({1, 16, 16}), (InputDims{8, 4, 4}));
  EXPECT_THROW(arch.output_dims({1, 6, 6}), ShapeError);
  arch.kernel_size = 4;
  EXPECT_THROW(arch.validate(), ConfigError);
}

TEST(NetworkTest, HeterogeneousShapes) {
  const auto specs = two_tasks();
  const auto cfg = small_config();
  const auto nets = build_networks<double>(specs, cfg);
  ASSERT_EQ(nets.size(), 2u);
  check_architecture_identity<double>(nets);
  EXPECT_EQ(nets[0].feature_size(), 3u * 4 * 4);
  EXPECT_EQ(nets[1].feature_size(), 3u * 6 * 6);
  EXPECT_EQ(nets[0].head().weight()->shape(), (Shape{48, 3}));
  EXPECT_EQ(nets[1].head().weight()->shape(), (Shape{108, 5}));
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(nets[0].convs().layer(l).kernels->shape(), nets[1].convs().layer(l).kernels->shape());
  }
  std::mt19937_64 rng(1);
  EXPECT_EQ(nets[0].forward(constant(random_tensor({2, 1, 8, 8}, rng)))->shape(), (Shape{2, 3}));
  EXPECT_EQ(nets[1].forward(constant(random_tensor({4, 1, 12, 12}, rng)))->shape(),
            (Shape{4, 5}));
  EXPECT_THROW(nets[0].forward(constant(random_tensor({2, 1, 12, 12}, rng))), ShapeError);
}

TEST(NetworkTest, ChannelMismatchRejected) {
  const std::vector<TaskSpec> specs{TaskSpec{0, {1, 8, 8}, 3}, TaskSpec{1, {3, 8, 8}, 3}};
  EXPECT_THROW(build_networks<double>(specs, small_config()), ShapeError);
}

TEST(NetworkTest, DeterministicPerTaskId) {
  const auto cfg = small_config();
  const auto a = build_networks<float>(two_tasks(), cfg);
  const auto b = build_networks<float>(two_tasks(), cfg);
  EXPECT_EQ(a[0].convs().layer(0).kernels->value(), b[0].convs().layer(0).kernels->value());
  EXPECT_NE(a[0].convs().layer(0).kernels->value(), a[1].convs().layer(0).kernels->value());
  // Task 1's initialization does not depend on task 0 being present.
  const std::vector<TaskSpec> alone{two_tasks()[1]};
  const auto c = build_networks<float>(alone, cfg);
  EXPECT_EQ(c[0].convs().layer(1).kernels->value(), a[1].convs().layer(1).kernels->value());
  EXPECT_EQ(c[0].head().weight()->value(), a[1].head().weight()->value());
}

TEST(NetworkTest, NamedTensorsRoundTrip) {
  const auto cfg = small_config();
  auto a = build_networks<float>(two_tasks(), cfg);
  auto other = cfg;
  other.seed = 99;
  auto b = build_networks<float>(two_tasks(), other);
  const auto named = a[1].named_tensors();
  ASSERT_EQ(named.size(), 6u);
  EXPECT_EQ(named[0].name, "task1/conv0/kernels");
  EXPECT_EQ(named[5].name, "task1/head/bias");
  b[1].load(named);
  EXPECT_EQ(b[1].head().weight()->value(), a[1].head().weight()->value());
  EXPECT_THROW(b[0].load(named), FormatError);
}

TEST(NetworkTest, SingleLayerMatchesNaiveOracle) {
  MtalConfig cfg;
  cfg.arch.conv_layers = 1;
  cfg.arch.kernels = 2;
  cfg.arch.pool_after = {};
  const std::vector<TaskSpec> specs{TaskSpec{0, {1, 5, 5}, 3}};
  const auto nets = build_networks<double>(specs, cfg);
  std::mt19937_64 rng(2);
  const auto x = random_tensor({2, 1, 5, 5}, rng);
  const auto& conv = nets[0].convs().layer(0);
  auto maps = mtal::testing::naive_conv2d(values(x), 2, 1, 5, 5, values(conv.kernels->value()), 2,
                                          3, 3, values(conv.bias->value()), 1);
  for (auto& v : maps) v = std::max(v, 0.0);
  const auto want = mtal::testing::naive_dense(maps, 2, 50, values(nets[0].head().weight()->value()),
                                               3, values(nets[0].head().bias()->value()));
  const auto got = nets[0].forward(constant(x))->value();
  for (std::size_t k = 0; k < want.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
}

TEST(NetworkTest, ForwardAllWithoutPlansIsIndependent) {
  const auto nets = build_networks<double>(two_tasks(), small_config());
  std::mt19937_64 rng(3);
  const std::vector<Var<double>> inputs{constant(random_tensor({2, 1, 8, 8}, rng)),
                                        constant(random_tensor({3, 1, 12, 12}, rng))};
  const auto out = forward_all<double>(nets, inputs, {});
  EXPECT_EQ(out[0]->value(), nets[0].forward(inputs[0])->value());
  EXPECT_EQ(out[1]->value(), nets[1].forward(inputs[1])->value());
}

TEST(NetworkTest, SharingCouplesGradients) {
  const auto nets = build_networks<double>(two_tasks(), small_config());
  PhiStore<double> store;
  const std::vector<SimilarityRecord> records{{0, 0, 0, 1, 2, 0.9}};
  std::vector<SharingPlan<double>> plans{make_plan<double>(0, records, PhiMode::Learnable, store),
                                         SharingPlan<double>{1, {}}};
  std::mt19937_64 rng(4);
  const std::vector<Var<double>> inputs{constant(random_tensor({2, 1, 8, 8}, rng)),
                                        constant(random_tensor({3, 1, 12, 12}, rng))};
  const auto out = forward_all<double>(nets, inputs, plans);
  // Task 0's loss alone must reach task 1's kernel 2 at layer 0 and nothing else of task 1.
  backward(sum_squares(out[0]));
  const auto& g = nets[1].convs().layer(0).kernels->grad();
  double shared = 0.0, other = 0.0;
  for (std::size_t e = 0; e < g.size(); ++e) (e / 9 == 2 ? shared : other) += std::abs(g[e]);
  EXPECT_GT(shared, 0.0);
  EXPECT_EQ(other, 0.0);
  EXPECT_FALSE(nets[1].head().weight()->has_grad());
  EXPECT_FALSE(nets[1].convs().layer(1).kernels->has_grad());
}

TEST(NetworkTest, PlansMustCoverEveryLayer) {
  const auto nets = build_networks<double>(two_tasks(), small_config());
  std::mt19937_64 rng(5);
  const std::vector<Var<double>> inputs{constant(random_tensor({1, 1, 8, 8}, rng)),
                                        constant(random_tensor({1, 1, 12, 12}, rng))};
  const std::vector<SharingPlan<double>> one{SharingPlan<double>{0, {}}};
  EXPECT_THROW(forward_all<double>(nets, inputs, one), std::invalid_argument);
  const std::vector<Var<double>> missing{inputs[0]};
  EXPECT_THROW(forward_all<double>(nets, missing, {}), std::invalid_argument);
}

TEST(NetworkTest, NominateAllFindsCopiedKernels) {
  auto nets = build_networks<double>(two_tasks(), small_config());
  nets[1].convs().layer(1).kernels->mutable_value() = nets[0].convs().layer(1).kernels->value();
  const auto records = nominate_all<double>(nets, ThresholdConfig(0.4));
  ASSERT_EQ(records.size(), 2u);
  std::size_t copies = 0;
  for (const auto& r : records[1]) copies += (r.kernel_p == r.kernel_q && r.similarity > 0.999);
  EXPECT_EQ(copies, 6u);
}
