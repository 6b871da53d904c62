#include <gtest/gtest.h>

#include "cfsg/errors.hpp"
#include "cfsg/model.hpp"
#include "cfsg/tape.hpp"
#include "support.hpp"

namespace cfsg {
namespace {

TEST(Partition, RatioRounding) {
  const auto check = [](Index d, Index c, Index p, Index n) {
    const PartitionSpec s = partition_channels(d);
    EXPECT_EQ(s.d_c, c) << d;
    EXPECT_EQ(s.d_p, p) << d;
    EXPECT_EQ(s.d_n, n) << d;
    EXPECT_EQ(s.d_c + s.d_p + s.d_n, d);
  };
  check(10, 5, 3, 2);
  check(20, 10, 6, 4);
  check(2048, 1025, 614, 409);
  EXPECT_THROW(partition_channels(2), ValidationError);
}

TEST(Partition, SlicesByIndex) {
  const PartitionSpec p = partition_channels(10);
  Matrix f(2, 10);
  for (Index r = 0; r < 2; ++r) {
    for (Index c = 0; c < 10; ++c) f(r, c) = static_cast<double>(c);
  }
  const StructuredFeatures s = disentangle_features(f, p, 2);
  EXPECT_EQ(s.common.row(1), (RowVector(5) << 0, 1, 2, 3, 4).finished());
  EXPECT_EQ(s.specific.row(0), (RowVector(3) << 5, 6, 7).finished());
  EXPECT_EQ(s.confounding.row(0), (RowVector(2) << 8, 9).finished());
  EXPECT_EQ(s.batch(), 1);
  EXPECT_EQ(concat_parts(s), f);
  EXPECT_THROW(disentangle_features(Matrix::Zero(2, 9), p), DimensionError);
}

TEST(Backbone, ZeroWeightsGiveZero) {
  std::mt19937_64 rng(1);
  BackboneParams bb = init_backbone(4, {6}, 3, 2, rng);
  for (auto& layer : bb.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  const Matrix out = forward_backbone(bb, testing::random_matrix(5, 4, rng));
  EXPECT_EQ(out.rows(), 5 * 2);
  EXPECT_EQ(out.cols(), 3);
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Backbone, IdentityLayerPassesInput) {
  BackboneParams bb;
  bb.layers.push_back(DenseLayer{Matrix::Identity(4, 4), Matrix::Zero(1, 4)});
  bb.raw_channels = 4;
  bb.positions = 1;
  std::mt19937_64 rng(2);
  const Matrix x = testing::random_matrix(6, 4, rng).cwiseAbs();
  EXPECT_EQ(forward_backbone(bb, x), x);
  EXPECT_THROW(forward_backbone(bb, Matrix::Zero(2, 3)), DimensionError);
}

TEST(Backbone, SeededInitIsDeterministic) {
  std::mt19937_64 a(5), b(5);
  const BackboneParams pa = init_backbone(4, {8}, 6, 3, a);
  const BackboneParams pb = init_backbone(4, {8}, 6, 3, b);
  const Matrix x = Matrix::Constant(2, 4, 0.3);
  EXPECT_EQ(forward_backbone(pa, x), forward_backbone(pb, x));
}

TEST(Backbone, TapeMatchesValuePath) {
  std::mt19937_64 rng(3);
  const BackboneParams bb = init_backbone(4, {5}, 6, 2, rng);
  const Matrix x = testing::random_matrix(3, 4, rng);
  GradTape tape;
  std::vector<DenseVars> vars;
  for (const auto& l : bb.layers) vars.push_back({tape.constant(l.weight), tape.constant(l.bias)});
  const Var out = forward_backbone(vars, tape.constant(x), bb.positions);
  EXPECT_TRUE(out.value().isApprox(forward_backbone(bb, x), 1e-14));
}

GTLParams identity_gtl(Index d) {
  std::mt19937_64 rng(0);
  GTLParams g = init_gtl(d, d, rng);
  g.weight = Matrix::Identity(d, d);
  g.bias.setZero();
  g.gamma.setOnes();
  g.beta.setZero();
  g.running_mean.setZero();
  g.running_var.setOnes();
  return g;
}

TEST(Gtl, AllNegativePreActivationIsZero) {
  const GTLParams g = identity_gtl(3);
  const Matrix raw = -Matrix::Ones(4, 3) - Matrix::Identity(4, 3);
  EXPECT_TRUE(gtl_forward(g, raw, Mode::kEval).isZero(0.0));
}

TEST(Gtl, StandardizedBatchIsNearlyUnchanged) {
  const GTLParams g = identity_gtl(2);
  Matrix raw(4, 2);
  raw << 1, -1, -1, 1, 1, 1, -1, -1;  // zero mean, unit population variance per column
  Matrix normalized;
  const Matrix out = gtl_forward(g, raw, Mode::kTrain, &normalized);
  EXPECT_TRUE(normalized.isApprox(raw / std::sqrt(1.0 + g.eps), 1e-14));
  EXPECT_TRUE(out.isApprox(normalized.cwiseMax(0.0), 1e-14));
}

TEST(Gtl, RunningStatsMomentum) {
  GTLParams g = identity_gtl(2);
  BatchStats stats{Matrix::Constant(1, 2, 2.0), Matrix::Constant(1, 2, 3.0)};
  update_running_stats(g, stats);
  EXPECT_NEAR(g.running_mean(0, 0), 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(g.running_var(0, 1), 0.9 * 1.0 + 0.1 * 3.0, 1e-15);
}

TEST(Pool, SpatialMeanOverPositions) {
  Matrix f(4, 2);
  f << 1, 2, 3, 4, 10, 20, 30, 40;
  Matrix expected(2, 2);
  expected << 2, 3, 20, 30;
  EXPECT_TRUE(spatial_pool(f, 2).isApprox(expected));
  EXPECT_THROW(spatial_pool(f, 3), DimensionError);
}

}  // namespace
}  // namespace cfsg
