#include <gtest/gtest.h>

#include "cfsg/benchmark.hpp"
#include "cfsg/errors.hpp"
#include "cfsg/io.hpp"
#include "cfsg/train.hpp"
#include "support.hpp"

namespace cfsg {
namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.arch.input_dim = 10;
  cfg.arch.hidden = {12};
  cfg.arch.channels = 10;
  cfg.arch.positions = 2;
  cfg.seed = 5;
  return cfg;
}

DomainPair small_data(double noise = 0.3, std::uint64_t seed = 1) {
  SyntheticDomainConfig dc;
  dc.samples_per_class = 12;
  dc.noise_std = noise;
  dc.shift_offset = 1.0;
  dc.seed = seed;
  return generate_synthetic_domains(testing::tiny_hierarchy(), partition_channels(10), dc);
}

TEST(Train, SameSeedSameHistoryAndCheckpoint) {
  const DomainPair d = small_data();
  const TrainResult a = train(small_config(), d.source);
  const TrainResult b = train(small_config(), d.source);
  ASSERT_FALSE(a.diverged);
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  EXPECT_EQ(checkpoint_to_json(a.checkpoint).dump(), checkpoint_to_json(b.checkpoint).dump());
  TrainConfig other = small_config();
  other.seed = 6;
  EXPECT_NE(history_csv(train(other, d.source).history), history_csv(a.history));
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const DomainPair d = small_data();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.01;
  cfg.batch_size = d.source.size();
  TrainResult r = train(cfg, d.source);
  Checkpoint fresh = untrained_checkpoint(cfg, d.source.hierarchy);
  auto got = trainable_parameters(r.checkpoint.net);
  auto want = trainable_parameters(fresh.net);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(*got[i].second, *want[i].second) << got[i].first;
  ASSERT_EQ(r.history.size(), 3u);
  for (const auto& row : r.history) {
    EXPECT_NEAR(row.total, r.history.front().total, 1e-12);
    EXPECT_NEAR(row.s_cd, r.history.front().s_cd, 1e-12);
    EXPECT_EQ(row.fine_train_acc, r.history.front().fine_train_acc);
  }
}

TEST(Train, BenchmarkLossDecreases) {
  const HierarchySpec h = benchmark_hierarchy();
  const TrainConfig cfg = benchmark_train_config(Variant::kFull, 0);
  const DomainPair d = generate_synthetic_domains(h, partition_channels(cfg.arch.input_dim), benchmark_data_config(0));
  const TrainResult r = train(cfg, d.source);
  ASSERT_EQ(r.history.size(), 30u);
  EXPECT_LT(r.history.back().total, r.history.front().total);
  EXPECT_GE(evaluate(r.checkpoint, d.source, {1, 1, 1}).fine_acc, 0.90);
}

TEST(Train, FsOffHistoryKeepsColumnsButDropsTheirWeight) {
  const DomainPair d = small_data();
  TrainConfig cfg = small_config();
  cfg.toggles.enable_fs = false;
  const TrainResult r = train(cfg, d.source);
  for (const auto& row : r.history) {
    EXPECT_NEAR(row.total, row.fine_ce + row.coarse_ce + row.alignment, 1e-12);
    EXPECT_NE(row.disentangle, 0.0);
  }
}

TEST(Train, DivergenceKeepsLastFiniteState) {
  const DomainPair d = small_data();
  TrainConfig cfg = small_config();
  cfg.learning_rate = 1e200;
  cfg.momentum = 0.0;
  const TrainResult r = train(cfg, d.source);
  EXPECT_TRUE(r.diverged);
  EXPECT_FALSE(r.message.empty());
  Network net = r.checkpoint.net;
  for (auto& [name, m] : all_tensors(net)) EXPECT_TRUE(m->allFinite()) << name;
}

TEST(Train, RejectsBadConfig) {
  const DomainPair d = small_data();
  TrainConfig cfg = small_config();
  cfg.batch_size = 0;
  EXPECT_THROW(train(cfg, d.source), ValidationError);
  cfg = small_config();
  cfg.arch.input_dim = 11;
  EXPECT_THROW(train(cfg, d.source), ValidationError);
  cfg = small_config();
  cfg.learning_rate = -0.1;
  EXPECT_THROW(train(cfg, d.source), ValidationError);
}

TEST(Evaluate, UntrainedIsNearChance) {
  // Heavy noise: predictions carry no label information.
  SyntheticDomainConfig dc = benchmark_data_config(3);
  dc.noise_std = 50.0;
  const HierarchySpec h = benchmark_hierarchy();
  TrainConfig cfg;
  const DomainPair d = generate_synthetic_domains(h, partition_channels(cfg.arch.input_dim), dc);
  const double acc = evaluate(untrained_checkpoint(cfg, h), d.source, {1, 1, 1}).fine_acc;
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(d.source.size()));
  EXPECT_NEAR(acc, p, 3 * sigma);
}

TEST(Evaluate, BiasOnlyPredictsOneClass) {
  const DomainPair d = small_data();
  Checkpoint ck = untrained_checkpoint(small_config(), d.source.hierarchy);
  ck.net.classifiers[0].weight.setZero();
  ck.net.classifiers[0].bias << 0.0, 0.0, 3.0, 1.0;
  const AccuracyReport r = evaluate(ck, d.source, {0.75, 0.2, 0.05});
  for (Index p : r.fine_predictions) EXPECT_EQ(p, 2);
  EXPECT_DOUBLE_EQ(r.fine_acc, 0.25);
}

TEST(Evaluate, UniformWeightsMatchAffineClassifier) {
  const DomainPair d = small_data();
  const TrainResult r = train(small_config(), d.source);
  const auto pooled = extract_pooled(r.checkpoint.net, d.target.features);
  const auto affine = predict_rows(affine_logits(pooled[0], r.checkpoint.net.classifiers[0]));
  EXPECT_EQ(evaluate(r.checkpoint, d.target, {1, 1, 1}).fine_predictions, affine);
  EXPECT_EQ(evaluate(r.checkpoint, d.target, {2, 2, 2}).fine_predictions, affine);
}

TEST(Evaluate, ConceptStructureOffIgnoresWeights) {
  const DomainPair d = small_data();
  TrainConfig cfg = small_config();
  cfg.toggles.enable_cs = false;
  const TrainResult r = train(cfg, d.source);
  const AccuracyReport a = evaluate(r.checkpoint, d.target, {1, 0, 0});
  EXPECT_EQ(a.lam_used, normalize_inference_weights({1, 1, 1}));
  EXPECT_EQ(a.fine_predictions, evaluate(r.checkpoint, d.target, {1, 1, 1}).fine_predictions);
}

TEST(Evaluate, ClassCountMismatch) {
  const DomainPair d = small_data();
  const Checkpoint ck = untrained_checkpoint(small_config(), benchmark_hierarchy());
  EXPECT_THROW(evaluate(ck, d.source, {1, 1, 1}), ValidationError);
}

TEST(Sweep, GridGeometry) {
  EXPECT_EQ(simplex_grid(0.05).size(), 231u);
  EXPECT_EQ(simplex_grid(0.5).size(), 6u);
  EXPECT_EQ(simplex_grid(1.0).size(), 3u);
  EXPECT_THROW(simplex_grid(0.0), ValidationError);
  EXPECT_THROW(simplex_grid(-0.1), ValidationError);
  for (const auto& w : simplex_grid(0.1)) {
    EXPECT_NEAR(w.total(), 1.0, 1e-12);
    EXPECT_GE(std::min({w.common, w.specific, w.confounding}), 0.0);
  }
}

TEST(Sweep, BestIsFirstMaximumAndThreadsAgree) {
  const DomainPair d = small_data();
  const TrainResult r = train(small_config(), d.source);
  const SweepResult one = weight_sweep(r.checkpoint, d.target, 0.25, 1);
  const SweepResult three = weight_sweep(r.checkpoint, d.target, 0.25, 3);
  ASSERT_EQ(one.rows.size(), 15u);
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    EXPECT_EQ(one.rows[i].fine_acc, three.rows[i].fine_acc);
    EXPECT_EQ(one.rows[i].fine_acc, evaluate(r.checkpoint, d.target, one.rows[i].lam).fine_acc);
    if (i < one.best) EXPECT_LT(one.rows[i].fine_acc, one.rows[one.best].fine_acc);
    EXPECT_LE(one.rows[i].fine_acc, one.rows[one.best].fine_acc);
  }
  EXPECT_EQ(one.best, three.best);
  const std::string csv = sweep_csv(one);
  EXPECT_EQ(csv.rfind("lam_c,lam_p,lam_n,fine_acc\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 16);
}

TEST(SubcentroidEval, BankIsUsedWhenRequested) {
  const DomainPair d = small_data();
  const TrainResult r = train(small_config(), d.source);
  ASSERT_TRUE(r.checkpoint.bank.has_value());
  const AccuracyReport nearest = evaluate(r.checkpoint, d.source, {1, 1, 1}, true);
  EXPECT_TRUE(nearest.subcentroid);
  EXPECT_GT(nearest.fine_acc, 0.5);
  Checkpoint no_bank = r.checkpoint;
  no_bank.bank.reset();
  EXPECT_THROW(evaluate(no_bank, d.source, {1, 1, 1}, true), StateError);
}

}  // namespace
}  // namespace cfsg
