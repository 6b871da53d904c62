#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cfsg/errors.hpp"
#include "cfsg/io.hpp"
#include "support.hpp"

namespace cfsg {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("cfsg_io_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

Checkpoint trained_checkpoint() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.arch.input_dim = 10;
  cfg.arch.channels = 10;
  cfg.arch.hidden = {8};
  cfg.arch.positions = 2;
  cfg.learnable_lam = true;
  SyntheticDomainConfig dc;
  dc.samples_per_class = 8;
  const DomainPair d = generate_synthetic_domains(testing::tiny_hierarchy(), partition_channels(10), dc);
  return train(cfg, d.source).checkpoint;
}

using CheckpointFiles = TempDir;

TEST_F(CheckpointFiles, SaveLoadSaveIsByteIdentical) {
  const Checkpoint ck = trained_checkpoint();
  save_checkpoint(ck, path("a.json"));
  save_checkpoint(load_checkpoint(path("a.json")), path("b.json"));
  EXPECT_EQ(read_file(path("a.json")), read_file(path("b.json")));
}

TEST_F(CheckpointFiles, LoadedCheckpointEvaluatesIdentically) {
  const Checkpoint ck = trained_checkpoint();
  save_checkpoint(ck, path("c.json"));
  const Checkpoint back = load_checkpoint(path("c.json"));
  SyntheticDomainConfig dc;
  dc.samples_per_class = 5;
  dc.seed = 9;
  const Dataset data = generate_synthetic_domains(testing::tiny_hierarchy(), partition_channels(10), dc).target;
  const auto a = extract_pooled(ck.net, data.features);
  const auto b = extract_pooled(back.net, data.features);
  EXPECT_EQ(a[0].common, b[0].common);
  EXPECT_EQ(evaluate(ck, data, {0.5, 0.3, 0.2}).fine_predictions, evaluate(back, data, {0.5, 0.3, 0.2}).fine_predictions);
  EXPECT_EQ(learned_weights(ck.net), learned_weights(back.net));
  ASSERT_TRUE(back.bank.has_value());
  EXPECT_TRUE(*ck.bank == *back.bank);
}

TEST_F(CheckpointFiles, TruncatedFileIsLoadError) {
  save_checkpoint(trained_checkpoint(), path("t.json"));
  const std::string full = read_file(path("t.json"));
  for (double frac : {0.0, 0.1, 0.5, 0.99}) {
    std::ofstream(path("cut.json"), std::ios::binary | std::ios::trunc)
        << full.substr(0, static_cast<std::size_t>(frac * static_cast<double>(full.size())));
    EXPECT_THROW(load_checkpoint(path("cut.json")), LoadError) << frac;
  }
  EXPECT_THROW(load_checkpoint(path("missing.json")), LoadError);
}

TEST_F(CheckpointFiles, ErrorsNameTheField) {
  json j = checkpoint_to_json(trained_checkpoint());
  auto message = [&](json doc) {
    try {
      checkpoint_from_json(doc);
    } catch (const LoadError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  json bad = j;
  bad["schema"] = 2;
  EXPECT_NE(message(bad).find("schema"), std::string::npos);
  bad = j;
  bad.erase("hierarchy");
  EXPECT_NE(message(bad).find("hierarchy"), std::string::npos);
  bad = j;
  bad["tensors"].erase("classifier.0.weight");
  EXPECT_NE(message(bad).find("classifier.0.weight"), std::string::npos);
  bad = j;
  bad["tensors"]["gtl.1.gamma"]["shape"] = {1, 3};
  EXPECT_NE(message(bad).find("gtl.1.gamma"), std::string::npos);
}

TEST(Config, RoundTripAndValidation) {
  TrainConfig cfg;
  cfg.weight_decay = 0.04;
  cfg.coeffs.eps_fuse = 1.0;
  cfg.arch.hidden = {7, 9};
  const json j = config_to_json(cfg);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);

  json unknown = j;
  unknown["learning_rat"] = 0.1;
  EXPECT_THROW(config_from_json(unknown), ValidationError);
  json no_schema = j;
  no_schema.erase("schema");
  EXPECT_THROW(config_from_json(no_schema), ValidationError);
  json negative = j;
  negative["epochs"] = -1;
  EXPECT_THROW(config_from_json(negative), ValidationError);

  const TrainConfig minimal = config_from_json(json{{"schema", 1}});
  EXPECT_EQ(minimal.batch_size, 32);
}

TEST(Dataset, RoundTrip) {
  SyntheticDomainConfig dc;
  dc.samples_per_class = 3;
  const Dataset d = generate_synthetic_domains(testing::tiny_hierarchy(), partition_channels(10), dc).target;
  const Dataset back = dataset_from_json(json::parse(dataset_to_json(d).dump()));
  EXPECT_EQ(back.features, d.features);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.domain, Domain::kTarget);
  EXPECT_EQ(back.hierarchy, d.hierarchy);
}

TEST(Dataset, FineLabelExpandsAndBadLabelsFail) {
  json j = dataset_to_json(generate_synthetic_domains(testing::tiny_hierarchy(), partition_channels(10), {}).source);
  j["samples"][0]["labels"] = json::array({3});
  EXPECT_EQ(dataset_from_json(j).labels.row(0), (LabelMatrix(1, 3) << 3, 1, 0).finished());
  j["samples"][0]["labels"] = json::array({3, 0, 0});
  EXPECT_THROW(dataset_from_json(j), ValidationError);
  j["samples"][0]["labels"] = json::array({9});
  EXPECT_THROW(dataset_from_json(j), ValidationError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

}  // namespace
}  // namespace cfsg
