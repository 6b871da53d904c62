#pragma once

// Full CFSG network, deterministic SGD training, evaluation, inference-weight
// sweeps, and checkpoints.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cfsg/classifier.hpp"
#include "cfsg/hierarchy.hpp"
#include "cfsg/losses.hpp"
#include "cfsg/model.hpp"
#include "cfsg/subcentroid.hpp"

namespace cfsg {

struct Architecture {
  Index input_dim = 20;
  std::vector<Index> hidden = {32};
  /// GTL input (raw) and output channel count d.
  Index channels = 20;
  Index positions = 4;
  std::array<double, 3> ratio = {5.0, 3.0, 2.0};
  /// Separate extractors for the fine level and the coarse levels.
  bool dual_backbone = true;

  void validate() const;
  bool operator==(const Architecture&) const = default;
};

struct TrainConfig {
  int epochs = 30;
  Index batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  LossCoefficients coeffs;
  LossToggles toggles;
  bool learnable_lam = false;
  bool subcentroid_bank = true;
  double mu = 0.9;
  Architecture arch;

  void validate() const;
};

// Seed splitting: every random stream is seed + one of these offsets.
inline constexpr std::uint64_t kInitSeedOffset = 11;
inline constexpr std::uint64_t kShuffleSeedOffset = 23;

struct Network {
  Architecture arch;
  PartitionSpec partition;
  HierarchySpec hierarchy;
  BackboneParams fine_backbone;
  std::optional<BackboneParams> coarse_backbone;
  std::vector<GTLParams> gtl;                    // one per level
  std::vector<StructuredClassifier> classifiers;  // one per level
  bool learnable_lam = false;
  Matrix lam_raw;  // 1 x 3, softplus -> lambda when learnable

  const BackboneParams& backbone_for(Index level) const;
};

Network init_network(const Architecture& arch, const HierarchySpec& h, bool learnable_lam, std::uint64_t seed);

/// Learned inference weights (softplus of lam_raw), normalized.
InferenceWeights learned_weights(const Network& net);

/// Trainable tensors in a fixed order.
std::vector<std::pair<std::string, Matrix*>> trainable_parameters(Network& net);
/// Every tensor that defines the network, including normalization statistics.
std::vector<std::pair<std::string, Matrix*>> all_tensors(Network& net);

struct NetworkVars {
  std::vector<DenseVars> fine_backbone;
  std::vector<DenseVars> coarse_backbone;
  std::vector<GTLVars> gtl;
  std::vector<ClassifierVars> classifiers;
  Var lam_raw;
  std::vector<Var> trainable;  // same order as trainable_parameters()
};

/// Places the network's tensors on the tape; `track` marks them as parameters.
NetworkVars bind_network(GradTape& tape, const Network& net, bool track);

struct ForwardPass {
  std::vector<StructuredVars> parts;  // per level, post-GTL
  std::vector<PooledVars> pooled;
  std::vector<Var> logits;
  std::vector<Var> probs;
  std::vector<BatchStats> stats;  // train mode only
  Var lam;
};

/// Logits use lambda = (1,1,1) in training, or the learned lambda when enabled.
ForwardPass forward(GradTape& tape, const Network& net, const NetworkVars& vars, const Matrix& x, Mode mode);

/// Eval-mode per-level pooled parts for a whole dataset.
std::vector<PooledParts> extract_pooled(const Network& net, const Matrix& x);

struct Checkpoint {
  Network net;
  TrainConfig config;
  std::optional<SubCentroidBank> bank;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

struct HistoryRow {
  int epoch = 0;
  double coarse_ce = 0.0;
  double alignment = 0.0;
  double fine_ce = 0.0;
  double disentangle = 0.0;
  double s_cs = 0.0;
  double s_cd = 0.0;
  double s_p = 0.0;
  double total = 0.0;
  double fine_train_acc = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // last finite state when training diverged
  std::vector<HistoryRow> history;
  bool diverged = false;
  std::string message;
};

TrainResult train(const TrainConfig& cfg, const Dataset& source);

/// Fresh, untrained checkpoint for a dataset's hierarchy.
Checkpoint untrained_checkpoint(const TrainConfig& cfg, const HierarchySpec& h);

struct AccuracyReport {
  double fine_acc = 0.0;
  std::vector<double> per_level_acc;
  InferenceWeights lam_used;
  bool subcentroid = false;
  std::vector<Index> fine_predictions;
};

AccuracyReport evaluate(const Checkpoint& ckpt, const Dataset& data, const InferenceWeights& lam,
                        bool use_subcentroid = false);

struct SweepRow {
  InferenceWeights lam;
  double fine_acc = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;  // first row with the highest accuracy
};

/// All points of the simplex lc + lp + ln = 1 with the given spacing.
std::vector<InferenceWeights> simplex_grid(double step);

SweepResult weight_sweep(const Checkpoint& ckpt, const Dataset& data, double step, unsigned threads = 1);

std::string history_csv(const std::vector<HistoryRow>& rows);
std::string sweep_csv(const SweepResult& sweep);

}  // namespace cfsg
