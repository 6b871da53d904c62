#pragma once

// Structured concept space: classifier weights split with the same channel
// blocks as the features, and the lambda-weighted decision rule
//   H_k = lc <f_c, W_k^c> + lp <f_p, W_k^p> + ln <f_n, W_k^n> + b_k.

#include <random>

#include "cfsg/model.hpp"

namespace cfsg {

struct InferenceWeights {
  double common = 1.0;
  double specific = 1.0;
  double confounding = 1.0;

  double get(Part p) const;
  double total() const { return common + specific + confounding; }
  bool operator==(const InferenceWeights&) const = default;
};

/// Divides by the sum. Entries must be >= 0 with a positive sum.
InferenceWeights normalize_inference_weights(const InferenceWeights& lam);

struct StructuredClassifier {
  Matrix weight;  // K x d
  Matrix bias;    // 1 x K
  PartitionSpec partition;

  Index classes() const { return weight.rows(); }
  void validate() const;
};

StructuredClassifier init_classifier(Index classes, const PartitionSpec& p, std::mt19937_64& rng);

struct WeightBlocks {
  Matrix common;
  Matrix specific;
  Matrix confounding;
};

WeightBlocks disentangle_weights(const Matrix& weight, const PartitionSpec& p);

/// Per-sample part vectors, one row per sample (spatially pooled features).
struct PooledParts {
  Matrix common;
  Matrix specific;
  Matrix confounding;

  const Matrix& part(Part p) const;
  Index rows() const { return common.rows(); }
};

PooledParts pool_parts(const StructuredFeatures& features);

/// B x K logits.
Matrix structured_logits(const PooledParts& f, const StructuredClassifier& cls, const InferenceWeights& lam);

/// Unpartitioned <f, W_k> + b_k on concatenated part vectors.
Matrix affine_logits(const PooledParts& f, const StructuredClassifier& cls);

/// Argmax with ties to the lowest index.
Index predict(const Eigen::Ref<const RowVector>& logits);
std::vector<Index> predict_rows(const Matrix& logits);

struct ClassifierVars {
  Var weight;
  Var bias;
};

struct PooledVars {
  Var common;
  Var specific;
  Var confounding;
};

/// Tape form; `lam` is a 1x3 node (constant or learned).
Var structured_logits(const PooledVars& f, const ClassifierVars& cls, const PartitionSpec& p, Var lam);

}  // namespace cfsg
