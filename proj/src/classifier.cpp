#include "cfsg/classifier.hpp"

#include <cmath>
#include <string>

namespace cfsg {

double InferenceWeights::get(Part p) const {
  switch (p) {
    case Part::kCommon: return common;
    case Part::kSpecific: return specific;
    default: return confounding;
  }
}

InferenceWeights normalize_inference_weights(const InferenceWeights& lam) {
  for (double v : {lam.common, lam.specific, lam.confounding}) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("inference weights must be finite and >= 0");
  }
  const double total = lam.total();
  if (!(total > 0.0)) throw ValidationError("inference weights must not all be zero");
  return InferenceWeights{lam.common / total, lam.specific / total, lam.confounding / total};
}

void StructuredClassifier::validate() const {
  partition.validate();
  if (weight.cols() != partition.d) throw DimensionError("classifier: weight columns != partition d");
  if (bias.rows() != 1 || bias.cols() != weight.rows()) throw DimensionError("classifier: bias shape mismatch");
}

StructuredClassifier init_classifier(Index classes, const PartitionSpec& p, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(p.d)));
  StructuredClassifier cls;
  cls.weight.resize(classes, p.d);
  for (Index i = 0; i < classes; ++i) {
    for (Index j = 0; j < p.d; ++j) cls.weight(i, j) = dist(rng);
  }
  cls.bias = Matrix::Zero(1, classes);
  cls.partition = p;
  return cls;
}

WeightBlocks disentangle_weights(const Matrix& weight, const PartitionSpec& p) {
  if (weight.cols() != p.d) throw DimensionError("disentangle_weights: column count != partition d");
  return WeightBlocks{weight.middleCols(p.offset(Part::kCommon), p.d_c),
                      weight.middleCols(p.offset(Part::kSpecific), p.d_p),
                      weight.middleCols(p.offset(Part::kConfounding), p.d_n)};
}

const Matrix& PooledParts::part(Part p) const {
  switch (p) {
    case Part::kCommon: return common;
    case Part::kSpecific: return specific;
    default: return confounding;
  }
}

PooledParts pool_parts(const StructuredFeatures& features) {
  return PooledParts{spatial_pool(features.common, features.positions),
                     spatial_pool(features.specific, features.positions),
                     spatial_pool(features.confounding, features.positions)};
}

namespace {

void check_parts(const PooledParts& f, const StructuredClassifier& cls) {
  cls.validate();
  const PartitionSpec& p = cls.partition;
  if (f.common.cols() != p.d_c || f.specific.cols() != p.d_p || f.confounding.cols() != p.d_n) {
    throw DimensionError("structured_logits: part dimensions do not match weight blocks");
  }
  if (f.specific.rows() != f.common.rows() || f.confounding.rows() != f.common.rows()) {
    throw DimensionError("structured_logits: part row counts differ");
  }
}

}  // namespace

Matrix structured_logits(const PooledParts& f, const StructuredClassifier& cls, const InferenceWeights& lam) {
  check_parts(f, cls);
  const WeightBlocks w = disentangle_weights(cls.weight, cls.partition);
  const Matrix wc = w.common.transpose();
  const Matrix wp = w.specific.transpose();
  const Matrix wn = w.confounding.transpose();
  const Matrix hc = f.common * wc;
  const Matrix hp = f.specific * wp;
  const Matrix hn = f.confounding * wn;
  Matrix logits = hc * lam.common + hp * lam.specific;
  logits += hn * lam.confounding;
  logits.rowwise() += cls.bias.row(0);
  return logits;
}

Matrix affine_logits(const PooledParts& f, const StructuredClassifier& cls) {
  check_parts(f, cls);
  Matrix full(f.rows(), cls.partition.d);
  full << f.common, f.specific, f.confounding;
  Matrix logits = full * cls.weight.transpose();
  logits.rowwise() += cls.bias.row(0);
  return logits;
}

Index predict(const Eigen::Ref<const RowVector>& logits) {
  if (logits.size() == 0) throw DimensionError("predict: empty logits");
  return argmax(logits);
}

std::vector<Index> predict_rows(const Matrix& logits) {
  std::vector<Index> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(logits.row(i));
  return out;
}

Var structured_logits(const PooledVars& f, const ClassifierVars& cls, const PartitionSpec& p, Var lam) {
  if (lam.rows() != 1 || lam.cols() != 3) throw DimensionError("structured_logits: lambda must be 1x3");
  const Index k = cls.weight.rows();
  Var wc = transpose(block(cls.weight, 0, p.offset(Part::kCommon), k, p.d_c));
  Var wp = transpose(block(cls.weight, 0, p.offset(Part::kSpecific), k, p.d_p));
  Var wn = transpose(block(cls.weight, 0, p.offset(Part::kConfounding), k, p.d_n));
  Var hc = scale(matmul(f.common, wc), block(lam, 0, 0, 1, 1));
  Var hp = scale(matmul(f.specific, wp), block(lam, 0, 1, 1, 1));
  Var hn = scale(matmul(f.confounding, wn), block(lam, 0, 2, 1, 1));
  return add_rowvec((hc + hp) + hn, cls.bias);
}

}  // namespace cfsg
