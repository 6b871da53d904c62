#pragma once

// Feature extractor, Granularity Transition Layer (GTL), and the fixed
// channel partition of features.
//
// Feature maps for a batch of B samples with d channels at L spatial
// positions are stored as (B*L) x d matrices; row b*L + l holds sample b at
// position l.

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "cfsg/tape.hpp"

namespace cfsg {

enum class Part { kCommon = 0, kSpecific = 1, kConfounding = 2 };
inline constexpr std::array<Part, 3> kAllParts = {Part::kCommon, Part::kSpecific, Part::kConfounding};
const char* to_string(Part p);

/// Contiguous channel blocks [0,d_c), [d_c, d_c+d_p), [d_c+d_p, d).
struct PartitionSpec {
  Index d = 0;
  Index d_c = 0;
  Index d_p = 0;
  Index d_n = 0;

  Index offset(Part p) const;
  Index size(Part p) const;
  void validate() const;
  bool operator==(const PartitionSpec&) const = default;
};

/// d_p = floor(r_p d), d_n = floor(r_n d) with r normalized to sum 1; the remainder goes to common.
PartitionSpec partition_channels(Index d, const std::array<double, 3>& ratio = {5.0, 3.0, 2.0});

struct DenseLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

/// Stack of rectified dense layers; the last layer emits raw_channels * positions values per sample.
struct BackboneParams {
  std::vector<DenseLayer> layers;
  Index raw_channels = 0;
  Index positions = 1;

  Index input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
  void validate() const;
};

BackboneParams init_backbone(Index input_dim, const std::vector<Index>& hidden, Index raw_channels,
                             Index positions, std::mt19937_64& rng);

struct GTLParams {
  Matrix weight;  // d x d_raw, 1x1 convolution
  Matrix bias;    // 1 x d
  Matrix gamma;   // 1 x d
  Matrix beta;    // 1 x d
  Matrix running_mean;
  Matrix running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  Index channels() const { return weight.rows(); }
  Index raw_channels() const { return weight.cols(); }
};

GTLParams init_gtl(Index raw_channels, Index channels, std::mt19937_64& rng);

enum class Mode { kTrain, kEval };

template <typename Scalar = double>
struct BasicStructuredFeatures {
  using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  MatrixType common;
  MatrixType specific;
  MatrixType confounding;
  Index positions = 1;

  const MatrixType& part(Part p) const {
    switch (p) {
      case Part::kCommon: return common;
      case Part::kSpecific: return specific;
      default: return confounding;
    }
  }
  Index batch() const { return common.rows() / positions; }
};
using StructuredFeatures = BasicStructuredFeatures<double>;

/// Column slicing by the fixed block layout.
template <typename Derived>
BasicStructuredFeatures<typename Derived::Scalar> disentangle_features(
    const Eigen::MatrixBase<Derived>& features, const PartitionSpec& p, Index positions = 1) {
  if (features.cols() != p.d) throw DimensionError("disentangle_features: channel count != partition d");
  if (positions < 1 || features.rows() % positions != 0) {
    throw DimensionError("disentangle_features: rows not divisible by positions");
  }
  BasicStructuredFeatures<typename Derived::Scalar> out;
  out.common = features.middleCols(p.offset(Part::kCommon), p.d_c);
  out.specific = features.middleCols(p.offset(Part::kSpecific), p.d_p);
  out.confounding = features.middleCols(p.offset(Part::kConfounding), p.d_n);
  out.positions = positions;
  return out;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> concat_parts(
    const BasicStructuredFeatures<Scalar>& f) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      f.common.rows(), f.common.cols() + f.specific.cols() + f.confounding.cols());
  out << f.common, f.specific, f.confounding;
  return out;
}

/// Tape-side counterpart of StructuredFeatures.
struct StructuredVars {
  Var common;
  Var specific;
  Var confounding;
  Index positions = 1;

  Var part(Part p) const {
    switch (p) {
      case Part::kCommon: return common;
      case Part::kSpecific: return specific;
      default: return confounding;
    }
  }
  Index batch() const { return common.rows() / positions; }
};

StructuredVars disentangle(Var features, const PartitionSpec& p, Index positions);

// ---- tape forward ------------------------------------------------------

struct DenseVars {
  Var weight;
  Var bias;
};

struct GTLVars {
  Var weight;
  Var bias;
  Var gamma;
  Var beta;
};

/// Batch statistics of the GTL pre-normalization activations (train mode only).
struct BatchStats {
  Matrix mean;
  Matrix var;
};

/// x: B x input -> (B*L) x raw_channels.
Var forward_backbone(const std::vector<DenseVars>& layers, Var x, Index positions);

struct GTLForward {
  Var output;         // after rectification
  Var normalized;     // before rectification
  BatchStats stats;   // filled in train mode
};

GTLForward gtl_forward(const GTLParams& params, const GTLVars& vars, Var raw, Mode mode);

// ---- value-level conveniences -----------------------------------------

Matrix forward_backbone(const BackboneParams& params, const Matrix& x);

/// Value-level GTL; `normalized` (optional) receives the pre-rectification activations.
Matrix gtl_forward(const GTLParams& params, const Matrix& raw, Mode mode, Matrix* normalized = nullptr);

/// Folds a batch's statistics into the running estimates.
void update_running_stats(GTLParams& params, const BatchStats& stats);

/// Mean over the L positions of each sample: (B*L) x c -> B x c.
Matrix spatial_pool(const Matrix& features, Index positions);
Var spatial_pool(Var features, Index positions);

/// Mean over channels, reshaped per sample: (B*L) x c -> B x L.
Var channel_pool(Var features, Index positions);

}  // namespace cfsg
