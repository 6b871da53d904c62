#pragma once

// Momentum-averaged per-class, per-part feature centroids and weighted
// nearest-centroid inference.

#include <map>
#include <optional>
#include <vector>

#include "cfsg/classifier.hpp"

namespace cfsg {

struct PartCentroids {
  Vector common;
  Vector specific;
  Vector confounding;

  const Vector& part(Part p) const;
  Vector& part(Part p);
};

/// Per-class prototypes of one batch, keyed by class id (only classes present in the batch).
using BatchPrototypes = std::map<Index, PartCentroids>;

BatchPrototypes batch_part_prototypes(const StructuredFeatures& features,
                                      const Eigen::Ref<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>& labels);
BatchPrototypes batch_part_prototypes(const PooledParts& pooled,
                                      const Eigen::Ref<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>& labels);

class SubCentroidBank {
 public:
  SubCentroidBank() = default;
  /// `class_counts[g]` classes at level g; centroid widths come from the partition.
  SubCentroidBank(const std::vector<Index>& class_counts, const PartitionSpec& p, double momentum);

  double momentum() const { return momentum_; }
  Index levels() const { return static_cast<Index>(centroids_.size()); }
  Index classes(Index level) const;
  const PartitionSpec& partition() const { return partition_; }

  bool initialized(Index level, Index cls) const;
  const PartCentroids& centroid(Index level, Index cls) const;

  /// F <- mu F + (1 - mu) P for every present class; the first prototype seen initializes F.
  void momentum_update(Index level, const BatchPrototypes& prototypes);

  /// Direct write, used when restoring a checkpoint.
  void set(Index level, Index cls, PartCentroids c);

  bool operator==(const SubCentroidBank& other) const;

 private:
  PartitionSpec partition_;
  double momentum_ = 0.9;
  std::vector<std::vector<std::optional<PartCentroids>>> centroids_;
};

/// argmin_k sum_part lambda_part * |f_part - F_k,part|_2; ties to the lowest index.
Index subcentroid_predict(const PartCentroids& f, const SubCentroidBank& bank, Index level,
                          const InferenceWeights& lam);

std::vector<Index> subcentroid_predict_rows(const PooledParts& f, const SubCentroidBank& bank, Index level,
                                            const InferenceWeights& lam);

}  // namespace cfsg
