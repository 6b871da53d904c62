#include "cfsg/subcentroid.hpp"

#include <limits>
#include <string>

namespace cfsg {

using LabelColumn = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

const Vector& PartCentroids::part(Part p) const {
  switch (p) {
    case Part::kCommon: return common;
    case Part::kSpecific: return specific;
    default: return confounding;
  }
}

Vector& PartCentroids::part(Part p) {
  switch (p) {
    case Part::kCommon: return common;
    case Part::kSpecific: return specific;
    default: return confounding;
  }
}

BatchPrototypes batch_part_prototypes(const PooledParts& pooled, const Eigen::Ref<const LabelColumn>& labels) {
  if (pooled.rows() != labels.size()) throw DimensionError("batch_part_prototypes: label count != batch size");
  BatchPrototypes sums;
  std::map<Index, Index> counts;
  for (Index b = 0; b < labels.size(); ++b) {
    auto [it, fresh] = sums.try_emplace(labels(b));
    if (fresh) {
      for (Part p : kAllParts) it->second.part(p) = Vector::Zero(pooled.part(p).cols());
    }
    for (Part p : kAllParts) it->second.part(p) += pooled.part(p).row(b).transpose();
    ++counts[labels(b)];
  }
  for (auto& [cls, c] : sums) {
    for (Part p : kAllParts) c.part(p) /= static_cast<double>(counts[cls]);
  }
  return sums;
}

BatchPrototypes batch_part_prototypes(const StructuredFeatures& features, const Eigen::Ref<const LabelColumn>& labels) {
  return batch_part_prototypes(pool_parts(features), labels);
}

SubCentroidBank::SubCentroidBank(const std::vector<Index>& class_counts, const PartitionSpec& p, double momentum)
    : partition_(p), momentum_(momentum) {
  p.validate();
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ValidationError("sub-centroid momentum must lie in [0, 1]");
  for (Index k : class_counts) centroids_.emplace_back(static_cast<std::size_t>(k));
}

Index SubCentroidBank::classes(Index level) const {
  return static_cast<Index>(centroids_.at(static_cast<std::size_t>(level)).size());
}

bool SubCentroidBank::initialized(Index level, Index cls) const {
  if (level < 0 || level >= levels() || cls < 0 || cls >= classes(level)) return false;
  return centroids_[static_cast<std::size_t>(level)][static_cast<std::size_t>(cls)].has_value();
}

const PartCentroids& SubCentroidBank::centroid(Index level, Index cls) const {
  if (!initialized(level, cls)) {
    throw StateError("sub-centroid for class " + std::to_string(cls) + " at level " + std::to_string(level) +
                     " was never initialized");
  }
  return *centroids_[static_cast<std::size_t>(level)][static_cast<std::size_t>(cls)];
}

void SubCentroidBank::momentum_update(Index level, const BatchPrototypes& prototypes) {
  if (level < 0 || level >= levels()) throw ValidationError("momentum_update: level out of range");
  auto& slots = centroids_[static_cast<std::size_t>(level)];
  for (const auto& [cls, proto] : prototypes) {
    if (cls < 0 || cls >= classes(level)) throw ValidationError("momentum_update: class out of range");
    for (Part p : kAllParts) {
      if (proto.part(p).size() != partition_.size(p)) {
        throw DimensionError(std::string("momentum_update: ") + to_string(p) + " prototype width mismatch");
      }
    }
    auto& slot = slots[static_cast<std::size_t>(cls)];
    if (!slot) {
      slot = proto;
      continue;
    }
    for (Part p : kAllParts) slot->part(p) = momentum_ * slot->part(p) + (1.0 - momentum_) * proto.part(p);
  }
}

void SubCentroidBank::set(Index level, Index cls, PartCentroids c) {
  if (level < 0 || level >= levels() || cls < 0 || cls >= classes(level)) {
    throw ValidationError("sub-centroid bank: slot out of range");
  }
  for (Part p : kAllParts) {
    if (c.part(p).size() != partition_.size(p)) throw DimensionError("sub-centroid bank: width mismatch");
  }
  centroids_[static_cast<std::size_t>(level)][static_cast<std::size_t>(cls)] = std::move(c);
}

bool SubCentroidBank::operator==(const SubCentroidBank& other) const {
  if (!(partition_ == other.partition_) || momentum_ != other.momentum_ || levels() != other.levels()) return false;
  for (Index g = 0; g < levels(); ++g) {
    if (classes(g) != other.classes(g)) return false;
    for (Index k = 0; k < classes(g); ++k) {
      if (initialized(g, k) != other.initialized(g, k)) return false;
      if (!initialized(g, k)) continue;
      for (Part p : kAllParts) {
        if (centroid(g, k).part(p) != other.centroid(g, k).part(p)) return false;
      }
    }
  }
  return true;
}

Index subcentroid_predict(const PartCentroids& f, const SubCentroidBank& bank, Index level,
                          const InferenceWeights& lam) {
  Index best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < bank.classes(level); ++k) {
    const PartCentroids& c = bank.centroid(level, k);
    double dist = 0.0;
    for (Part p : kAllParts) {
      if (f.part(p).size() != c.part(p).size()) throw DimensionError("subcentroid_predict: width mismatch");
      dist += lam.get(p) * (f.part(p) - c.part(p)).norm();
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

std::vector<Index> subcentroid_predict_rows(const PooledParts& f, const SubCentroidBank& bank, Index level,
                                            const InferenceWeights& lam) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(f.rows()));
  for (Index i = 0; i < f.rows(); ++i) {
    PartCentroids row{f.common.row(i).transpose(), f.specific.row(i).transpose(), f.confounding.row(i).transpose()};
    out.push_back(subcentroid_predict(row, bank, level, lam));
  }
  return out;
}

}  // namespace cfsg
