#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfsg/numkernel.hpp"

namespace cfsg {

struct PartitionSpec;

using LabelMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

/// Multi-granularity label tree. Level 0 is the fine level; level g+1 is the
/// parent level of g.
class HierarchySpec {
 public:
  HierarchySpec() = default;
  /// Validates and builds. parent_maps[g][k] is the level-(g+1) parent of level-g class k.
  HierarchySpec(std::vector<Index> class_counts, std::vector<std::vector<Index>> parent_maps);

  Index levels() const { return static_cast<Index>(class_counts_.size()); }
  Index num_fine() const { return class_counts_.empty() ? 0 : class_counts_.front(); }
  Index class_count(Index level) const { return class_counts_.at(static_cast<std::size_t>(level)); }
  const std::vector<Index>& class_counts() const { return class_counts_; }
  const std::vector<std::vector<Index>>& parent_maps() const { return parent_maps_; }

  Index parent(Index level, Index cls) const;
  /// Level-`level` ancestor of a fine class.
  Index ancestor(Index fine, Index level) const;
  /// Ancestor of a class at any level (`from` <= `to`).
  Index ancestor_from(Index from, Index cls, Index to) const;

  /// K_g x K matrix that spreads each level-g class's mass evenly over its fine descendants.
  Matrix lift_matrix(Index level) const;

  bool operator==(const HierarchySpec&) const = default;

 private:
  std::vector<Index> class_counts_;
  std::vector<std::vector<Index>> parent_maps_;
  LabelMatrix ancestors_;  // K x G
};

HierarchySpec build_hierarchy(std::vector<Index> class_counts,
                              std::vector<std::vector<Index>> parent_maps);

/// Labels of a fine class at every level; element 0 is the class itself.
std::vector<Index> label_vector(const HierarchySpec& h, Index fine_class);

/// G minus the Hamming distance between the two label vectors.
int class_similarity(const HierarchySpec& h, Index i, Index j);

Eigen::MatrixXi similarity_matrix(const HierarchySpec& h);

enum class Domain { kSource, kTarget };
std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct LabeledSample {
  Vector x;
  std::vector<Index> labels;
  Domain domain = Domain::kSource;
};

/// Row i of `features` and `labels` describe one sample; labels has one column per level.
struct Dataset {
  HierarchySpec hierarchy;
  Domain domain = Domain::kSource;
  Matrix features;
  LabelMatrix labels;

  Index size() const { return features.rows(); }
  LabeledSample sample(Index i) const;
  /// Throws ValidationError if any label row disagrees with the hierarchy.
  void validate() const;
};

struct SyntheticDomainConfig {
  /// Common-block prototype scale for each level (fine first). Empty -> all 1.
  std::vector<double> level_scales;
  double specific_scale = 1.0;
  double confounding_scale = 1.0;
  double noise_std = 0.1;
  /// Target domain: x_block <- shift_scale * x_block + shift_offset * u, u ~ N(0, I) fixed per seed.
  double shift_scale = 1.0;
  double shift_offset = 0.0;
  bool shift_common = false;
  bool shift_specific = true;
  bool shift_confounding = true;
  Index samples_per_class = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DomainPair {
  Dataset source;
  Dataset target;
};

/// Noise-free class means of the source domain, K x d.
Matrix synthetic_class_means(const HierarchySpec& h, const PartitionSpec& p,
                             const SyntheticDomainConfig& cfg);

DomainPair generate_synthetic_domains(const HierarchySpec& h, const PartitionSpec& p,
                                      const SyntheticDomainConfig& cfg);

}  // namespace cfsg
