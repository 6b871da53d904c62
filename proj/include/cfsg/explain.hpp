#pragma once

// Concept-similarity matrices over classifier weights, their rank agreement
// with the label hierarchy, and neural-collapse statistics.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cfsg/hierarchy.hpp"
#include "cfsg/model.hpp"

namespace cfsg {

enum class Block { kAll, kCommon, kSpecific, kConfounding };
inline constexpr std::array<Block, 4> kAllBlocks = {Block::kAll, Block::kCommon, Block::kSpecific,
                                                    Block::kConfounding};
const char* to_string(Block b);

/// K x K cosine similarities between the selected column slices of W's rows.
Matrix concept_similarity_matrix(const Matrix& weight, Block block, const PartitionSpec& p);

struct SimilarityReport {
  std::array<Matrix, 4> cosine;  // indexed like kAllBlocks
  Eigen::MatrixXi ground_truth;
  std::array<double, 4> rho{};

  double rho_for(Block b) const { return rho[static_cast<std::size_t>(b)]; }
  const Matrix& cosine_for(Block b) const { return cosine[static_cast<std::size_t>(b)]; }
};

/// Spearman rank correlation over the strict upper triangle of each block's
/// similarity matrix against the hierarchy's ground truth.
SimilarityReport hierarchy_alignment(const Matrix& weight, const PartitionSpec& p, const HierarchySpec& h);

struct NCReport {
  std::optional<double> nc1;  // empty when between-class scatter is degenerate
  std::optional<double> nc2;  // empty when the mean centered norm is zero
  std::vector<double> nc3;    // per class, in class order
  std::vector<Index> classes;
};

/// features: N x d, labels: class per row, weight: K x d classifier rows indexed by class id.
NCReport nc_diagnostics(const Matrix& features, const std::vector<Index>& labels, const Matrix& weight);

nlohmann::json report_to_json(const SimilarityReport& sim, const NCReport* nc = nullptr);

/// One row per class pair i < j: i,j,gt_sim,cos_all,cos_c,cos_p,cos_n.
std::string pairs_csv(const SimilarityReport& sim);

}  // namespace cfsg
