#pragma once

// Training objective:
//   L = L_fine + L_c + L_lf + [L_dec - lambda_cs S_cs - lambda_cd S_cd + lambda_sp S_p]
// where the bracketed block is the feature-structuralization (FS) term.
//
// Gram-based terms (L_dec, S_cd, S_p) sum only off-diagonal cosines; the
// diagonal of (Gram - I) is zero for nonzero vectors.

#include <span>
#include <vector>

#include "cfsg/hierarchy.hpp"
#include "cfsg/model.hpp"

namespace cfsg {

struct LossCoefficients {
  double eps_fuse = 0.7;
  double lambda_cs = 1.0;
  double lambda_cd = 1.0;
  double lambda_sp = 1.0;

  void validate() const;
};

struct LossToggles {
  bool enable_fs = true;
  bool enable_cs = true;
};

/// One-hot rows for the given labels.
Matrix one_hot(const Eigen::Ref<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>& labels, Index classes);

/// Batch-mean cross entropy of probability rows against target rows.
Var mean_cross_entropy(Var probs, const Matrix& targets);

/// Sum over coarse levels g = 1..G-1 of the batch-mean CE. `coarse_probs[g-1]` belongs to level g.
Var coarse_ce_loss(GradTape& tape, std::span<const Var> coarse_probs, const LabelMatrix& labels, const HierarchySpec& h);

/// KL(eps * y_f + (1 - eps) * mean_g lift(p_g) || p_f), batch mean.
Var prediction_alignment_loss(std::span<const Var> coarse_probs, Var fine_probs, const Matrix& fine_targets,
                              const HierarchySpec& h, double eps_fuse);

/// Mean over samples and levels of the summed off-diagonal cosines between the
/// three channel-pooled part vectors.
Var disentanglement_loss(std::span<const StructuredVars> parts);

/// Mean cosine between a sample's flattened common parts at adjacent levels.
Var common_granularity_similarity(std::span<const StructuredVars> parts);

/// Class prototypes of one level: prototype rows and the class id of each row.
struct LevelPrototypes {
  Var prototypes;
  std::vector<Index> classes;
};

/// Sibling agreement of common prototypes over levels 0..G-2 (`protos[g]` holds level g).
Var common_sibling_similarity(std::span<const LevelPrototypes> protos, const HierarchySpec& h);

/// Off-diagonal cosine mass among specific prototypes over all levels.
Var specific_divergence(std::span<const LevelPrototypes> protos, const HierarchySpec& h);

/// Means of the spatially pooled part over samples of each class present in the batch.
LevelPrototypes class_prototypes(Var part, Index positions, const Eigen::Ref<const Eigen::Matrix<Index, Eigen::Dynamic, 1>>& labels);

struct LossBreakdown {
  Var fine_ce;
  Var coarse_ce;
  Var alignment;
  Var disentangle;
  Var s_cs;
  Var s_cd;
  Var s_p;
  Var total;
};

struct LossInputs {
  std::span<const StructuredVars> parts;  // one per level
  std::span<const Var> probs;            // softmax outputs, one per level, fine first
  const LabelMatrix* labels = nullptr;
  const HierarchySpec* hierarchy = nullptr;
};

/// Computes every term on one forward pass and combines them in a fixed order.
LossBreakdown compute_losses(const LossInputs& in, const LossCoefficients& coeffs, const LossToggles& toggles);

/// Fixed-order combination used by compute_losses.
Var total_loss(const LossBreakdown& terms, const LossCoefficients& coeffs, const LossToggles& toggles);
double total_loss_value(double fine_ce, double coarse_ce, double alignment, double disentangle, double s_cs,
                        double s_cd, double s_p, const LossCoefficients& coeffs, const LossToggles& toggles);

// ---- value-level wrappers ---------------------------------------------

double coarse_ce_loss(std::span<const Matrix> coarse_probs, const LabelMatrix& labels, const HierarchySpec& h);
double prediction_alignment_loss(std::span<const Matrix> coarse_probs, const Matrix& fine_probs,
                                 const Matrix& fine_targets, const HierarchySpec& h, double eps_fuse);
double disentanglement_loss(std::span<const StructuredFeatures> parts);
double common_granularity_similarity(std::span<const StructuredFeatures> parts);

struct PrototypeSet {
  Matrix prototypes;  // one row per class in `classes`
  std::vector<Index> classes;
};

double common_sibling_similarity(std::span<const PrototypeSet> protos, const HierarchySpec& h);
double specific_divergence(std::span<const PrototypeSet> protos, const HierarchySpec& h);

}  // namespace cfsg
