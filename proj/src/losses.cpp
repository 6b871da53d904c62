#include "cfsg/losses.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>
#include <string>

namespace cfsg {

using LabelColumn = Eigen::Matrix<Index, Eigen::Dynamic, 1>;

void LossCoefficients::validate() const {
  if (!(eps_fuse >= 0.0 && eps_fuse <= 1.0)) throw ValidationError("eps_fuse must lie in [0, 1]");
  if (!(lambda_cs >= 0.0 && lambda_cd >= 0.0 && lambda_sp >= 0.0)) {
    throw ValidationError("loss coefficients must be >= 0");
  }
}

Matrix one_hot(const Eigen::Ref<const LabelColumn>& labels, Index classes) {
  Matrix out = Matrix::Zero(labels.size(), classes);
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) < 0 || labels(i) >= classes) {
      throw ValidationError("one_hot: label " + std::to_string(labels(i)) + " out of range");
    }
    out(i, labels(i)) = 1.0;
  }
  return out;
}

Var mean_cross_entropy(Var probs, const Matrix& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw DimensionError("cross entropy: target/prediction shape mismatch");
  }
  GradTape& tape = *probs.tape();
  Var picked = sum(cmul(tape.constant(targets), log_clamped(probs)));
  return scale(picked, -1.0 / static_cast<double>(probs.rows()));
}

Var coarse_ce_loss(GradTape& tape, std::span<const Var> coarse_probs, const LabelMatrix& labels,
                   const HierarchySpec& h) {
  if (static_cast<Index>(coarse_probs.size()) != h.levels() - 1) {
    throw ValidationError("coarse_ce_loss: expected predictions for " + std::to_string(h.levels() - 1) +
                          " coarse levels, got " + std::to_string(coarse_probs.size()));
  }
  Var total = tape.constant(Matrix::Zero(1, 1));
  for (Index g = 1; g < h.levels(); ++g) {
    const Var& probs = coarse_probs[static_cast<std::size_t>(g - 1)];
    total = total + mean_cross_entropy(probs, one_hot(labels.col(g), h.class_count(g)));
  }
  return total;
}

namespace {

void require_distributions(const Matrix& probs, const char* what) {
  for (Index i = 0; i < probs.rows(); ++i) {
    if (std::abs(probs.row(i).sum() - 1.0) > 1e-6 || (probs.row(i).array() < 0.0).any()) {
      throw ValidationError(std::string(what) + ": row " + std::to_string(i) + " is not a distribution");
    }
  }
}

Var zero(GradTape& tape) { return tape.constant(Matrix::Zero(1, 1)); }

}  // namespace

Var prediction_alignment_loss(std::span<const Var> coarse_probs, Var fine_probs, const Matrix& fine_targets,
                              const HierarchySpec& h, double eps_fuse) {
  if (!(eps_fuse >= 0.0 && eps_fuse <= 1.0)) throw ValidationError("eps_fuse must lie in [0, 1]");
  if (static_cast<Index>(coarse_probs.size()) != h.levels() - 1) {
    throw ValidationError("prediction_alignment_loss: one coarse prediction per coarse level required");
  }
  require_distributions(fine_probs.value(), "fine prediction");
  require_distributions(fine_targets, "fine target");
  GradTape& tape = *fine_probs.tape();
  Var target = tape.constant(fine_targets);
  if (!coarse_probs.empty()) {
    Var lifted_sum;
    for (Index g = 1; g < h.levels(); ++g) {
      const Var& probs = coarse_probs[static_cast<std::size_t>(g - 1)];
      require_distributions(probs.value(), "coarse prediction");
      if (probs.cols() != h.class_count(g)) throw DimensionError("coarse prediction width != class count");
      Var lifted = matmul(probs, tape.constant(h.lift_matrix(g)));
      lifted_sum = lifted_sum.valid() ? lifted_sum + lifted : lifted;
    }
    const double coarse_weight = (1.0 - eps_fuse) / static_cast<double>(h.levels() - 1);
    target = scale(target, eps_fuse) + scale(lifted_sum, coarse_weight);
  }
  const double inv_batch = 1.0 / static_cast<double>(fine_probs.rows());
  Var kl = sum(xlogx(target)) - sum(cmul(target, log_clamped(fine_probs)));
  return scale(kl, inv_batch);
}

Var disentanglement_loss(std::span<const StructuredVars> parts) {
  if (parts.empty()) throw ValidationError("disentanglement_loss: no levels");
  Var total;
  for (const auto& level : parts) {
    Var c = channel_pool(level.common, level.positions);
    Var p = channel_pool(level.specific, level.positions);
    Var n = channel_pool(level.confounding, level.positions);
    Var off = sum(rowwise_cosine(c, p)) + sum(rowwise_cosine(c, n));
    off = off + sum(rowwise_cosine(p, n));
    total = total.valid() ? total + off : off;
  }
  const auto batch = static_cast<double>(parts.front().batch());
  return scale(total, 2.0 / (batch * static_cast<double>(parts.size())));
}

Var common_granularity_similarity(std::span<const StructuredVars> parts) {
  if (parts.empty()) throw ValidationError("common_granularity_similarity: no levels");
  GradTape& tape = *parts.front().common.tape();
  if (parts.size() < 2) {
    spdlog::info("common_granularity_similarity: single granularity level, S_cs is 0");
    return zero(tape);
  }
  Var total;
  for (std::size_t g = 0; g + 1 < parts.size(); ++g) {
    const Index batch = parts[g].batch();
    Var a = reshape(parts[g].common, batch, parts[g].common.value().size() / batch);
    Var b = reshape(parts[g + 1].common, batch, parts[g + 1].common.value().size() / batch);
    Var s = sum(rowwise_cosine(a, b));
    total = total.valid() ? total + s : s;
  }
  const auto batch = static_cast<double>(parts.front().batch());
  return scale(total, 1.0 / (batch * static_cast<double>(parts.size() - 1)));
}

LevelPrototypes class_prototypes(Var part, Index positions, const Eigen::Ref<const LabelColumn>& labels) {
  Var pooled = spatial_pool(part, positions);
  if (pooled.rows() != labels.size()) throw DimensionError("class_prototypes: label count != batch size");
  std::map<Index, std::vector<Index>> members;
  for (Index b = 0; b < labels.size(); ++b) members[labels(b)].push_back(b);
  LevelPrototypes out;
  Matrix averaging = Matrix::Zero(static_cast<Index>(members.size()), labels.size());
  Index row = 0;
  for (const auto& [cls, rows] : members) {
    out.classes.push_back(cls);
    for (Index b : rows) averaging(row, b) = 1.0 / static_cast<double>(rows.size());
    ++row;
  }
  out.prototypes = matmul(part.tape()->constant(std::move(averaging)), pooled);
  return out;
}

namespace {

// Sum of gram(i,j) over pairs i != j selected by `pair`.
template <typename Pred>
Var masked_offdiag_cosine(const LevelPrototypes& level, Pred pair, bool* any) {
  const auto m = static_cast<Index>(level.classes.size());
  Matrix mask = Matrix::Zero(m, m);
  *any = false;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < m; ++j) {
      if (i != j && pair(level.classes[static_cast<std::size_t>(i)], level.classes[static_cast<std::size_t>(j)])) {
        mask(i, j) = 1.0;
        *any = true;
      }
    }
  }
  if (!*any) return Var();
  GradTape& tape = *level.prototypes.tape();
  return sum(cmul(cosine_gram(level.prototypes), tape.constant(std::move(mask))));
}

}  // namespace

Var common_sibling_similarity(std::span<const LevelPrototypes> protos, const HierarchySpec& h) {
  if (protos.empty()) throw ValidationError("common_sibling_similarity: no levels");
  GradTape& tape = *protos.front().prototypes.tape();
  if (h.levels() < 2) return zero(tape);
  if (static_cast<Index>(protos.size()) < h.levels() - 1) {
    throw ValidationError("common_sibling_similarity: prototypes missing for some levels");
  }
  Var total = zero(tape);
  for (Index g = 0; g + 1 < h.levels(); ++g) {
    bool any = false;
    Var s = masked_offdiag_cosine(
        protos[static_cast<std::size_t>(g)], [&](Index a, Index b) { return h.parent(g, a) == h.parent(g, b); },
        &any);
    if (!any) continue;
    const double norm = static_cast<double>(h.class_count(g + 1)) * static_cast<double>(h.class_count(g));
    total = total + scale(s, 1.0 / norm);
  }
  return scale(total, 1.0 / static_cast<double>(h.levels() - 1));
}

Var specific_divergence(std::span<const LevelPrototypes> protos, const HierarchySpec& h) {
  if (protos.empty()) throw ValidationError("specific_divergence: no levels");
  if (static_cast<Index>(protos.size()) < h.levels()) {
    throw ValidationError("specific_divergence: prototypes missing for some levels");
  }
  GradTape& tape = *protos.front().prototypes.tape();
  Var total = zero(tape);
  for (Index g = 0; g < h.levels(); ++g) {
    bool any = false;
    Var s = masked_offdiag_cosine(protos[static_cast<std::size_t>(g)], [](Index, Index) { return true; }, &any);
    if (!any) continue;
    total = total + scale(s, 1.0 / static_cast<double>(h.class_count(g)));
  }
  return scale(total, 1.0 / static_cast<double>(std::max<Index>(h.levels() - 1, 1)));
}

Var total_loss(const LossBreakdown& t, const LossCoefficients& coeffs, const LossToggles& toggles) {
  Var total = t.fine_ce + t.coarse_ce;
  total = total + t.alignment;
  if (toggles.enable_fs) {
    total = total + t.disentangle;
    total = total + scale(t.s_cs, -coeffs.lambda_cs);
    total = total + scale(t.s_cd, -coeffs.lambda_cd);
    total = total + scale(t.s_p, coeffs.lambda_sp);
  }
  return total;
}

double total_loss_value(double fine_ce, double coarse_ce, double alignment, double disentangle, double s_cs,
                        double s_cd, double s_p, const LossCoefficients& coeffs, const LossToggles& toggles) {
  double total = fine_ce + coarse_ce;
  total = total + alignment;
  if (toggles.enable_fs) {
    total = total + disentangle;
    total = total + s_cs * -coeffs.lambda_cs;
    total = total + s_cd * -coeffs.lambda_cd;
    total = total + s_p * coeffs.lambda_sp;
  }
  return total;
}

LossBreakdown compute_losses(const LossInputs& in, const LossCoefficients& coeffs, const LossToggles& toggles) {
  coeffs.validate();
  const HierarchySpec& h = *in.hierarchy;
  const LabelMatrix& labels = *in.labels;
  if (static_cast<Index>(in.parts.size()) != h.levels() || static_cast<Index>(in.probs.size()) != h.levels()) {
    throw ValidationError("compute_losses: one feature set and one prediction per level required");
  }
  GradTape& tape = *in.probs.front().tape();
  const auto coarse = in.probs.subspan(1);

  LossBreakdown out;
  const Matrix fine_targets = one_hot(labels.col(0), h.num_fine());
  out.fine_ce = mean_cross_entropy(in.probs.front(), fine_targets);
  out.coarse_ce = coarse_ce_loss(tape, coarse, labels, h);
  out.alignment = prediction_alignment_loss(coarse, in.probs.front(), fine_targets, h, coeffs.eps_fuse);
  out.disentangle = disentanglement_loss(in.parts);
  out.s_cs = common_granularity_similarity(in.parts);

  std::vector<LevelPrototypes> common, specific;
  for (Index g = 0; g < h.levels(); ++g) {
    const auto& level = in.parts[static_cast<std::size_t>(g)];
    specific.push_back(class_prototypes(level.specific, level.positions, labels.col(g)));
    if (g + 1 < h.levels()) common.push_back(class_prototypes(level.common, level.positions, labels.col(g)));
  }
  out.s_cd = common.empty() ? zero(tape) : common_sibling_similarity(common, h);
  out.s_p = specific_divergence(specific, h);
  out.total = total_loss(out, coeffs, toggles);
  return out;
}

// ---- value-level wrappers ---------------------------------------------

double coarse_ce_loss(std::span<const Matrix> coarse_probs, const LabelMatrix& labels, const HierarchySpec& h) {
  GradTape tape;
  std::vector<Var> probs;
  for (const auto& p : coarse_probs) probs.push_back(tape.constant(p));
  return coarse_ce_loss(tape, probs, labels, h).scalar();
}

double prediction_alignment_loss(std::span<const Matrix> coarse_probs, const Matrix& fine_probs,
                                 const Matrix& fine_targets, const HierarchySpec& h, double eps_fuse) {
  GradTape tape;
  std::vector<Var> probs;
  for (const auto& p : coarse_probs) probs.push_back(tape.constant(p));
  return prediction_alignment_loss(probs, tape.constant(fine_probs), fine_targets, h, eps_fuse).scalar();
}

namespace {

std::vector<StructuredVars> as_vars(GradTape& tape, std::span<const StructuredFeatures> parts) {
  std::vector<StructuredVars> out;
  for (const auto& p : parts) {
    out.push_back(StructuredVars{tape.constant(p.common), tape.constant(p.specific), tape.constant(p.confounding),
                                 p.positions});
  }
  return out;
}

std::vector<LevelPrototypes> as_vars(GradTape& tape, std::span<const PrototypeSet> protos) {
  std::vector<LevelPrototypes> out;
  for (const auto& p : protos) out.push_back(LevelPrototypes{tape.constant(p.prototypes), p.classes});
  return out;
}

}  // namespace

double disentanglement_loss(std::span<const StructuredFeatures> parts) {
  GradTape tape;
  return disentanglement_loss(as_vars(tape, parts)).scalar();
}

double common_granularity_similarity(std::span<const StructuredFeatures> parts) {
  GradTape tape;
  return common_granularity_similarity(as_vars(tape, parts)).scalar();
}

double common_sibling_similarity(std::span<const PrototypeSet> protos, const HierarchySpec& h) {
  GradTape tape;
  return common_sibling_similarity(as_vars(tape, protos), h).scalar();
}

double specific_divergence(std::span<const PrototypeSet> protos, const HierarchySpec& h) {
  GradTape tape;
  return specific_divergence(as_vars(tape, protos), h).scalar();
}

}  // namespace cfsg
