#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "cfsg/errors.hpp"

namespace cfsg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// Clamp applied to probabilities before taking logs.
inline constexpr double kEpsProb = 1e-12;
// Added to the product of norms in every cosine denominator.
inline constexpr double kEpsNorm = 1e-12;

/// <a, b> / (|a| |b| + eps). Both arguments are treated as flat vectors.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size() || a.size() == 0) {
    throw DimensionError("cosine_similarity: length mismatch");
  }
  const Scalar dot = a.cwiseProduct(b).sum();
  return dot / (a.norm() * b.norm() + Scalar(kEpsNorm));
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  if (z.size() == 0) throw DimensionError("softmax: empty input");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> flat = z.derived().reshaped();
  const Scalar shift = flat.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (flat.array() - shift).exp().matrix();
  return e / e.sum();
}

// Row-wise softmax of a (rows x classes) logit matrix.
Matrix softmax_rows(const Matrix& logits);

/// -sum target_i * ln(max(pred_i, eps)).
double cross_entropy(std::span<const double> target, std::span<const double> pred);

/// sum target_i * ln(target_i / pred_i); zero-mass target entries contribute nothing.
double kl_divergence(std::span<const double> target, std::span<const double> pred);

using ScalarFunction = std::function<double(const Matrix&)>;

/// Central differences of f around theta, one coordinate at a time.
Matrix finite_difference_grad(const ScalarFunction& f, const Matrix& theta, double h = 1e-5);

/// 1-based ranks; tied values share the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

double pearson(std::span<const double> x, std::span<const double> y);

/// Spearman's rho with average ranks for ties.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
Index argmax(const Eigen::DenseBase<Derived>& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace cfsg
