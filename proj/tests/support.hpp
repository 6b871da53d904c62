#pragma once

// Test-side oracles and fixtures. Nothing here calls into the library's own
// numeric helpers, so comparisons against it stay independent.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cfsg/hierarchy.hpp"
#include "cfsg/numkernel.hpp"

namespace cfsg::testing {

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

/// counts [4,2,1]: fine {0,1}->0, {2,3}->1; both genera -> 0.
inline HierarchySpec tiny_hierarchy() { return HierarchySpec({4, 2, 1}, {{0, 0, 1, 1}, {0, 0}}); }

/// Rows of the four-level label table: (fine, g1, g2, g3).
inline const std::vector<std::array<Index, 4>>& appendix_rows() {
  static const std::vector<std::array<Index, 4>> rows = {
      {8, 5, 3, 3},   {9, 6, 3, 3},    {10, 5, 3, 3},   {11, 7, 3, 3},
      {12, 8, 3, 3},  {28, 19, 12, 3}, {29, 19, 12, 3}, {51, 36, 19, 8},
  };
  return rows;
}

/// Smallest hierarchy containing every table row; unlisted classes hang off class 0.
inline HierarchySpec appendix_hierarchy() {
  const std::vector<Index> counts = {52, 37, 20, 9};
  std::vector<std::vector<Index>> maps = {std::vector<Index>(52, 0), std::vector<Index>(37, 0),
                                          std::vector<Index>(20, 0)};
  for (const auto& r : appendix_rows()) {
    for (std::size_t g = 0; g < 3; ++g) maps[g][static_cast<std::size_t>(r[g])] = r[g + 1];
  }
  return HierarchySpec(counts, maps);
}

/// Average ranks by counting, O(n^2).
inline std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t below = 0, ties = 0;
    for (double w : v) {
      if (w < v[i]) ++below;
      if (w == v[i]) ++ties;
    }
    r[i] = static_cast<double>(below) + 0.5 * static_cast<double>(ties + 1);
  }
  return r;
}

inline double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = brute_ranks(x), ry = brute_ranks(y);
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sx += rx[i];
    sy += ry[i];
    sxx += rx[i] * rx[i];
    syy += ry[i] * ry[i];
    sxy += rx[i] * ry[i];
  }
  return (sxy - sx * sy / n) / std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
}

/// Central differences, entry by entry.
inline Matrix central_difference(const std::function<double(const Matrix&)>& f, const Matrix& theta, double h = 1e-6) {
  Matrix g(theta.rows(), theta.cols());
  Matrix t = theta;
  for (Index i = 0; i < t.size(); ++i) {
    const double keep = t.data()[i];
    t.data()[i] = keep + h;
    const double up = f(t);
    t.data()[i] = keep - h;
    const double down = f(t);
    t.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double naive_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace cfsg::testing
