#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cfsg/errors.hpp"
#include "cfsg/numkernel.hpp"
#include "support.hpp"

namespace cfsg {
namespace {

using testing::brute_spearman;

TEST(Cosine, Examples) {
  EXPECT_NEAR(cosine_similarity(Vector::Unit(2, 0), Vector::Unit(2, 0)), 1.0, 1e-9);  // epsilon-guarded denominator
  EXPECT_NEAR(cosine_similarity(Vector::Unit(2, 0), Vector::Unit(2, 1)), 0.0, 1e-12);
  Vector a(2), b(2);
  a << 1, 1;
  b << 1, 0;
  EXPECT_NEAR(cosine_similarity(a, b), testing::naive_cosine({1, 1}, {1, 0}), 1e-12);
  EXPECT_NEAR(cosine_similarity(a, b), 0.70710678, 1e-8);
}

TEST(Cosine, ShapeMismatch) {
  EXPECT_THROW(cosine_similarity(Vector::Ones(2), Vector::Ones(3)), DimensionError);
}

TEST(Softmax, Examples) {
  Vector z = Vector::Zero(2);
  EXPECT_TRUE(softmax(z).isApprox(Vector::Constant(2, 0.5)));
  EXPECT_TRUE(softmax(Vector::Constant(4, -7.25)).isApprox(Vector::Constant(4, 0.25)));
  z << std::log(2.0), 0.0;
  const Vector p = softmax(z);
  EXPECT_NEAR(p(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p(1), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(softmax(Vector(0)), DimensionError);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Vector z(3);
  z << 1000.0, 999.0, -1000.0;
  const Vector p = softmax(z);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
}

TEST(CrossEntropy, Examples) {
  const std::vector<double> onehot = {0, 1, 0};
  EXPECT_LE(cross_entropy(onehot, onehot), 1e-9);
  const std::vector<double> t4 = {1, 0, 0, 0}, u4 = {0.25, 0.25, 0.25, 0.25};
  EXPECT_NEAR(cross_entropy(t4, u4), std::log(4.0), 1e-12);
  const std::vector<double> t2 = {1, 0}, u2 = {0.5, 0.5};
  EXPECT_NEAR(cross_entropy(t2, u2), std::numbers::ln2, 1e-12);
  EXPECT_THROW(cross_entropy(t2, u4), DimensionError);
}

TEST(KlDivergence, Examples) {
  const std::vector<double> p = {0.2, 0.3, 0.5};
  EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-12);
  const std::vector<double> t = {1, 0}, q = {0.5, 0.5};
  EXPECT_NEAR(kl_divergence(t, q), std::numbers::ln2, 1e-12);
  const std::vector<double> a = {0.5, 0.5}, b = {0.25, 0.75};
  EXPECT_NEAR(kl_divergence(a, b), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(kl_divergence(a, b), 0.14384, 1e-5);
}

TEST(FiniteDifference, Examples) {
  Matrix theta(1, 2);
  theta << 1, 2;
  const Matrix g = finite_difference_grad([](const Matrix& t) { return t.squaredNorm(); }, theta);
  EXPECT_NEAR(g(0, 0), 2.0, 1e-7);
  EXPECT_NEAR(g(0, 1), 4.0, 1e-7);
  EXPECT_TRUE(finite_difference_grad([](const Matrix&) { return 3.0; }, theta).isZero(0.0));

  // d/dz CE(onehot, softmax(z)) = p - y.
  const Matrix zero = Matrix::Zero(1, 2);
  const Matrix gce = finite_difference_grad(
      [](const Matrix& t) {
        const Vector p = softmax(t);
        return -std::log(p(0));
      },
      zero);
  EXPECT_NEAR(gce(0, 0), -0.5, 1e-7);
  EXPECT_NEAR(gce(0, 1), 0.5, 1e-7);
}

TEST(FiniteDifference, NonFiniteIsNumericError) {
  const Matrix theta = Matrix::Zero(1, 1);
  EXPECT_THROW(finite_difference_grad([](const Matrix& t) { return std::log(t(0, 0)); }, theta), NumericError);
}

TEST(Spearman, Examples) {
  const std::vector<double> x = {1, 2, 3, 4};
  EXPECT_NEAR(spearman_rho(x, x), 1.0, 1e-12);
  const std::vector<double> r = {4, 3, 2, 1};
  EXPECT_NEAR(spearman_rho(x, r), -1.0, 1e-12);
  const std::vector<double> y = {1, 3, 2, 4};
  EXPECT_NEAR(spearman_rho(x, y), 0.8, 1e-12);
  const std::vector<double> flat = {2, 2, 2, 2};
  EXPECT_THROW(spearman_rho(flat, x), UndefinedCorrelationError);
  EXPECT_THROW(spearman_rho(x, flat), UndefinedCorrelationError);
}

TEST(Spearman, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> small(0, 6);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = small(rng);
      y[i] = small(rng) - 0.3 * x[i];
    }
    EXPECT_NEAR(spearman_rho(x, y), brute_spearman(x, y), 1e-12);
  }
}

TEST(AverageRanks, TiesShareTheMean) {
  const std::vector<double> v = {10, 20, 20, 5};
  const auto r = average_ranks(v);
  const auto oracle = testing::brute_ranks(v);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_DOUBLE_EQ(r[i], oracle[i]);
}

TEST(Argmax, FirstMaximumWins) {
  Vector v(3);
  v << 0.1, 2.0, -1.0;
  EXPECT_EQ(argmax(v), 1);
  EXPECT_EQ(argmax(Vector::Constant(2, 5.0)), 0);
}

}  // namespace
}  // namespace cfsg
