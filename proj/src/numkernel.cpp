#include "cfsg/numkernel.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace cfsg {

namespace {

void require_simplex(std::span<const double> p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError(std::string(what) + ": entries must be finite and nonnegative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError(std::string(what) + ": distribution does not sum to 1");
  }
}

}  // namespace

Matrix softmax_rows(const Matrix& logits) {
  if (logits.size() == 0) throw DimensionError("softmax_rows: empty input");
  Matrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double shift = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - shift).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

double cross_entropy(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size() || target.empty()) {
    throw DimensionError("cross_entropy: length mismatch");
  }
  require_simplex(target, "cross_entropy target");
  require_simplex(pred, "cross_entropy pred");
  double loss = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    loss -= target[i] * std::log(std::max(pred[i], kEpsProb));
  }
  return loss;
}

double kl_divergence(std::span<const double> target, std::span<const double> pred) {
  if (target.size() != pred.size() || target.empty()) {
    throw DimensionError("kl_divergence: length mismatch");
  }
  require_simplex(target, "kl_divergence target");
  require_simplex(pred, "kl_divergence pred");
  double kl = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    kl += target[i] * (std::log(std::max(target[i], kEpsProb)) - std::log(std::max(pred[i], kEpsProb)));
  }
  return kl;
}

Matrix finite_difference_grad(const ScalarFunction& f, const Matrix& theta, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_difference_grad: step must be positive");
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_difference_grad: non-finite function value at coordinate " +
                         std::to_string(i));
    }
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) hold equal values -> mean 1-based rank
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("pearson: need two equal-length sequences of length >= 2");
  }
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UndefinedCorrelationError("correlation undefined for a constant sequence");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionError("spearman_rho: need two equal-length sequences of length >= 2");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace cfsg
