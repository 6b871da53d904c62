#pragma once

// Built-in invariant suite: finite-difference gradient checks for every loss
// term plus a handful of oracle equivalences.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cfsg/numkernel.hpp"

namespace cfsg {

/// Loss terms covered by the gradient checks, in report order.
const std::vector<std::string>& gradient_check_terms();

/// Called with the term name and its analytic gradient (flattened) before comparison.
using GradientHook = std::function<void(const std::string& term, Vector& analytic)>;

struct GradCheckOptions {
  int draws = 100;
  /// Draws for the whole-network check (every parameter, total loss).
  int network_draws = 10;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  GradientHook hook;
};

struct GradCheckResult {
  std::string term;
  int draws = 0;
  int skipped = 0;  // draws replaced because a rectifier input sat within the kink margin
  double max_rel_error = 0.0;
  bool passed = false;
};

/// |a - f| / max(|a|, |f|, floor) with a small floor so an all-zero gradient compares as zero.
double gradient_relative_error(const Vector& analytic, const Vector& numeric);

std::vector<GradCheckResult> gradient_checks(const GradCheckOptions& opts);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  /// Gradient checks only.
  std::optional<GradCheckResult> grad;
};

struct SelftestOptions {
  GradCheckOptions grad;
  /// Name of a gradient-check term whose analytic gradient gets perturbed (fault injection).
  std::string inject_fault;
};

std::vector<CheckResult> run_selftest(const SelftestOptions& opts);

}  // namespace cfsg
