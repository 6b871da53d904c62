#pragma once

// The shipped synthetic benchmark: an 8-class, 3-level binary hierarchy with
// a style shift on the specific and confounding blocks of the target domain.

#include <array>
#include <string>
#include <vector>

#include "cfsg/train.hpp"

namespace cfsg {

/// Counts (8, 4, 2), parent of class k is k / 2 at every level.
HierarchySpec benchmark_hierarchy();

/// Generator settings for one seed of the benchmark (100 samples per class).
SyntheticDomainConfig benchmark_data_config(std::uint64_t seed);

/// Fixed a-priori weights for structured inference; the benchmark also reports each
/// structured variant at its sweep optimum.
inline constexpr InferenceWeights kStructuredWeights{0.75, 0.2, 0.05};

enum class Variant {
  kFull,          // structuralization losses + structured inference weights
  kFsOnly,        // structuralization losses, uniform inference weights
  kCsOnly,        // no structuralization losses, structured inference weights
  kUnstructured,  // neither
};
const char* to_string(Variant v);

inline constexpr std::array<Variant, 4> kAllVariants{Variant::kFull, Variant::kFsOnly, Variant::kCsOnly,
                                                   Variant::kUnstructured};

/// Variants without the structuralization losses train the fine branch on plain
/// cross-entropy (eps_fuse = 1).
TrainConfig benchmark_train_config(Variant v, std::uint64_t seed);
InferenceWeights variant_weights(Variant v);

struct VariantSummary {
  Variant variant = Variant::kFull;
  double acc_fixed = 0.0;  // mean target accuracy at variant_weights()
  /// Seed-averaged sweep table (structured variants only) and its first best row.
  std::vector<SweepRow> mean_sweep;
  std::size_t best = 0;
  double acc_best = 0.0;  // acc_fixed when there is no sweep
  double rho_all = 0.0;
};

struct BenchmarkSummary {
  int seeds = 0;
  double sweep_step = 0.05;
  std::array<VariantSummary, 4> variants;  // kAllVariants order
  /// Full model evaluated at lambda = (1, 1, 1), seed mean.
  double full_uniform_acc = 0.0;
  double seconds = 0.0;

  const VariantSummary& at(Variant v) const { return variants[static_cast<std::size_t>(v)]; }
};

/// Trains every variant on seeds 0 .. seeds-1 and evaluates on the shifted target.
BenchmarkSummary run_benchmark(int seeds, double sweep_step = 0.05, unsigned threads = 1);

}  // namespace cfsg
