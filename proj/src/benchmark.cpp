#include "cfsg/benchmark.hpp"

#include <chrono>

#include "cfsg/explain.hpp"

namespace cfsg {

HierarchySpec benchmark_hierarchy() {
  std::vector<std::vector<Index>> parents = {{0, 0, 1, 1, 2, 2, 3, 3}, {0, 0, 1, 1}};
  return HierarchySpec({8, 4, 2}, std::move(parents));
}

SyntheticDomainConfig benchmark_data_config(std::uint64_t seed) {
  SyntheticDomainConfig cfg;
  // No fine-level common signal: siblings share their parent's common prototype.
  cfg.level_scales = {0.0, 1.5, 1.5};
  cfg.specific_scale = 1.0;
  cfg.confounding_scale = 1.0;
  cfg.noise_std = 0.3;
  cfg.shift_scale = 1.0;
  cfg.shift_offset = 3.0;
  cfg.samples_per_class = 100;
  cfg.seed = seed;
  return cfg;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "cs+fs";
    case Variant::kFsOnly: return "fs-only";
    case Variant::kCsOnly: return "cs-only";
    default: return "unstructured";
  }
}

TrainConfig benchmark_train_config(Variant v, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.toggles.enable_fs = v == Variant::kFull || v == Variant::kFsOnly;
  cfg.toggles.enable_cs = v == Variant::kFull || v == Variant::kCsOnly;
  cfg.weight_decay = 0.04;
  if (!cfg.toggles.enable_fs) cfg.coeffs.eps_fuse = 1.0;
  return cfg;
}

InferenceWeights variant_weights(Variant v) {
  return (v == Variant::kFull || v == Variant::kCsOnly) ? kStructuredWeights : InferenceWeights{1.0, 1.0, 1.0};
}

BenchmarkSummary run_benchmark(int seeds, double sweep_step, unsigned threads) {
  if (seeds < 1) throw ValidationError("run_benchmark: need at least one seed");
  const auto start = std::chrono::steady_clock::now();
  const HierarchySpec h = benchmark_hierarchy();
  BenchmarkSummary out;
  out.seeds = seeds;
  out.sweep_step = sweep_step;
  const auto n = static_cast<double>(seeds);

  for (int s = 0; s < seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    const TrainConfig probe = benchmark_train_config(Variant::kFull, seed);
    const DomainPair data =
        generate_synthetic_domains(h, partition_channels(probe.arch.input_dim, probe.arch.ratio), benchmark_data_config(seed));
    for (Variant v : kAllVariants) {
      VariantSummary& vs = out.variants[static_cast<std::size_t>(v)];
      vs.variant = v;
      const TrainResult run = train(benchmark_train_config(v, seed), data.source);
      if (run.diverged) throw NumericError(std::string("benchmark: ") + to_string(v) + " diverged: " + run.message);
      const Checkpoint& ck = run.checkpoint;
      vs.acc_fixed += evaluate(ck, data.target, variant_weights(v)).fine_acc / n;
      vs.rho_all += hierarchy_alignment(ck.net.classifiers.front().weight, ck.net.partition, h).rho_for(Block::kAll) / n;
      if (v == Variant::kFull) out.full_uniform_acc += evaluate(ck, data.target, {1.0, 1.0, 1.0}).fine_acc / n;
      if (ck.config.toggles.enable_cs) {
        const SweepResult sw = weight_sweep(ck, data.target, sweep_step, threads);
        if (vs.mean_sweep.empty()) {
          vs.mean_sweep = sw.rows;
          for (auto& r : vs.mean_sweep) r.fine_acc = 0.0;
        }
        for (std::size_t i = 0; i < sw.rows.size(); ++i) vs.mean_sweep[i].fine_acc += sw.rows[i].fine_acc / n;
      }
    }
  }
  for (auto& vs : out.variants) {
    vs.acc_best = vs.acc_fixed;
    if (vs.mean_sweep.empty()) continue;
    for (std::size_t i = 1; i < vs.mean_sweep.size(); ++i) {
      if (vs.mean_sweep[i].fine_acc > vs.mean_sweep[vs.best].fine_acc) vs.best = i;
    }
    vs.acc_best = vs.mean_sweep[vs.best].fine_acc;
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace cfsg
