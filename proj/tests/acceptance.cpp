// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Oracles are written out here rather than borrowed from the library.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "cfsg/benchmark.hpp"
#include "cfsg/explain.hpp"
#include "cfsg/io.hpp"
#include "cfsg/subcentroid.hpp"
#include "support.hpp"

#ifndef CFSG_CLI_PATH
#error "CFSG_CLI_PATH must point at the cfsg executable"
#endif
#ifndef CFSG_SOURCE_DIR
#error "CFSG_SOURCE_DIR must point at the repository root"
#endif

namespace fs = std::filesystem;
using namespace cfsg;
using cfsg::testing::random_matrix;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("cfsg_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run_cli(const std::string& args) {
  const std::string log = (work_dir() / "cli.log").string();
  const std::string cmd = std::string(CFSG_CLI_PATH) + " " + args + " >> " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome gradient_fidelity() {
  const fs::path out = work_dir() / "selftest";
  const auto t0 = std::chrono::steady_clock::now();
  const int code = run_cli("selftest --out-dir " + out.string());
  const double secs = seconds_since(t0);
  if (!fs::exists(out / "selftest.json")) return {false, "selftest wrote no report (exit " + std::to_string(code) + ")"};
  const json report = read_json((out / "selftest.json").string());
  const std::vector<std::string> required = {"coarse_ce", "alignment", "disentangle", "s_cs",
                                             "s_cd",      "s_p",       "total"};
  double worst = 0.0;
  int min_draws = 1 << 30;
  bool ok = code == 0 && secs < 120.0;
  for (const auto& term : required) {
    bool found = false;
    for (const auto& entry : report) {
      if (entry["check"] != "grad:" + term) continue;
      found = true;
      const double err = entry["max_rel_error"];
      const int draws = entry["draws"];
      worst = std::max(worst, err);
      min_draws = std::min(min_draws, draws);
      ok = ok && entry["passed"].get<bool>() && err < 1e-4 && draws >= 100;
    }
    ok = ok && found;
  }
  return {ok, "7 terms, worst rel err " + sci(worst) + ", >= " + std::to_string(min_draws) + " draws each, exit " +
                  std::to_string(code) + ", " + fixed(secs, 1) + " s"};
}

Outcome classifier_decomposition() {
  std::mt19937_64 rng(2024);
  const PartitionSpec p = partition_channels(20);
  StructuredClassifier cls = init_classifier(8, p, rng);
  cls.bias = random_matrix(1, 8, rng);
  const Matrix f = random_matrix(1000, 20, rng);
  const PooledParts parts{f.leftCols(p.d_c), f.middleCols(p.d_c, p.d_p), f.rightCols(p.d_n)};
  const Matrix logits = structured_logits(parts, cls, InferenceWeights{1.0, 1.0, 1.0});
  double worst = 0.0;
  for (Index i = 0; i < f.rows(); ++i) {
    for (Index k = 0; k < cls.classes(); ++k) {
      double h = cls.bias(0, k);
      for (Index c = 0; c < p.d; ++c) h += cls.weight(k, c) * f(i, c);
      worst = std::max(worst, std::abs(h - logits(i, k)));
    }
  }
  return {worst <= 1e-12, "1000 inputs, max |structured - affine| = " + sci(worst)};
}

Outcome hierarchy_metric() {
  const HierarchySpec h = testing::appendix_hierarchy();
  int mismatches = 0, pairs = 0;
  for (const auto& a : testing::appendix_rows()) {
    for (const auto& b : testing::appendix_rows()) {
      int hamming = 0;
      for (std::size_t g = 0; g < a.size(); ++g) hamming += a[g] != b[g] ? 1 : 0;
      mismatches += class_similarity(h, a[0], b[0]) != 4 - hamming ? 1 : 0;
      ++pairs;
    }
  }
  return {mismatches == 0, std::to_string(pairs) + " ordered pairs from the label table, " +
                               std::to_string(mismatches) + " mismatches"};
}

Outcome spearman_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = coarse(rng);
      // Half the trials tie y as well; the rest are continuous.
      y[i] = trial % 2 == 0 ? coarse(rng) + 0.5 * x[i] : normal(rng) + 0.1 * x[i];
    }
    worst = std::max(worst, std::abs(spearman_rho(x, y) - testing::brute_spearman(x, y)));
  }
  return {worst <= 1e-12, "100 length-50 inputs with ties, max |diff| = " + sci(worst)};
}

Outcome sweep_geometry() {
  const std::size_t a = simplex_grid(0.05).size(), b = simplex_grid(0.5).size();
  return {a == 231 && b == 6, "step 0.05 -> " + std::to_string(a) + " points, step 0.5 -> " + std::to_string(b)};
}

Outcome nc4_equivalence() {
  std::mt19937_64 rng(31);
  const PartitionSpec p = partition_channels(20);
  const Index classes = 6, per_class = 10;
  // Unit-norm class means per part; collapsed samples sit exactly on them.
  Matrix means(classes, p.d);
  for (Part part : kAllParts) {
    Matrix block = random_matrix(classes, p.size(part), rng);
    block.rowwise().normalize();
    means.middleCols(p.offset(part), p.size(part)) = block;
  }
  Matrix x(classes * per_class, p.d);
  std::vector<Index> labels;
  for (Index i = 0; i < x.rows(); ++i) {
    labels.push_back(i % classes);
    x.row(i) = means.row(i % classes);
  }
  const PooledParts parts{x.leftCols(p.d_c), x.middleCols(p.d_c, p.d_p), x.rightCols(p.d_n)};
  const StructuredClassifier cls{3.0 * means, Matrix::Zero(1, classes), p};
  SubCentroidBank bank({classes}, p, 0.9);
  for (Index c = 0; c < classes; ++c) {
    bank.set(0, c,
             PartCentroids{means.row(c).head(p.d_c).transpose(), means.row(c).segment(p.d_c, p.d_p).transpose(),
                           means.row(c).tail(p.d_n).transpose()});
  }
  const InferenceWeights lam = normalize_inference_weights({1, 1, 1});
  const auto linear = predict_rows(structured_logits(parts, cls, lam));
  const auto nearest = subcentroid_predict_rows(parts, bank, 0, lam);
  Index agree = 0;
  for (std::size_t i = 0; i < linear.size(); ++i) agree += linear[i] == nearest[i] ? 1 : 0;
  const NCReport nc = nc_diagnostics(x, labels, cls.weight);
  double nc3_dev = 0.0;
  for (double v : nc.nc3) nc3_dev = std::max(nc3_dev, std::abs(v - 1.0));
  const bool nc1_ok = nc.nc1.has_value() && std::abs(*nc.nc1) <= 1e-9;
  const double agreement = static_cast<double>(agree) / static_cast<double>(linear.size());
  return {agreement == 1.0 && nc1_ok && nc3_dev <= 1e-9,
          "agreement " + fixed(100.0 * agreement, 1) + "%, nc1 " + (nc.nc1 ? sci(*nc.nc1) : "undefined") +
              ", max |nc3 - 1| " + sci(nc3_dev)};
}

std::string lam_str(const InferenceWeights& w) {
  return "(" + fixed(w.common, 2) + "," + fixed(w.specific, 2) + "," + fixed(w.confounding, 2) + ")";
}

Outcome determinism_and_persistence() {
  const fs::path dir = work_dir() / "determinism";
  const std::string cfg = (fs::path(CFSG_SOURCE_DIR) / "configs" / "full.json").string();
  const std::string hier = (fs::path(CFSG_SOURCE_DIR) / "configs" / "benchmark_hierarchy.json").string();
  int code = run_cli("gen-data --hierarchy " + hier + " --out-dir " + (dir / "data").string() + " --seed 0");
  for (const char* run : {"a", "b"}) {
    code |= run_cli("train --config " + cfg + " --data " + (dir / "data").string() + " --out " +
                    (dir / run / "model.json").string());
  }
  if (code != 0) return {false, "CLI runs failed"};
  const bool same_history =
      read_file((dir / "a" / "history.csv").string()) == read_file((dir / "b" / "history.csv").string());

  const Checkpoint direct = load_checkpoint((dir / "a" / "model.json").string());
  save_checkpoint(direct, (dir / "resaved.json").string());
  const Checkpoint loaded = load_checkpoint((dir / "resaved.json").string());
  const Dataset target = dataset_from_json(read_json((dir / "data" / "target.json").string()));
  bool same_eval = true;
  for (const InferenceWeights& lam : {InferenceWeights{1, 1, 1}, kStructuredWeights, InferenceWeights{0.2, 0.7, 0.1}}) {
    const AccuracyReport a = evaluate(direct, target, lam), b = evaluate(loaded, target, lam);
    same_eval = same_eval && a.fine_acc == b.fine_acc && a.per_level_acc == b.per_level_acc &&
                a.fine_predictions == b.fine_predictions;
  }
  const auto pa = extract_pooled(direct.net, target.features), pb = extract_pooled(loaded.net, target.features);
  const Matrix la = structured_logits(pa[0], direct.net.classifiers[0], kStructuredWeights);
  const Matrix lb = structured_logits(pb[0], loaded.net.classifiers[0], kStructuredWeights);
  same_eval = same_eval && la == lb;
  const bool same_file = read_file((dir / "a" / "model.json").string()) == read_file((dir / "resaved.json").string());
  return {same_history && same_eval && same_file,
          std::string("history.csv ") + (same_history ? "byte-identical" : "DIFFERS") + ", reloaded evaluate " +
              (same_eval ? "bit-identical" : "DIFFERS") + ", re-saved checkpoint " +
              (same_file ? "byte-identical" : "DIFFERS")};
}

}  // namespace

int main() {
  std::vector<std::pair<int, Outcome>> results;
  auto report = [&](int id, const std::string& title, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << ": " << (o.passed ? "PASS" : "FAIL") << "  " << title << ": " << o.detail
              << std::endl;
    results.emplace_back(id, o);
  };

  report(1, "gradient fidelity", gradient_fidelity);
  report(2, "classifier decomposition", classifier_decomposition);
  report(3, "hierarchy metric", hierarchy_metric);
  report(4, "spearman oracle", spearman_oracle);
  report(5, "sweep geometry", sweep_geometry);
  report(6, "NC4 equivalence", nc4_equivalence);

  std::optional<BenchmarkSummary> bench;
  std::string bench_error;
  try {
    bench = run_benchmark(5);
  } catch (const std::exception& e) {
    bench_error = e.what();
  }
  auto need_bench = [&](const std::function<Outcome(const BenchmarkSummary&)>& fn) {
    return [&, fn]() -> Outcome {
      if (!bench) return {false, "benchmark failed: " + bench_error};
      return fn(*bench);
    };
  };

  report(7, "directional ablation", need_bench([](const BenchmarkSummary& b) {
           const auto& full = b.at(Variant::kFull);
           const auto& fs_only = b.at(Variant::kFsOnly);
           const auto& cs_only = b.at(Variant::kCsOnly);
           const bool ok = full.acc_best >= fs_only.acc_best && full.acc_best >= cs_only.acc_best && b.seconds < 900.0;
           return Outcome{ok, "5-seed target acc cs+fs " + fixed(full.acc_best) + " at " +
                                  lam_str(full.mean_sweep[full.best].lam) + ", fs-only " + fixed(fs_only.acc_best) +
                                  ", cs-only " + fixed(cs_only.acc_best) + " at " +
                                  lam_str(cs_only.mean_sweep[cs_only.best].lam) + "; at fixed " +
                                  lam_str(kStructuredWeights) + ": cs+fs " + fixed(full.acc_fixed) + ", cs-only " +
                                  fixed(cs_only.acc_fixed) + "; " + fixed(b.seconds, 1) + " s"};
         }));
  report(8, "directional explainability", need_bench([](const BenchmarkSummary& b) {
           const double full = b.at(Variant::kFull).rho_all, plain = b.at(Variant::kUnstructured).rho_all;
           return Outcome{full - plain >= 0.1, "5-seed rho_all cs+fs " + fixed(full) + " vs unstructured " +
                                                   fixed(plain) + " (gap " + fixed(full - plain) + ")"};
         }));
  report(9, "directional lambda optimum", need_bench([](const BenchmarkSummary& b) {
           const auto& full = b.at(Variant::kFull);
           const SweepRow& best = full.mean_sweep[full.best];
           const double gain = best.fine_acc - b.full_uniform_acc;
           return Outcome{best.lam.common > 1.0 / 3.0 && gain >= 0.01,
                          "best row " + lam_str(best.lam) + " acc " + fixed(best.fine_acc) + " vs uniform " +
                              fixed(b.full_uniform_acc) + " (gain " + fixed(100.0 * gain, 2) + " pp)"};
         }));
  report(10, "determinism and persistence", determinism_and_persistence);

  int failed = 0;
  for (const auto& [id, o] : results) failed += o.passed ? 0 : 1;
  std::cout << (failed == 0 ? "all 10 criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  fs::remove_all(work_dir());
  return failed == 0 ? 0 : 1;
}
