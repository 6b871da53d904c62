// cfsg command-line front end.
//
// Exit codes: 0 success, 1 self-test failure, 2 usage or validation error,
// 3 numeric divergence.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cfsg/benchmark.hpp"
#include "cfsg/explain.hpp"
#include "cfsg/io.hpp"
#include "cfsg/selftest.hpp"
#include "cfsg/train.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace cfsg;
using cfsg::cli::RunManifest;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSelftest = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

unsigned thread_cap() {
  const char* env = std::getenv("CFSG_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  try {
    const long v = std::stol(env);
    if (v < 1) throw ValidationError("CFSG_THREADS must be a positive integer");
    return static_cast<unsigned>(v);
  } catch (const std::logic_error&) {
    throw ValidationError(std::string("CFSG_THREADS must be a positive integer, got '") + env + "'");
  }
}

std::string sibling(const std::string& path, const std::string& name) {
  const fs::path p(path);
  return (p.has_parent_path() ? p.parent_path() / name : fs::path(name)).string();
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ValidationError("expected a comma-separated list of numbers, got '" + s + "'");
    }
  }
  return out;
}

struct GenDataArgs {
  std::string hierarchy;
  std::string out_dir;
  std::uint64_t seed = 0;
  double noise = benchmark_data_config(0).noise_std;
  double shift = benchmark_data_config(0).shift_offset;
  double shift_scale = benchmark_data_config(0).shift_scale;
  Index per_class = benchmark_data_config(0).samples_per_class;
  Index dim = 20;
  std::string level_scales;
  double specific_scale = benchmark_data_config(0).specific_scale;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("gen-data", argv);
  const HierarchySpec h = hierarchy_from_json(read_json(a.hierarchy));
  SyntheticDomainConfig cfg = benchmark_data_config(a.seed);
  cfg.noise_std = a.noise;
  cfg.shift_offset = a.shift;
  cfg.shift_scale = a.shift_scale;
  cfg.samples_per_class = a.per_class;
  cfg.specific_scale = a.specific_scale;
  cfg.confounding_scale = a.specific_scale;
  if (!a.level_scales.empty()) {
    cfg.level_scales = parse_list(a.level_scales);
  } else if (static_cast<Index>(cfg.level_scales.size()) != h.levels()) {
    cfg.level_scales.assign(static_cast<std::size_t>(h.levels()), 1.0);
  }
  const PartitionSpec p = partition_channels(a.dim);
  const DomainPair pair = generate_synthetic_domains(h, p, cfg);

  const std::string src = (fs::path(a.out_dir) / "source.json").string();
  const std::string tgt = (fs::path(a.out_dir) / "target.json").string();
  write_json(src, dataset_to_json(pair.source));
  write_json(tgt, dataset_to_json(pair.target));

  manifest.set_config({{"seed", a.seed},
                       {"noise_std", cfg.noise_std},
                       {"shift_offset", cfg.shift_offset},
                       {"shift_scale", cfg.shift_scale},
                       {"samples_per_class", cfg.samples_per_class},
                       {"level_scales", cfg.level_scales},
                       {"specific_scale", cfg.specific_scale},
                       {"dim", a.dim}});
  manifest.add_input(a.hierarchy);
  manifest.add_output(src);
  manifest.add_output(tgt);
  manifest.write((fs::path(a.out_dir) / "manifest.json").string());
  std::cout << "wrote " << src << " and " << tgt << " (" << pair.source.size() << " samples each)\n";
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string history;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("train", argv);
  const TrainConfig cfg = config_from_json(read_json(a.config));
  const std::string data_file = fs::is_directory(a.data) ? (fs::path(a.data) / "source.json").string() : a.data;
  const Dataset source = dataset_from_json(read_json(data_file));
  const TrainResult result = train(cfg, source);

  const std::string history = a.history.empty() ? sibling(a.out, "history.csv") : a.history;
  save_checkpoint(result.checkpoint, a.out);
  write_file_atomic(history, history_csv(result.history));
  manifest.set_config(config_to_json(cfg));
  manifest.add_input(a.config);
  manifest.add_input(data_file);
  manifest.add_output(a.out);
  manifest.add_output(history);
  manifest.write(a.out + ".manifest.json");

  if (result.diverged) {
    std::cerr << "training diverged: " << result.message << " (last finite state saved to " << a.out << ")\n";
    return kExitDiverged;
  }
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    std::cout << "epochs " << last.epoch << ", total " << format_double(last.total) << ", fine train acc "
              << format_double(last.fine_train_acc) << "\n";
  }
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data;
  double lam_c = 1.0;
  double lam_p = 1.0;
  double lam_n = 1.0;
  bool subcentroid = false;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("eval", argv);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Dataset data = dataset_from_json(read_json(a.data));
  const AccuracyReport report = evaluate(ckpt, data, InferenceWeights{a.lam_c, a.lam_p, a.lam_n}, a.subcentroid);
  const json j{{"fine_acc", report.fine_acc},
               {"per_level_acc", report.per_level_acc},
               {"lam_used", {report.lam_used.common, report.lam_used.specific, report.lam_used.confounding}},
               {"subcentroid", report.subcentroid}};
  const std::string out = a.out.empty() ? sibling(a.ckpt, "eval.json") : a.out;
  write_json(out, j);
  std::cout << j.dump() << "\n";
  manifest.set_config({{"lam", {a.lam_c, a.lam_p, a.lam_n}}, {"subcentroid", a.subcentroid}});
  manifest.add_input(a.ckpt);
  manifest.add_input(a.data);
  manifest.add_output(out);
  manifest.write(out + ".manifest.json");
  return kExitOk;
}

struct SweepArgs {
  std::string ckpt;
  std::string data;
  double step = 0.05;
  std::string out;
};

int cmd_sweep(const SweepArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("sweep", argv);
  const unsigned threads = thread_cap();
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const Dataset data = dataset_from_json(read_json(a.data));
  const SweepResult sweep = weight_sweep(ckpt, data, a.step, threads);
  const std::string out = a.out.empty() ? sibling(a.ckpt, "sweep.csv") : a.out;
  write_file_atomic(out, sweep_csv(sweep));
  const auto& best = sweep.rows[sweep.best];
  std::cout << "best lam_c=" << format_double(best.lam.common) << " lam_p=" << format_double(best.lam.specific)
            << " lam_n=" << format_double(best.lam.confounding) << " fine_acc=" << format_double(best.fine_acc)
            << " (" << sweep.rows.size() << " rows)\n";
  manifest.set_config({{"step", a.step}});
  manifest.set_threads(threads);
  manifest.add_input(a.ckpt);
  manifest.add_input(a.data);
  manifest.add_output(out);
  manifest.write(out + ".manifest.json");
  return kExitOk;
}

struct ExplainArgs {
  std::string ckpt;
  std::string hierarchy;
  std::string data;
  std::string out_dir;
};

int cmd_explain(const ExplainArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("explain", argv);
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const HierarchySpec h = hierarchy_from_json(read_json(a.hierarchy));
  if (h.class_counts() != ckpt.net.hierarchy.class_counts()) {
    throw ValidationError("explain: hierarchy class counts differ from the checkpoint's");
  }
  const Matrix& weight = ckpt.net.classifiers.front().weight;
  const SimilarityReport sim = hierarchy_alignment(weight, ckpt.net.partition, h);

  std::optional<NCReport> nc;
  if (!a.data.empty()) {
    const Dataset data = dataset_from_json(read_json(a.data));
    const PooledParts pooled = extract_pooled(ckpt.net, data.features).front();
    Matrix features(pooled.rows(), ckpt.net.partition.d);
    features << pooled.common, pooled.specific, pooled.confounding;
    std::vector<Index> labels(data.labels.col(0).begin(), data.labels.col(0).end());
    nc = nc_diagnostics(features, labels, weight);
    manifest.add_input(a.data);
  }
  json report = report_to_json(sim, nc ? &*nc : nullptr);
  if (!nc) report["nc"] = nullptr;

  const std::string dir = a.out_dir.empty() ? fs::path(a.ckpt).parent_path().string() : a.out_dir;
  const std::string report_path = (fs::path(dir) / "report.json").string();
  const std::string pairs_path = (fs::path(dir) / "pairs.csv").string();
  write_json(report_path, report);
  write_file_atomic(pairs_path, pairs_csv(sim));
  std::cout << "rho_all=" << format_double(sim.rho_for(Block::kAll))
            << " rho_common=" << format_double(sim.rho_for(Block::kCommon))
            << " rho_specific=" << format_double(sim.rho_for(Block::kSpecific))
            << " rho_confounding=" << format_double(sim.rho_for(Block::kConfounding)) << "\n";
  manifest.add_input(a.ckpt);
  manifest.add_input(a.hierarchy);
  manifest.add_output(report_path);
  manifest.add_output(pairs_path);
  manifest.write((fs::path(dir) / "explain.manifest.json").string());
  return kExitOk;
}

struct SelftestArgs {
  std::string inject_fault;
  int draws = 100;
  int network_draws = 10;
  std::string out_dir = ".";
};

int cmd_selftest(const SelftestArgs& a, const std::vector<std::string>& argv) {
  RunManifest manifest("selftest", argv);
  SelftestOptions opts;
  opts.grad.draws = a.draws;
  opts.grad.network_draws = a.network_draws;
  opts.inject_fault = a.inject_fault;
  const auto results = run_selftest(opts);
  std::vector<std::string> failing;
  json summary = json::array();
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    if (!r.passed) failing.push_back(r.name);
    json entry{{"check", r.name}, {"passed", r.passed}, {"detail", r.detail}};
    if (r.grad) {
      entry["draws"] = r.grad->draws;
      entry["redrawn"] = r.grad->skipped;
      entry["max_rel_error"] = r.grad->max_rel_error;
    }
    summary.push_back(std::move(entry));
  }
  const std::string out = (fs::path(a.out_dir) / "selftest.json").string();
  write_json(out, summary);
  manifest.set_config({{"draws", a.draws}, {"network_draws", a.network_draws}, {"inject_fault", a.inject_fault}});
  manifest.add_output(out);
  manifest.write((fs::path(a.out_dir) / "selftest.manifest.json").string());
  if (!failing.empty()) {
    std::cout << "failing checks:";
    for (const auto& f : failing) std::cout << ' ' << f;
    std::cout << "\n";
    return kExitSelftest;
  }
  std::cout << "all " << results.size() << " checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-feature structuralized fine-grained classification toolkit"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  const std::vector<std::string> args(argv, argv + argc);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic source/target datasets");
  gen_cmd->add_option("--hierarchy", gen.hierarchy, "Hierarchy JSON file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--shift", gen.shift, "Target shift offset")->capture_default_str();
  gen_cmd->add_option("--shift-scale", gen.shift_scale, "Target shift scale")->capture_default_str();
  gen_cmd->add_option("--per-class", gen.per_class, "Samples per fine class")->capture_default_str();
  gen_cmd->add_option("--dim", gen.dim, "Feature dimension")->capture_default_str();
  gen_cmd->add_option("--level-scales", gen.level_scales, "Comma-separated common prototype scale per level");
  gen_cmd->add_option("--specific-scale", gen.specific_scale)->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "Training config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Dataset directory (source.json) or file")->required()->check(
      CLI::ExistingPath);
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--history", tr.history, "History CSV (default: history.csv next to the checkpoint)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--lam-c", ev.lam_c)->capture_default_str();
  eval_cmd->add_option("--lam-p", ev.lam_p)->capture_default_str();
  eval_cmd->add_option("--lam-n", ev.lam_n)->capture_default_str();
  eval_cmd->add_flag("--subcentroid", ev.subcentroid, "Nearest sub-centroid inference");
  eval_cmd->add_option("--out", ev.out, "Report JSON (default: eval.json next to the checkpoint)");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep inference weights over the simplex");
  sweep_cmd->add_option("--ckpt", sw.ckpt)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", sw.data)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--step", sw.step)->capture_default_str();
  sweep_cmd->add_option("--out", sw.out, "CSV path (default: sweep.csv next to the checkpoint)");

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Concept similarity and neural-collapse report");
  explain_cmd->add_option("--ckpt", ex.ckpt)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--hierarchy", ex.hierarchy)->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("--data", ex.data, "Dataset for neural-collapse statistics")->check(CLI::ExistingFile);
  explain_cmd->add_option("--out-dir", ex.out_dir, "Output directory (default: checkpoint directory)");

  SelftestArgs st;
  auto* selftest_cmd = app.add_subcommand("selftest", "Run gradient checks and invariant oracles");
  selftest_cmd->add_option("--inject-fault", st.inject_fault, "Perturb one term's analytic gradient");
  selftest_cmd->add_option("--draws", st.draws)->capture_default_str();
  selftest_cmd->add_option("--network-draws", st.network_draws)->capture_default_str();
  selftest_cmd->add_option("--out-dir", st.out_dir)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    spdlog::set_level(spdlog::level::from_str(log_level));
    thread_cap();
    if (*gen_cmd) return cmd_gen_data(gen, args);
    if (*train_cmd) return cmd_train(tr, args);
    if (*eval_cmd) return cmd_eval(ev, args);
    if (*sweep_cmd) return cmd_sweep(sw, args);
    if (*explain_cmd) return cmd_explain(ex, args);
    if (*selftest_cmd) return cmd_selftest(st, args);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
