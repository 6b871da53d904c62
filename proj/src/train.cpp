#include "cfsg/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "cfsg/io.hpp"

namespace cfsg {

void Architecture::validate() const {
  if (input_dim < 1) throw ValidationError("architecture: input_dim must be >= 1");
  if (positions < 1) throw ValidationError("architecture: positions must be >= 1");
  for (Index w : hidden) {
    if (w < 1) throw ValidationError("architecture: hidden widths must be >= 1");
  }
  partition_channels(channels, ratio);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("config: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ValidationError("config: learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("config: weight_decay must be >= 0");
  if (!(mu >= 0.0 && mu <= 1.0)) throw ValidationError("config: mu must lie in [0, 1]");
  coeffs.validate();
  arch.validate();
}

const BackboneParams& Network::backbone_for(Index level) const {
  return (level > 0 && coarse_backbone) ? *coarse_backbone : fine_backbone;
}

Network init_network(const Architecture& arch, const HierarchySpec& h, bool learnable_lam, std::uint64_t seed) {
  arch.validate();
  if (h.levels() < 1) throw ValidationError("init_network: empty hierarchy");
  std::mt19937_64 rng(seed);
  Network net;
  net.arch = arch;
  net.partition = partition_channels(arch.channels, arch.ratio);
  net.hierarchy = h;
  net.fine_backbone = init_backbone(arch.input_dim, arch.hidden, arch.channels, arch.positions, rng);
  if (arch.dual_backbone && h.levels() > 1) {
    net.coarse_backbone = init_backbone(arch.input_dim, arch.hidden, arch.channels, arch.positions, rng);
  }
  for (Index g = 0; g < h.levels(); ++g) net.gtl.push_back(init_gtl(arch.channels, arch.channels, rng));
  for (Index g = 0; g < h.levels(); ++g) net.classifiers.push_back(init_classifier(h.class_count(g), net.partition, rng));
  net.learnable_lam = learnable_lam;
  net.lam_raw = Matrix::Zero(1, 3);
  return net;
}

namespace {

double softplus_value(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

InferenceWeights learned_weights(const Network& net) {
  return normalize_inference_weights(InferenceWeights{softplus_value(net.lam_raw(0, 0)),
                                                      softplus_value(net.lam_raw(0, 1)),
                                                      softplus_value(net.lam_raw(0, 2))});
}

namespace {

template <typename Net, typename Fn>
void visit_trainable(Net& net, Fn&& fn) {
  auto backbone = [&](auto& bb, const std::string& prefix) {
    for (std::size_t i = 0; i < bb.layers.size(); ++i) {
      fn(prefix + "." + std::to_string(i) + ".weight", bb.layers[i].weight);
      fn(prefix + "." + std::to_string(i) + ".bias", bb.layers[i].bias);
    }
  };
  backbone(net.fine_backbone, "fine_backbone");
  if (net.coarse_backbone) backbone(*net.coarse_backbone, "coarse_backbone");
  for (std::size_t g = 0; g < net.gtl.size(); ++g) {
    const std::string prefix = "gtl." + std::to_string(g);
    fn(prefix + ".weight", net.gtl[g].weight);
    fn(prefix + ".bias", net.gtl[g].bias);
    fn(prefix + ".gamma", net.gtl[g].gamma);
    fn(prefix + ".beta", net.gtl[g].beta);
  }
  for (std::size_t g = 0; g < net.classifiers.size(); ++g) {
    const std::string prefix = "classifier." + std::to_string(g);
    fn(prefix + ".weight", net.classifiers[g].weight);
    fn(prefix + ".bias", net.classifiers[g].bias);
  }
  if (net.learnable_lam) fn(std::string("lam_raw"), net.lam_raw);
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> trainable_parameters(Network& net) {
  std::vector<std::pair<std::string, Matrix*>> out;
  visit_trainable(net, [&](const std::string& name, Matrix& m) { out.emplace_back(name, &m); });
  return out;
}

std::vector<std::pair<std::string, Matrix*>> all_tensors(Network& net) {
  auto out = trainable_parameters(net);
  for (std::size_t g = 0; g < net.gtl.size(); ++g) {
    out.emplace_back("gtl." + std::to_string(g) + ".running_mean", &net.gtl[g].running_mean);
    out.emplace_back("gtl." + std::to_string(g) + ".running_var", &net.gtl[g].running_var);
  }
  return out;
}

NetworkVars bind_network(GradTape& tape, const Network& net, bool track) {
  NetworkVars vars;
  auto make = [&](const Matrix& m) {
    Var v = track ? tape.parameter(m) : tape.constant(m);
    vars.trainable.push_back(v);
    return v;
  };
  // Same traversal order as visit_trainable.
  for (const auto& l : net.fine_backbone.layers) {
    Var w = make(l.weight);
    vars.fine_backbone.push_back({w, make(l.bias)});
  }
  if (net.coarse_backbone) {
    for (const auto& l : net.coarse_backbone->layers) {
      Var w = make(l.weight);
      vars.coarse_backbone.push_back({w, make(l.bias)});
    }
  }
  for (const auto& g : net.gtl) {
    GTLVars gv;
    gv.weight = make(g.weight);
    gv.bias = make(g.bias);
    gv.gamma = make(g.gamma);
    gv.beta = make(g.beta);
    vars.gtl.push_back(gv);
  }
  for (const auto& c : net.classifiers) {
    Var w = make(c.weight);
    vars.classifiers.push_back({w, make(c.bias)});
  }
  if (net.learnable_lam) {
    vars.lam_raw = make(net.lam_raw);
  } else {
    vars.lam_raw = tape.constant(net.lam_raw);
  }
  return vars;
}

ForwardPass forward(GradTape& tape, const Network& net, const NetworkVars& vars, const Matrix& x, Mode mode) {
  if (x.cols() != net.arch.input_dim) throw DimensionError("forward: input width != architecture input_dim");
  const Index positions = net.arch.positions;
  Var input = tape.constant(x);
  Var fine_raw = forward_backbone(vars.fine_backbone, input, positions);
  Var coarse_raw = net.coarse_backbone ? forward_backbone(vars.coarse_backbone, input, positions) : fine_raw;

  ForwardPass out;
  out.lam = net.learnable_lam ? softplus(vars.lam_raw) : tape.constant(Matrix::Ones(1, 3));
  for (Index g = 0; g < net.hierarchy.levels(); ++g) {
    const auto gi = static_cast<std::size_t>(g);
    GTLForward gf = gtl_forward(net.gtl[gi], vars.gtl[gi], g == 0 ? fine_raw : coarse_raw, mode);
    StructuredVars parts = disentangle(gf.output, net.partition, positions);
    PooledVars pooled{spatial_pool(parts.common, positions), spatial_pool(parts.specific, positions),
                      spatial_pool(parts.confounding, positions)};
    Var logits = structured_logits(pooled, vars.classifiers[gi], net.partition, out.lam);
    out.parts.push_back(parts);
    out.pooled.push_back(pooled);
    out.logits.push_back(logits);
    out.probs.push_back(softmax_rows(logits));
    if (mode == Mode::kTrain) out.stats.push_back(gf.stats);
  }
  return out;
}

std::vector<PooledParts> extract_pooled(const Network& net, const Matrix& x) {
  GradTape tape;
  NetworkVars vars = bind_network(tape, net, false);
  ForwardPass fp = forward(tape, net, vars, x, Mode::kEval);
  std::vector<PooledParts> out;
  for (const auto& p : fp.pooled) out.push_back(PooledParts{p.common.value(), p.specific.value(), p.confounding.value()});
  return out;
}

namespace {

struct EpochSums {
  double coarse_ce = 0, alignment = 0, fine_ce = 0, disentangle = 0, s_cs = 0, s_cd = 0, s_p = 0, total = 0;
  Index correct = 0;
  Index seen = 0;

  void add(const LossBreakdown& t, Index batch) {
    const auto w = static_cast<double>(batch);
    coarse_ce += w * t.coarse_ce.scalar();
    alignment += w * t.alignment.scalar();
    fine_ce += w * t.fine_ce.scalar();
    disentangle += w * t.disentangle.scalar();
    s_cs += w * t.s_cs.scalar();
    s_cd += w * t.s_cd.scalar();
    s_p += w * t.s_p.scalar();
    total += w * t.total.scalar();
    seen += batch;
  }

  HistoryRow row(int epoch) const {
    const auto n = static_cast<double>(seen);
    return HistoryRow{epoch,         coarse_ce / n, alignment / n, fine_ce / n, disentangle / n,
                      s_cs / n,      s_cd / n,      s_p / n,       total / n,   static_cast<double>(correct) / n};
  }
};

bool network_finite(Network& net) {
  for (auto& [name, m] : all_tensors(net)) {
    if (!m->allFinite()) return false;
  }
  return true;
}

}  // namespace

Checkpoint untrained_checkpoint(const TrainConfig& cfg, const HierarchySpec& h) {
  cfg.validate();
  Checkpoint ckpt;
  ckpt.net = init_network(cfg.arch, h, cfg.learnable_lam, cfg.seed + kInitSeedOffset);
  ckpt.config = cfg;
  ckpt.seed = cfg.seed;
  if (cfg.subcentroid_bank) ckpt.bank = SubCentroidBank(h.class_counts(), ckpt.net.partition, cfg.mu);
  return ckpt;
}

TrainResult train(const TrainConfig& cfg, const Dataset& source) {
  cfg.validate();
  source.validate();
  if (source.features.cols() != cfg.arch.input_dim) {
    throw ValidationError("train: dataset feature width " + std::to_string(source.features.cols()) +
                          " != architecture input_dim " + std::to_string(cfg.arch.input_dim));
  }
  if (source.size() == 0) throw ValidationError("train: empty dataset");
  const HierarchySpec& h = source.hierarchy;

  TrainResult result;
  result.checkpoint = untrained_checkpoint(cfg, h);
  Checkpoint& ckpt = result.checkpoint;
  Network& net = ckpt.net;

  auto params = trainable_parameters(net);
  std::vector<Matrix> velocity;
  for (const auto& [name, m] : params) velocity.push_back(Matrix::Zero(m->rows(), m->cols()));

  std::mt19937_64 shuffle_rng(cfg.seed + kShuffleSeedOffset);
  std::vector<Index> order(static_cast<std::size_t>(source.size()));
  std::iota(order.begin(), order.end(), Index{0});

  for (int epoch = 1; epoch <= cfg.epochs && !result.diverged; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochSums sums;
    for (Index start = 0; start < source.size(); start += cfg.batch_size) {
      const Index batch = std::min(cfg.batch_size, source.size() - start);
      Matrix xb(batch, source.features.cols());
      LabelMatrix lb(batch, h.levels());
      for (Index i = 0; i < batch; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = source.features.row(src);
        lb.row(i) = source.labels.row(src);
      }

      GradTape tape;
      NetworkVars vars = bind_network(tape, net, true);
      ForwardPass fp;
      LossBreakdown terms;
      try {
        fp = forward(tape, net, vars, xb, Mode::kTrain);
        LossInputs in{fp.parts, fp.probs, &lb, &h};
        terms = compute_losses(in, cfg.coeffs, cfg.toggles);
      } catch (const NumericError& e) {
        result.diverged = true;
        result.message = std::string("non-finite forward pass: ") + e.what();
        break;
      }
      if (!std::isfinite(terms.total.scalar())) {
        result.diverged = true;
        result.message = "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(ckpt.step);
        break;
      }
      tape.backward(terms.total);

      const Network backup = net;
      const auto backup_bank = ckpt.bank;
      for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& theta = *params[i].second;
        Matrix grad = tape.grad(vars.trainable[i]);
        if (cfg.weight_decay > 0.0) grad += cfg.weight_decay * theta;
        velocity[i] = cfg.momentum * velocity[i] + grad;
        theta -= cfg.learning_rate * velocity[i];
      }
      for (Index g = 0; g < h.levels(); ++g) {
        const auto gi = static_cast<std::size_t>(g);
        update_running_stats(net.gtl[gi], fp.stats[gi]);
        if (ckpt.bank) {
          PooledParts pooled{fp.pooled[gi].common.value(), fp.pooled[gi].specific.value(),
                             fp.pooled[gi].confounding.value()};
          ckpt.bank->momentum_update(g, batch_part_prototypes(pooled, lb.col(g)));
        }
      }
      if (!network_finite(net)) {
        net = backup;
        ckpt.bank = backup_bank;
        result.diverged = true;
        result.message = "non-finite parameters after step " + std::to_string(ckpt.step);
        break;
      }
      ++ckpt.step;

      sums.add(terms, batch);
      const auto preds = predict_rows(fp.logits.front().value());
      for (Index i = 0; i < batch; ++i) sums.correct += preds[static_cast<std::size_t>(i)] == lb(i, 0) ? 1 : 0;
    }
    if (result.diverged) {
      spdlog::warn("training diverged: {}", result.message);
      break;
    }
    result.history.push_back(sums.row(epoch));
    spdlog::debug("epoch {} total {:.6f} acc {:.4f}", epoch, result.history.back().total,
                  result.history.back().fine_train_acc);
  }
  return result;
}

namespace {

// Training runs at lambda = (1,1,1); normalized weights are applied at the same
// total so that uniform weights reproduce the training-time classifier, bias included.
InferenceWeights at_training_scale(const InferenceWeights& normalized) {
  return InferenceWeights{3.0 * normalized.common, 3.0 * normalized.specific, 3.0 * normalized.confounding};
}

void check_compatible(const Checkpoint& ckpt, const Dataset& data) {
  if (data.hierarchy.class_counts() != ckpt.net.hierarchy.class_counts()) {
    throw ValidationError("evaluate: dataset class counts differ from the checkpoint's hierarchy");
  }
  if (data.features.cols() != ckpt.net.arch.input_dim) {
    throw ValidationError("evaluate: dataset feature width differs from the checkpoint's input_dim");
  }
}

double accuracy(const std::vector<Index>& preds, const LabelMatrix& labels, Index level) {
  if (preds.empty()) return 0.0;
  Index correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels(static_cast<Index>(i), level) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<Index> level_predictions(const Checkpoint& ckpt, const PooledParts& pooled, Index level,
                                     const InferenceWeights& normalized, bool use_subcentroid) {
  if (use_subcentroid) {
    if (!ckpt.bank) throw StateError("evaluate: checkpoint has no sub-centroid bank");
    return subcentroid_predict_rows(pooled, *ckpt.bank, level, normalized);
  }
  const auto& cls = ckpt.net.classifiers[static_cast<std::size_t>(level)];
  return predict_rows(structured_logits(pooled, cls, at_training_scale(normalized)));
}

}  // namespace

AccuracyReport evaluate(const Checkpoint& ckpt, const Dataset& data, const InferenceWeights& lam,
                        bool use_subcentroid) {
  check_compatible(ckpt, data);
  AccuracyReport report;
  // Without the concept-space structure the classifier is the plain affine one.
  report.lam_used = normalize_inference_weights(ckpt.config.toggles.enable_cs ? lam : InferenceWeights{1.0, 1.0, 1.0});
  report.subcentroid = use_subcentroid;
  const auto pooled = extract_pooled(ckpt.net, data.features);
  for (Index g = 0; g < ckpt.net.hierarchy.levels(); ++g) {
    auto preds = level_predictions(ckpt, pooled[static_cast<std::size_t>(g)], g, report.lam_used, use_subcentroid);
    report.per_level_acc.push_back(accuracy(preds, data.labels, g));
    if (g == 0) report.fine_predictions = std::move(preds);
  }
  report.fine_acc = report.per_level_acc.front();
  return report;
}

std::vector<InferenceWeights> simplex_grid(double step) {
  if (!(step > 0.0) || step > 1.0 || !std::isfinite(step)) throw ValidationError("sweep step must lie in (0, 1]");
  const double steps = 1.0 / step;
  const auto n = static_cast<long>(std::llround(steps));
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-9 * steps) {
    throw ValidationError("sweep step must divide 1 evenly");
  }
  std::vector<InferenceWeights> grid;
  const auto dn = static_cast<double>(n);
  for (long a = 0; a <= n; ++a) {
    for (long b = 0; b <= n - a; ++b) {
      const long c = n - a - b;
      grid.push_back(InferenceWeights{static_cast<double>(a) / dn, static_cast<double>(b) / dn,
                                      static_cast<double>(c) / dn});
    }
  }
  return grid;
}

SweepResult weight_sweep(const Checkpoint& ckpt, const Dataset& data, double step, unsigned threads) {
  const auto grid = simplex_grid(step);
  check_compatible(ckpt, data);
  const auto pooled = extract_pooled(ckpt.net, data.features);
  SweepResult result;
  result.rows.resize(grid.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto preds = level_predictions(ckpt, pooled.front(), 0, grid[i], false);
      result.rows[i] = SweepRow{grid[i], accuracy(preds, data.labels, 0)};
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(grid.size())));
  if (threads == 1) {
    run(0, grid.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (grid.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(grid.size(), begin + chunk);
      if (begin < end) pool.emplace_back(run, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    if (result.rows[i].fine_acc > result.rows[result.best].fine_acc) result.best = i;
  }
  return result;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream out;
  out << "epoch,coarse_ce,alignment,fine_ce,disentangle,s_cs,s_cd,s_p,total,fine_train_acc\n";
  for (const auto& r : rows) {
    out << r.epoch;
    for (double v : {r.coarse_ce, r.alignment, r.fine_ce, r.disentangle, r.s_cs, r.s_cd, r.s_p, r.total,
                     r.fine_train_acc}) {
      out << ',' << format_double(v);
    }
    out << '\n';
  }
  return out.str();
}

std::string sweep_csv(const SweepResult& sweep) {
  std::ostringstream out;
  out << "lam_c,lam_p,lam_n,fine_acc\n";
  for (const auto& r : sweep.rows) {
    out << format_double(r.lam.common) << ',' << format_double(r.lam.specific) << ','
        << format_double(r.lam.confounding) << ',' << format_double(r.fine_acc) << '\n';
  }
  return out.str();
}

}  // namespace cfsg
