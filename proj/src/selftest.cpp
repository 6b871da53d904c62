#include "cfsg/selftest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cfsg/explain.hpp"
#include "cfsg/io.hpp"
#include "cfsg/losses.hpp"
#include "cfsg/train.hpp"

namespace cfsg {

namespace {

constexpr std::array<const char*, 8> kTermNames = {"coarse_ce", "alignment", "disentangle", "s_cs",
                                                   "s_cd",      "s_p",       "fine_ce",     "total"};

Var term_of(const LossBreakdown& t, std::size_t i) {
  switch (i) {
    case 0: return t.coarse_ce;
    case 1: return t.alignment;
    case 2: return t.disentangle;
    case 3: return t.s_cs;
    case 4: return t.s_cd;
    case 5: return t.s_p;
    case 6: return t.fine_ce;
    default: return t.total;
  }
}

// Small fixture: 3 levels (6, 3, 2 classes), 8 samples, 2 positions, d = 10.
struct TermFixture {
  HierarchySpec h{{6, 3, 2}, {{0, 0, 1, 1, 2, 2}, {0, 0, 1}}};
  PartitionSpec p = partition_channels(10);
  Index batch = 8;
  Index positions = 2;
  LabelMatrix labels;
  std::vector<std::pair<Index, Index>> shapes;  // leaf shapes, per level: common, specific, confounding, logits

  TermFixture() {
    const std::vector<Index> fine = {0, 1, 2, 3, 4, 5, 0, 3};
    labels.resize(batch, h.levels());
    for (Index b = 0; b < batch; ++b) {
      for (Index g = 0; g < h.levels(); ++g) labels(b, g) = h.ancestor(fine[static_cast<std::size_t>(b)], g);
    }
    for (Index g = 0; g < h.levels(); ++g) {
      shapes.emplace_back(batch * positions, p.d_c);
      shapes.emplace_back(batch * positions, p.d_p);
      shapes.emplace_back(batch * positions, p.d_n);
      shapes.emplace_back(batch, h.class_count(g));
    }
  }

  Index size() const {
    Index n = 0;
    for (auto [r, c] : shapes) n += r * c;
    return n;
  }

  std::vector<Matrix> unpack(const Vector& theta) const {
    std::vector<Matrix> out;
    Index off = 0;
    for (auto [r, c] : shapes) {
      out.push_back(theta.segment(off, r * c).reshaped(r, c));
      off += r * c;
    }
    return out;
  }

  LossBreakdown losses(GradTape& tape, const std::vector<Matrix>& leaves, bool track, std::vector<Var>* vars) const {
    std::vector<StructuredVars> parts;
    std::vector<Var> probs;
    for (Index g = 0; g < h.levels(); ++g) {
      std::array<Var, 4> v;
      for (std::size_t i = 0; i < 4; ++i) {
        const Matrix& m = leaves[static_cast<std::size_t>(g) * 4 + i];
        v[i] = track ? tape.parameter(m) : tape.constant(m);
        if (vars != nullptr) vars->push_back(v[i]);
      }
      parts.push_back(StructuredVars{v[0], v[1], v[2], positions});
      probs.push_back(softmax_rows(v[3]));
    }
    LossInputs in{parts, probs, &labels, &h};
    return compute_losses(in, LossCoefficients{}, LossToggles{});
  }
};

Vector flatten(const std::vector<Matrix>& grads) {
  Index n = 0;
  for (const auto& g : grads) n += g.size();
  Vector out(n);
  Index off = 0;
  for (const auto& g : grads) {
    out.segment(off, g.size()) = g.reshaped();
    off += g.size();
  }
  return out;
}

std::vector<GradCheckResult> term_checks(const GradCheckOptions& opts) {
  const TermFixture fx;
  std::vector<GradCheckResult> results;
  for (const char* name : kTermNames) results.push_back(GradCheckResult{name, 0, 0, 0.0, true});
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int draw = 0; draw < opts.draws; ++draw) {
    Vector theta(fx.size());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = normal(rng);
    const auto leaves = fx.unpack(theta);

    GradTape tape;
    std::vector<Var> vars;
    const LossBreakdown terms = fx.losses(tape, leaves, true, &vars);
    std::vector<Vector> analytic;
    for (std::size_t t = 0; t < kTermNames.size(); ++t) {
      tape.backward(term_of(terms, t));
      std::vector<Matrix> grads;
      for (const Var& v : vars) grads.push_back(tape.grad(v));
      analytic.push_back(flatten(grads));
    }

    std::vector<Vector> numeric(kTermNames.size(), Vector::Zero(theta.size()));
    auto values = [&](const Vector& th) {
      GradTape t;
      const LossBreakdown b = fx.losses(t, fx.unpack(th), false, nullptr);
      std::array<double, kTermNames.size()> out{};
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = term_of(b, i).scalar();
      return out;
    };
    Vector probe = theta;
    for (Index i = 0; i < theta.size(); ++i) {
      probe(i) = theta(i) + opts.h;
      const auto up = values(probe);
      probe(i) = theta(i) - opts.h;
      const auto down = values(probe);
      probe(i) = theta(i);
      for (std::size_t t = 0; t < kTermNames.size(); ++t) numeric[t](i) = (up[t] - down[t]) / (2.0 * opts.h);
    }
    for (std::size_t t = 0; t < kTermNames.size(); ++t) {
      if (opts.hook) opts.hook(kTermNames[t], analytic[t]);
      const double err = gradient_relative_error(analytic[t], numeric[t]);
      auto& r = results[t];
      ++r.draws;
      r.max_rel_error = std::max(r.max_rel_error, err);
      if (!(err < opts.tolerance)) r.passed = false;
    }
  }
  return results;
}

// Smallest |input| over every rectifier in a train-mode forward pass. Central
// differences are meaningless when a perturbation can cross the kink.
double min_rectifier_margin(const Network& net, const Matrix& x) {
  double margin = std::numeric_limits<double>::infinity();
  auto backbone = [&](const BackboneParams& bb) {
    Matrix h = x;
    for (const auto& layer : bb.layers) {
      const Matrix z = (h * layer.weight.transpose()).rowwise() + layer.bias.row(0);
      margin = std::min(margin, z.cwiseAbs().minCoeff());
      h = z.cwiseMax(0.0);
    }
    return h.reshaped<Eigen::RowMajor>(h.rows() * bb.positions, h.cols() / bb.positions).eval();
  };
  for (Index g = 0; g < net.hierarchy.levels(); ++g) {
    Matrix normalized;
    gtl_forward(net.gtl[static_cast<std::size_t>(g)], backbone(net.backbone_for(g)), Mode::kTrain, &normalized);
    margin = std::min(margin, normalized.cwiseAbs().minCoeff());
  }
  return margin;
}

GradCheckResult network_check(const GradCheckOptions& opts) {
  const HierarchySpec h{{6, 3, 2}, {{0, 0, 1, 1, 2, 2}, {0, 0, 1}}};
  Architecture arch;
  arch.input_dim = 5;
  arch.hidden = {6};
  arch.channels = 10;
  arch.positions = 2;
  const Index batch = 8;
  const std::vector<Index> fine = {0, 1, 2, 3, 4, 5, 1, 4};
  LabelMatrix labels(batch, h.levels());
  for (Index b = 0; b < batch; ++b) {
    for (Index g = 0; g < h.levels(); ++g) labels(b, g) = h.ancestor(fine[static_cast<std::size_t>(b)], g);
  }

  GradCheckResult result{"network_total", 0, 0, 0.0, true};
  std::mt19937_64 rng(opts.seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  constexpr double kKinkMargin = 1e-4;
  for (int draw = 0; draw < opts.network_draws; ++draw) {
    Network net = init_network(arch, h, true, opts.seed + 100 + static_cast<std::uint64_t>(draw + result.skipped));
    for (auto& [name, m] : trainable_parameters(net)) {
      // Nonzero biases and affine terms so every parameter gets a generic gradient.
      for (Index i = 0; i < m->size(); ++i) m->data()[i] += 0.1 * normal(rng);
    }
    Matrix x(batch, arch.input_dim);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    if (min_rectifier_margin(net, x) < kKinkMargin) {
      ++result.skipped;
      --draw;
      continue;
    }

    auto total = [&](const Network& n, GradTape& tape, bool track, NetworkVars* out_vars) {
      NetworkVars vars = bind_network(tape, n, track);
      ForwardPass fp = forward(tape, n, vars, x, Mode::kTrain);
      LossInputs in{fp.parts, fp.probs, &labels, &h};
      Var t = compute_losses(in, LossCoefficients{}, LossToggles{}).total;
      if (out_vars != nullptr) *out_vars = vars;
      return t;
    };

    GradTape tape;
    NetworkVars vars;
    Var root = total(net, tape, true, &vars);
    tape.backward(root);
    std::vector<Matrix> grads;
    for (const Var& v : vars.trainable) grads.push_back(tape.grad(v));
    Vector analytic = flatten(grads);

    auto params = trainable_parameters(net);
    Vector numeric(analytic.size());
    Index k = 0;
    for (auto& [name, m] : params) {
      for (Index i = 0; i < m->size(); ++i, ++k) {
        const double saved = m->data()[i];
        m->data()[i] = saved + opts.h;
        GradTape up_tape;
        const double up = total(net, up_tape, false, nullptr).scalar();
        m->data()[i] = saved - opts.h;
        GradTape down_tape;
        const double down = total(net, down_tape, false, nullptr).scalar();
        m->data()[i] = saved;
        numeric(k) = (up - down) / (2.0 * opts.h);
      }
    }
    if (opts.hook) opts.hook(result.term, analytic);
    const double err = gradient_relative_error(analytic, numeric);
    ++result.draws;
    result.max_rel_error = std::max(result.max_rel_error, err);
    if (!(err < opts.tolerance)) result.passed = false;
  }
  return result;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

CheckResult check_decomposition(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const PartitionSpec p = partition_channels(20);
  StructuredClassifier cls = init_classifier(8, p, rng);
  for (Index i = 0; i < cls.bias.size(); ++i) cls.bias(0, i) = normal(rng);
  const Index n = 1000;
  PooledParts f{Matrix(n, p.d_c), Matrix(n, p.d_p), Matrix(n, p.d_n)};
  for (Matrix* m : {&f.common, &f.specific, &f.confounding}) {
    for (Index i = 0; i < m->size(); ++i) m->data()[i] = normal(rng);
  }
  const double diff =
      (structured_logits(f, cls, InferenceWeights{1.0, 1.0, 1.0}) - affine_logits(f, cls)).cwiseAbs().maxCoeff();
  return {"classifier_decomposition", diff <= 1e-12, "max |diff| = " + fmt(diff), std::nullopt};
}

double brute_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0.0, equal = 0.0;
      for (double w : v) {
        less += w < v[i] ? 1.0 : 0.0;
        equal += w == v[i] ? 1.0 : 0.0;
      }
      r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

CheckResult check_spearman(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> level(0, 9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = level(rng);
      y[i] = level(rng) + 0.5 * x[i];
    }
    worst = std::max(worst, std::abs(spearman_rho(x, y) - brute_spearman(x, y)));
  }
  return {"spearman_oracle", worst <= 1e-12, "max |diff| = " + fmt(worst), std::nullopt};
}

CheckResult check_simplex() {
  const std::size_t a = simplex_grid(0.05).size(), b = simplex_grid(0.5).size(), c = simplex_grid(1.0).size();
  return {"simplex_grid", a == 231 && b == 6 && c == 3,
          "counts " + std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(c), std::nullopt};
}

CheckResult check_collapsed_fixture(std::mt19937_64& rng) {
  const PartitionSpec p = partition_channels(10);
  const Index k = 4, per_class = 5;
  std::normal_distribution<double> normal(0.0, 1.0);
  // Equal-norm class means per part so linear scores peak at the own class.
  std::array<Matrix, 3> means;
  for (Part part : kAllParts) {
    Matrix m(k, p.size(part));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    m.rowwise().normalize();
    means[static_cast<std::size_t>(part)] = m;
  }
  Matrix full(k, p.d);
  full << means[0], means[1], means[2];

  const Index n = k * per_class;
  PooledParts f{Matrix(n, p.d_c), Matrix(n, p.d_p), Matrix(n, p.d_n)};
  Matrix features(n, p.d);
  std::vector<Index> labels;
  for (Index i = 0; i < n; ++i) {
    const Index c = i / per_class;
    labels.push_back(c);
    features.row(i) = full.row(c);
  }
  f.common = features.middleCols(p.offset(Part::kCommon), p.d_c);
  f.specific = features.middleCols(p.offset(Part::kSpecific), p.d_p);
  f.confounding = features.middleCols(p.offset(Part::kConfounding), p.d_n);

  StructuredClassifier cls{2.0 * full, Matrix::Zero(1, k), p};
  SubCentroidBank bank({k}, p, 0.9);
  for (Index c = 0; c < k; ++c) {
    bank.set(0, c, PartCentroids{means[0].row(c).transpose(), means[1].row(c).transpose(),
                                 means[2].row(c).transpose()});
  }
  const InferenceWeights lam = normalize_inference_weights({1.0, 1.0, 1.0});
  const auto linear = predict_rows(structured_logits(f, cls, lam));
  const auto nearest = subcentroid_predict_rows(f, bank, 0, lam);
  const NCReport nc = nc_diagnostics(features, labels, cls.weight);
  bool nc3_ok = true;
  for (double v : nc.nc3) nc3_ok = nc3_ok && std::abs(v - 1.0) <= 1e-9;
  const bool nc1_ok = nc.nc1 && std::abs(*nc.nc1) <= 1e-9;
  return {"nc4_collapsed_fixture", linear == nearest && nc1_ok && nc3_ok,
          std::string("agreement ") + (linear == nearest ? "100%" : "< 100%") + ", nc1 " +
              (nc.nc1 ? fmt(*nc.nc1) : "undefined"),
          std::nullopt};
}

CheckResult check_checkpoint_roundtrip() {
  TrainConfig cfg;
  const HierarchySpec h{{6, 3, 2}, {{0, 0, 1, 1, 2, 2}, {0, 0, 1}}};
  const Checkpoint ckpt = untrained_checkpoint(cfg, h);
  const std::string first = checkpoint_to_json(ckpt).dump();
  const std::string second = checkpoint_to_json(checkpoint_from_json(json::parse(first))).dump();
  return {"checkpoint_roundtrip", first == second, first == second ? "identical" : "documents differ",
          std::nullopt};
}

CheckResult check_softmax_shift(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Vector z(7);
    for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    const Vector a = softmax(z);
    const Vector b = softmax((z.array() + normal(rng)).matrix());
    worst = std::max({worst, (a - b).cwiseAbs().maxCoeff(), std::abs(a.sum() - 1.0)});
  }
  return {"softmax_shift_invariance", worst <= 1e-12, "max deviation " + fmt(worst), std::nullopt};
}

}  // namespace

const std::vector<std::string>& gradient_check_terms() {
  static const std::vector<std::string> terms = [] {
    std::vector<std::string> t(kTermNames.begin(), kTermNames.end());
    t.emplace_back("network_total");
    return t;
  }();
  return terms;
}

double gradient_relative_error(const Vector& analytic, const Vector& numeric) {
  constexpr double kFloor = 1e-6;
  return (analytic - numeric).norm() / std::max({analytic.norm(), numeric.norm(), kFloor});
}

std::vector<GradCheckResult> gradient_checks(const GradCheckOptions& opts) {
  auto results = term_checks(opts);
  if (opts.network_draws > 0) results.push_back(network_check(opts));
  return results;
}

std::vector<CheckResult> run_selftest(const SelftestOptions& opts) {
  GradCheckOptions grad = opts.grad;
  if (!opts.inject_fault.empty()) {
    const auto& known = gradient_check_terms();
    if (std::find(known.begin(), known.end(), opts.inject_fault) == known.end()) {
      throw ValidationError("unknown gradient term '" + opts.inject_fault + "'");
    }
    const std::string target = opts.inject_fault;
    GradientHook inner = grad.hook;
    grad.hook = [target, inner](const std::string& term, Vector& analytic) {
      if (inner) inner(term, analytic);
      if (term == target) analytic *= 1.01;
      if (term == target && analytic.norm() == 0.0) analytic.array() += 1e-3;
    };
  }
  std::vector<CheckResult> out;
  for (const auto& r : gradient_checks(grad)) {
    out.push_back({"grad:" + r.term, r.passed,
                   "max rel err " + fmt(r.max_rel_error) + " over " + std::to_string(r.draws) + " draws" +
                       (r.skipped > 0 ? " (" + std::to_string(r.skipped) + " redrawn near a kink)" : ""),
                   r});
  }
  std::mt19937_64 rng(opts.grad.seed + 7);
  out.push_back(check_decomposition(rng));
  out.push_back(check_spearman(rng));
  out.push_back(check_simplex());
  out.push_back(check_collapsed_fixture(rng));
  out.push_back(check_softmax_shift(rng));
  out.push_back(check_checkpoint_roundtrip());
  return out;
}

}  // namespace cfsg
