#include "cfsg/hierarchy.hpp"

#include <random>
#include <string>

#include "cfsg/model.hpp"

namespace cfsg {

HierarchySpec::HierarchySpec(std::vector<Index> class_counts, std::vector<std::vector<Index>> parent_maps)
    : class_counts_(std::move(class_counts)), parent_maps_(std::move(parent_maps)) {
  if (class_counts_.empty()) throw ValidationError("hierarchy: at least one level required");
  for (std::size_t g = 0; g < class_counts_.size(); ++g) {
    if (class_counts_[g] < 1) {
      throw ValidationError("hierarchy: level " + std::to_string(g) + " has no classes");
    }
    if (g > 0 && class_counts_[g] > class_counts_[g - 1]) {
      throw ValidationError("hierarchy: class counts must be non-increasing from fine to coarse (level " +
                            std::to_string(g) + ")");
    }
  }
  if (parent_maps_.size() + 1 != class_counts_.size()) {
    throw ValidationError("hierarchy: expected " + std::to_string(class_counts_.size() - 1) +
                          " parent maps, got " + std::to_string(parent_maps_.size()));
  }
  for (std::size_t g = 0; g < parent_maps_.size(); ++g) {
    const auto& map = parent_maps_[g];
    const Index n = class_counts_[g];
    if (static_cast<Index>(map.size()) < n) {
      throw ValidationError("hierarchy: level " + std::to_string(g) + " class " + std::to_string(map.size()) +
                            " has no parent");
    }
    if (static_cast<Index>(map.size()) > n) {
      throw ValidationError("hierarchy: level " + std::to_string(g) + " map lists class " + std::to_string(n) +
                            " beyond the class count");
    }
    for (Index k = 0; k < n; ++k) {
      const Index q = map[static_cast<std::size_t>(k)];
      if (q < 0 || q >= class_counts_[g + 1]) {
        throw ValidationError("hierarchy: level " + std::to_string(g) + " class " + std::to_string(k) +
                              " has out-of-range parent " + std::to_string(q));
      }
    }
  }
  const Index levels = this->levels();
  ancestors_.resize(num_fine(), levels);
  for (Index k = 0; k < num_fine(); ++k) {
    Index cls = k;
    ancestors_(k, 0) = k;
    for (Index g = 1; g < levels; ++g) {
      cls = parent_maps_[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(cls)];
      ancestors_(k, g) = cls;
    }
  }
}

Index HierarchySpec::parent(Index level, Index cls) const {
  if (level < 0 || level + 1 >= levels()) throw ValidationError("hierarchy: level has no parent level");
  if (cls < 0 || cls >= class_count(level)) {
    throw ValidationError("hierarchy: class " + std::to_string(cls) + " out of range at level " +
                          std::to_string(level));
  }
  return parent_maps_[static_cast<std::size_t>(level)][static_cast<std::size_t>(cls)];
}

Index HierarchySpec::ancestor(Index fine, Index level) const {
  if (fine < 0 || fine >= num_fine()) {
    throw ValidationError("hierarchy: fine class " + std::to_string(fine) + " out of range");
  }
  if (level < 0 || level >= levels()) throw ValidationError("hierarchy: level out of range");
  return ancestors_(fine, level);
}

Index HierarchySpec::ancestor_from(Index from, Index cls, Index to) const {
  if (from > to) throw ValidationError("hierarchy: ancestor_from expects from <= to");
  for (Index g = from; g < to; ++g) cls = parent(g, cls);
  return cls;
}

Matrix HierarchySpec::lift_matrix(Index level) const {
  const Index kg = class_count(level);
  Matrix lift = Matrix::Zero(kg, num_fine());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(kg);
  for (Index k = 0; k < num_fine(); ++k) counts(ancestors_(k, level)) += 1.0;
  for (Index k = 0; k < num_fine(); ++k) {
    const Index q = ancestors_(k, level);
    lift(q, k) = 1.0 / counts(q);
  }
  return lift;
}

HierarchySpec build_hierarchy(std::vector<Index> class_counts, std::vector<std::vector<Index>> parent_maps) {
  return HierarchySpec(std::move(class_counts), std::move(parent_maps));
}

std::vector<Index> label_vector(const HierarchySpec& h, Index fine_class) {
  std::vector<Index> labels(static_cast<std::size_t>(h.levels()));
  for (Index g = 0; g < h.levels(); ++g) labels[static_cast<std::size_t>(g)] = h.ancestor(fine_class, g);
  return labels;
}

int class_similarity(const HierarchySpec& h, Index i, Index j) {
  int similarity = static_cast<int>(h.levels());
  for (Index g = 0; g < h.levels(); ++g) {
    if (h.ancestor(i, g) != h.ancestor(j, g)) --similarity;
  }
  return similarity;
}

Eigen::MatrixXi similarity_matrix(const HierarchySpec& h) {
  const Index k = h.num_fine();
  Eigen::MatrixXi s(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i; j < k; ++j) s(i, j) = s(j, i) = class_similarity(h, i, j);
  }
  return s;
}

std::string to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ValidationError("unknown domain tag '" + s + "'");
}

LabeledSample Dataset::sample(Index i) const {
  LabeledSample s;
  s.x = features.row(i).transpose();
  for (Index g = 0; g < labels.cols(); ++g) s.labels.push_back(labels(i, g));
  s.domain = domain;
  return s;
}

void Dataset::validate() const {
  if (labels.rows() != features.rows()) throw ValidationError("dataset: label/feature row mismatch");
  if (labels.cols() != hierarchy.levels()) throw ValidationError("dataset: label columns != hierarchy levels");
  if (!features.allFinite()) throw ValidationError("dataset: non-finite feature values");
  for (Index i = 0; i < labels.rows(); ++i) {
    const Index fine = labels(i, 0);
    if (fine < 0 || fine >= hierarchy.num_fine()) {
      throw ValidationError("dataset: sample " + std::to_string(i) + " has out-of-range fine label");
    }
    for (Index g = 1; g < labels.cols(); ++g) {
      if (labels(i, g) != hierarchy.ancestor(fine, g)) {
        throw ValidationError("dataset: sample " + std::to_string(i) + " label at level " + std::to_string(g) +
                              " is not the ancestor of its fine label");
      }
    }
  }
}

void SyntheticDomainConfig::validate() const {
  if (!(noise_std >= 0.0)) throw ValidationError("synthetic: noise std must be >= 0");
  if (samples_per_class < 1) throw ValidationError("synthetic: samples per class must be >= 1");
  for (double s : level_scales) {
    if (!std::isfinite(s)) throw ValidationError("synthetic: level scales must be finite");
  }
}

namespace {

// Sub-seed offsets; every random stream derives from cfg.seed.
constexpr std::uint64_t kPrototypeStream = 0;
constexpr std::uint64_t kSourceNoiseStream = 1;
constexpr std::uint64_t kTargetNoiseStream = 2;
constexpr std::uint64_t kShiftStream = 3;

void fill_normal(Eigen::Ref<Matrix> m, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = scale * dist(rng);
  }
}

}  // namespace

Matrix synthetic_class_means(const HierarchySpec& h, const PartitionSpec& p, const SyntheticDomainConfig& cfg) {
  cfg.validate();
  p.validate();
  if (!cfg.level_scales.empty() && static_cast<Index>(cfg.level_scales.size()) != h.levels()) {
    throw ValidationError("synthetic: level_scales must list one scale per level");
  }
  std::mt19937_64 rng(cfg.seed + kPrototypeStream);
  std::vector<Matrix> level_protos;
  for (Index g = 0; g < h.levels(); ++g) {
    const double scale = cfg.level_scales.empty() ? 1.0 : cfg.level_scales[static_cast<std::size_t>(g)];
    Matrix protos(h.class_count(g), p.d_c);
    fill_normal(protos, scale, rng);
    level_protos.push_back(std::move(protos));
  }
  Matrix specific(h.num_fine(), p.d_p);
  fill_normal(specific, cfg.specific_scale, rng);
  Matrix confounding(h.num_fine(), p.d_n);
  fill_normal(confounding, cfg.confounding_scale, rng);

  Matrix means = Matrix::Zero(h.num_fine(), p.d);
  for (Index k = 0; k < h.num_fine(); ++k) {
    for (Index g = 0; g < h.levels(); ++g) {
      means.row(k).segment(p.offset(Part::kCommon), p.d_c) +=
          level_protos[static_cast<std::size_t>(g)].row(h.ancestor(k, g));
    }
    means.row(k).segment(p.offset(Part::kSpecific), p.d_p) = specific.row(k);
    means.row(k).segment(p.offset(Part::kConfounding), p.d_n) = confounding.row(k);
  }
  return means;
}

DomainPair generate_synthetic_domains(const HierarchySpec& h, const PartitionSpec& p,
                                      const SyntheticDomainConfig& cfg) {
  const Matrix means = synthetic_class_means(h, p, cfg);
  const Index n = h.num_fine() * cfg.samples_per_class;

  LabelMatrix labels(n, h.levels());
  for (Index k = 0; k < h.num_fine(); ++k) {
    for (Index s = 0; s < cfg.samples_per_class; ++s) {
      for (Index g = 0; g < h.levels(); ++g) labels(k * cfg.samples_per_class + s, g) = h.ancestor(k, g);
    }
  }
  auto draw = [&](std::uint64_t stream) {
    std::mt19937_64 rng(cfg.seed + stream);
    Matrix x(n, p.d);
    fill_normal(x, cfg.noise_std, rng);
    for (Index i = 0; i < n; ++i) x.row(i) += means.row(labels(i, 0));
    return x;
  };

  DomainPair pair;
  pair.source = Dataset{h, Domain::kSource, draw(kSourceNoiseStream), labels};
  Matrix target = cfg.noise_std == 0.0 ? pair.source.features : draw(kTargetNoiseStream);

  std::mt19937_64 shift_rng(cfg.seed + kShiftStream);
  RowVector direction(p.d);
  fill_normal(direction, 1.0, shift_rng);
  const std::array<bool, 3> shifted = {cfg.shift_common, cfg.shift_specific, cfg.shift_confounding};
  for (Part part : kAllParts) {
    if (!shifted[static_cast<std::size_t>(part)]) continue;
    const Index off = p.offset(part), len = p.size(part);
    target.middleCols(off, len) *= cfg.shift_scale;
    target.middleCols(off, len).rowwise() += cfg.shift_offset * direction.segment(off, len);
  }
  pair.target = Dataset{h, Domain::kTarget, std::move(target), labels};
  return pair;
}

}  // namespace cfsg
