#include "cfsg/explain.hpp"

#include <spdlog/spdlog.h>

#include <map>
#include <sstream>

#include "cfsg/io.hpp"

namespace cfsg {

const char* to_string(Block b) {
  switch (b) {
    case Block::kAll: return "all";
    case Block::kCommon: return "common";
    case Block::kSpecific: return "specific";
    default: return "confounding";
  }
}

namespace {

Matrix select_block(const Matrix& weight, Block block, const PartitionSpec& p) {
  if (weight.cols() != p.d) throw DimensionError("concept similarity: weight columns != partition d");
  switch (block) {
    case Block::kAll: return weight;
    case Block::kCommon: return weight.middleCols(p.offset(Part::kCommon), p.d_c);
    case Block::kSpecific: return weight.middleCols(p.offset(Part::kSpecific), p.d_p);
    default: return weight.middleCols(p.offset(Part::kConfounding), p.d_n);
  }
}

}  // namespace

Matrix concept_similarity_matrix(const Matrix& weight, Block block, const PartitionSpec& p) {
  const Matrix rows = select_block(weight, block, p);
  const Index k = rows.rows();
  for (Index i = 0; i < k; ++i) {
    if (rows.row(i).norm() == 0.0) {
      spdlog::warn("concept similarity: class {} has a zero {} weight slice", i, to_string(block));
    }
  }
  Matrix sim(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = i; j < k; ++j) {
      sim(i, j) = sim(j, i) = i == j ? 1.0 : cosine_similarity(rows.row(i), rows.row(j));
    }
  }
  return sim;
}

SimilarityReport hierarchy_alignment(const Matrix& weight, const PartitionSpec& p, const HierarchySpec& h) {
  if (weight.rows() != h.num_fine()) throw DimensionError("hierarchy_alignment: weight rows != fine class count");
  SimilarityReport report;
  report.ground_truth = similarity_matrix(h);
  const Index k = h.num_fine();
  std::vector<double> gt;
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) gt.push_back(report.ground_truth(i, j));
  }
  for (Block b : kAllBlocks) {
    const auto bi = static_cast<std::size_t>(b);
    report.cosine[bi] = concept_similarity_matrix(weight, b, p);
    std::vector<double> model;
    for (Index i = 0; i < k; ++i) {
      for (Index j = i + 1; j < k; ++j) model.push_back(report.cosine[bi](i, j));
    }
    report.rho[bi] = spearman_rho(model, gt);
  }
  return report;
}

NCReport nc_diagnostics(const Matrix& features, const std::vector<Index>& labels, const Matrix& weight) {
  if (static_cast<Index>(labels.size()) != features.rows()) throw DimensionError("nc_diagnostics: label count");
  if (weight.cols() != features.cols()) throw DimensionError("nc_diagnostics: weight width != feature width");
  std::map<Index, std::vector<Index>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<Index>(i));
  if (members.size() < 2) throw ValidationError("nc_diagnostics: need at least 2 classes");
  for (const auto& [cls, rows] : members) {
    if (rows.size() < 2) throw ValidationError("nc_diagnostics: class " + std::to_string(cls) + " has < 2 samples");
    if (cls < 0 || cls >= weight.rows()) throw ValidationError("nc_diagnostics: class id outside the weight rows");
  }

  const RowVector global = features.colwise().mean();
  NCReport out;
  double within = 0.0;
  double between = 0.0;
  std::vector<double> dist;
  for (const auto& [cls, rows] : members) {
    RowVector mu = RowVector::Zero(features.cols());
    for (Index r : rows) mu += features.row(r);
    mu /= static_cast<double>(rows.size());
    for (Index r : rows) within += (features.row(r) - mu).squaredNorm();
    between += (mu - global).squaredNorm();
    dist.push_back((mu - global).norm());
    out.classes.push_back(cls);
    out.nc3.push_back(cosine_similarity(weight.row(cls), mu));
  }
  within /= static_cast<double>(features.rows());
  between /= static_cast<double>(members.size());
  if (between > 1e-12) out.nc1 = within / between;

  double mean = 0.0;
  for (double v : dist) mean += v;
  mean /= static_cast<double>(dist.size());
  if (mean > 1e-12) {
    double var = 0.0;
    for (double v : dist) var += (v - mean) * (v - mean);
    out.nc2 = std::sqrt(var / static_cast<double>(dist.size())) / mean;
  }
  return out;
}

namespace {

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

nlohmann::json report_to_json(const SimilarityReport& sim, const NCReport* nc) {
  nlohmann::json j;
  for (Block b : kAllBlocks) {
    j[std::string("rho_") + to_string(b)] = sim.rho_for(b);
    j["cosine"][to_string(b)] = matrix_rows(sim.cosine_for(b));
  }
  nlohmann::json gt = nlohmann::json::array();
  for (Index i = 0; i < sim.ground_truth.rows(); ++i) {
    std::vector<int> r;
    for (Index c = 0; c < sim.ground_truth.cols(); ++c) r.push_back(sim.ground_truth(i, c));
    gt.push_back(r);
  }
  j["ground_truth"] = gt;
  if (nc != nullptr) {
    j["nc"]["nc1"] = nc->nc1 ? nlohmann::json(*nc->nc1) : nlohmann::json(nullptr);
    j["nc"]["nc2"] = nc->nc2 ? nlohmann::json(*nc->nc2) : nlohmann::json(nullptr);
    j["nc"]["nc3"] = nc->nc3;
    j["nc"]["classes"] = nc->classes;
  }
  return j;
}

std::string pairs_csv(const SimilarityReport& sim) {
  std::ostringstream out;
  out << "i,j,gt_sim,cos_all,cos_c,cos_p,cos_n\n";
  const Index k = sim.ground_truth.rows();
  for (Index i = 0; i < k; ++i) {
    for (Index j = i + 1; j < k; ++j) {
      out << i << ',' << j << ',' << sim.ground_truth(i, j);
      for (Block b : kAllBlocks) out << ',' << format_double(sim.cosine_for(b)(i, j));
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace cfsg
