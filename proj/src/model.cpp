#include "cfsg/model.hpp"

#include <cmath>
#include <string>

namespace cfsg {

const char* to_string(Part p) {
  switch (p) {
    case Part::kCommon: return "common";
    case Part::kSpecific: return "specific";
    default: return "confounding";
  }
}

Index PartitionSpec::offset(Part p) const {
  switch (p) {
    case Part::kCommon: return 0;
    case Part::kSpecific: return d_c;
    default: return d_c + d_p;
  }
}

Index PartitionSpec::size(Part p) const {
  switch (p) {
    case Part::kCommon: return d_c;
    case Part::kSpecific: return d_p;
    default: return d_n;
  }
}

void PartitionSpec::validate() const {
  if (d_c <= 0 || d_p <= 0 || d_n <= 0 || d != d_c + d_p + d_n) {
    throw ValidationError("partition: blocks must be positive and sum to d (d=" + std::to_string(d) +
                          ", blocks " + std::to_string(d_c) + "/" + std::to_string(d_p) + "/" +
                          std::to_string(d_n) + ")");
  }
}

PartitionSpec partition_channels(Index d, const std::array<double, 3>& ratio) {
  for (double r : ratio) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("partition: ratio entries must be positive");
  }
  if (d < 3) throw ValidationError("partition: need at least 3 channels");
  const double total = ratio[0] + ratio[1] + ratio[2];
  PartitionSpec p;
  p.d = d;
  p.d_p = static_cast<Index>(std::floor(ratio[1] * static_cast<double>(d) / total));
  p.d_n = static_cast<Index>(std::floor(ratio[2] * static_cast<double>(d) / total));
  p.d_c = d - p.d_p - p.d_n;
  if (p.d_p <= 0 || p.d_n <= 0 || p.d_c <= 0) {
    throw ValidationError("partition: d=" + std::to_string(d) + " too small for nonzero blocks");
  }
  return p;
}

namespace {

Matrix he_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(cols)));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

void BackboneParams::validate() const {
  if (layers.empty()) throw ValidationError("backbone: no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.rows()) {
      throw DimensionError("backbone: bias shape mismatch in layer " + std::to_string(i));
    }
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
      throw DimensionError("backbone: layer " + std::to_string(i) + " does not chain");
    }
  }
  if (layers.back().weight.rows() != raw_channels * positions) {
    throw DimensionError("backbone: output size != raw_channels * positions");
  }
}

BackboneParams init_backbone(Index input_dim, const std::vector<Index>& hidden, Index raw_channels,
                             Index positions, std::mt19937_64& rng) {
  BackboneParams params;
  params.raw_channels = raw_channels;
  params.positions = positions;
  Index in = input_dim;
  std::vector<Index> widths = hidden;
  widths.push_back(raw_channels * positions);
  for (Index out : widths) {
    params.layers.push_back(DenseLayer{he_normal(out, in, rng), Matrix::Zero(1, out)});
    in = out;
  }
  return params;
}

GTLParams init_gtl(Index raw_channels, Index channels, std::mt19937_64& rng) {
  GTLParams g;
  g.weight = he_normal(channels, raw_channels, rng);
  g.bias = Matrix::Zero(1, channels);
  g.gamma = Matrix::Ones(1, channels);
  g.beta = Matrix::Zero(1, channels);
  g.running_mean = Matrix::Zero(1, channels);
  g.running_var = Matrix::Ones(1, channels);
  return g;
}

StructuredVars disentangle(Var features, const PartitionSpec& p, Index positions) {
  if (features.cols() != p.d) throw DimensionError("disentangle: channel count != partition d");
  const Index rows = features.rows();
  return StructuredVars{block(features, 0, p.offset(Part::kCommon), rows, p.d_c),
                        block(features, 0, p.offset(Part::kSpecific), rows, p.d_p),
                        block(features, 0, p.offset(Part::kConfounding), rows, p.d_n), positions};
}

Var forward_backbone(const std::vector<DenseVars>& layers, Var x, Index positions) {
  if (x.rows() == 0) throw DimensionError("forward_backbone: empty batch");
  Var h = x;
  for (const auto& layer : layers) {
    if (h.cols() != layer.weight.cols()) throw DimensionError("forward_backbone: input width mismatch");
    h = relu(add_rowvec(matmul(h, transpose(layer.weight)), layer.bias));
  }
  if (h.cols() % positions != 0) throw DimensionError("forward_backbone: output not divisible by positions");
  return reshape(h, h.rows() * positions, h.cols() / positions);
}

GTLForward gtl_forward(const GTLParams& params, const GTLVars& vars, Var raw, Mode mode) {
  if (raw.cols() != params.raw_channels()) throw DimensionError("gtl_forward: raw channel mismatch");
  GradTape& tape = *raw.tape();
  Var z = add_rowvec(matmul(raw, transpose(vars.weight)), vars.bias);
  GTLForward out;
  Var normalized;
  if (mode == Mode::kTrain) {
    Var mu = col_mean(z);
    Var centered = add_rowvec(z, -mu);
    Var var = col_mean(square(centered));
    normalized = mul_rowvec(centered, rsqrt_eps(var, params.eps));
    out.stats = BatchStats{mu.value(), var.value()};
  } else {
    Var mu = tape.constant(params.running_mean);
    Var inv = tape.constant((params.running_var.array() + params.eps).rsqrt().matrix());
    normalized = mul_rowvec(add_rowvec(z, -mu), inv);
  }
  out.normalized = add_rowvec(mul_rowvec(normalized, vars.gamma), vars.beta);
  out.output = relu(out.normalized);
  if (!out.output.value().allFinite()) throw NumericError("gtl_forward: non-finite activations");
  return out;
}

Matrix forward_backbone(const BackboneParams& params, const Matrix& x) {
  params.validate();
  if (x.cols() != params.input_dim()) throw DimensionError("forward_backbone: input width mismatch");
  GradTape tape;
  std::vector<DenseVars> layers;
  for (const auto& l : params.layers) layers.push_back({tape.constant(l.weight), tape.constant(l.bias)});
  return forward_backbone(layers, tape.constant(x), params.positions).value();
}

Matrix gtl_forward(const GTLParams& params, const Matrix& raw, Mode mode, Matrix* normalized) {
  GradTape tape;
  GTLVars vars{tape.constant(params.weight), tape.constant(params.bias), tape.constant(params.gamma),
               tape.constant(params.beta)};
  GTLForward out = gtl_forward(params, vars, tape.constant(raw), mode);
  if (normalized != nullptr) *normalized = out.normalized.value();
  return out.output.value();
}

void update_running_stats(GTLParams& params, const BatchStats& stats) {
  params.running_mean = (1.0 - params.momentum) * params.running_mean + params.momentum * stats.mean;
  params.running_var = (1.0 - params.momentum) * params.running_var + params.momentum * stats.var;
}

namespace {

Matrix pooling_matrix(Index batch, Index positions) {
  Matrix pool = Matrix::Zero(batch, batch * positions);
  for (Index b = 0; b < batch; ++b) pool.block(b, b * positions, 1, positions).setConstant(1.0 / positions);
  return pool;
}

}  // namespace

Matrix spatial_pool(const Matrix& features, Index positions) {
  if (positions < 1 || features.rows() % positions != 0) {
    throw DimensionError("spatial_pool: rows not divisible by positions");
  }
  const Index batch = features.rows() / positions;
  Matrix out(batch, features.cols());
  for (Index b = 0; b < batch; ++b) out.row(b) = features.middleRows(b * positions, positions).colwise().mean();
  return out;
}

Var spatial_pool(Var features, Index positions) {
  if (positions < 1 || features.rows() % positions != 0) {
    throw DimensionError("spatial_pool: rows not divisible by positions");
  }
  const Index batch = features.rows() / positions;
  return matmul(features.tape()->constant(pooling_matrix(batch, positions)), features);
}

Var channel_pool(Var features, Index positions) {
  if (positions < 1 || features.rows() % positions != 0) {
    throw DimensionError("channel_pool: rows not divisible by positions");
  }
  return reshape(row_mean(features), features.rows() / positions, positions);
}

}  // namespace cfsg
