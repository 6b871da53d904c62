#include "cfsg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cfsg {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("Var::scalar on non-scalar node");
  return v(0, 0);
}

Var GradTape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var GradTape::parameter(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var GradTape::record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw DimensionError("operands live on different tapes");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void GradTape::accumulate(std::size_t id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = delta;
  } else {
    n.grad += delta;
  }
}

void GradTape::backward(Var root) {
  if (root.tape() != this) throw DimensionError("backward: root belongs to another tape");
  if (nodes_[root.id()].value.size() != 1) throw DimensionError("backward: root must be a scalar");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    const Matrix g = n.grad;
    n.backward(*this, g);
  }
}

Matrix GradTape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

void row_broadcast(const Var& a, const Var& r, const char* op) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw DimensionError(std::string(op) + ": row vector length mismatch");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimension mismatch");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](GradTape& t, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().transpose(), {a},
                          [ia](GradTape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var operator+(Var a, Var b) {
  same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var operator-(Var a, Var b) {
  same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var cmul(Var a, Var b) {
  same_shape(a, b, "cmul");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [ia, ib](GradTape& t, const Matrix& g) {
                            if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                            if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                          });
}

Var scale(Var a, double s) {
  const auto ia = a.id();
  return a.tape()->record(a.value() * s, {a},
                          [ia, s](GradTape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var scale(Var a, Var s) {
  if (s.value().size() != 1) throw DimensionError("scale: factor must be 1x1");
  const auto ia = a.id(), is = s.id();
  return a.tape()->record(a.value() * s.scalar(), {a, s}, [ia, is](GradTape& t, const Matrix& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(is)(0, 0));
    if (t.needs_grad(is)) {
      t.accumulate(is, Matrix::Constant(1, 1, g.cwiseProduct(t.value(ia)).sum()));
    }
  });
}

Var add_rowvec(Var a, Var r) {
  row_broadcast(a, r, "add_rowvec");
  const auto ia = a.id(), ir = r.id();
  Matrix out = a.value().rowwise() + r.value().row(0);
  return a.tape()->record(std::move(out), {a, r}, [ia, ir](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g);
    if (t.needs_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var mul_rowvec(Var a, Var r) {
  row_broadcast(a, r, "mul_rowvec");
  const auto ia = a.id(), ir = r.id();
  Matrix out = a.value().array().rowwise() * r.value().row(0).array();
  return a.tape()->record(std::move(out), {a, r}, [ia, ir](GradTape& t, const Matrix& g) {
    if (t.needs_grad(ia)) {
      t.accumulate(ia, (g.array().rowwise() * t.value(ir).row(0).array()).matrix());
    }
    if (t.needs_grad(ir)) t.accumulate(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
  });
}

Var relu(Var a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().cwiseMax(0.0), {a}, [ia](GradTape& t, const Matrix& g) {
    t.accumulate(ia, (t.value(ia).array() > 0.0).select(g, 0.0).matrix());
  });
}

Var softplus(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  return a.tape()->record(std::move(out), {a}, [ia](GradTape& t, const Matrix& g) {
    Matrix sig = t.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    t.accumulate(ia, g.cwiseProduct(sig));
  });
}

Var log_clamped(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return std::log(std::max(x, kEpsProb)); });
  return a.tape()->record(std::move(out), {a}, [ia](GradTape& t, const Matrix& g) {
    const Matrix& x = t.value(ia);
    t.accumulate(ia, (x.array() > kEpsProb).select(g.array() / x.array(), 0.0).matrix());
  });
}

Var xlogx(Var a) {
  const auto ia = a.id();
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x * std::log(x) : 0.0; });
  return a.tape()->record(std::move(out), {a}, [ia](GradTape& t, const Matrix& g) {
    Matrix d = t.value(ia).unaryExpr([](double x) { return std::log(std::max(x, kEpsProb)) + 1.0; });
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var rsqrt_eps(Var a, double eps) {
  const auto ia = a.id();
  Matrix out = (a.value().array() + eps).rsqrt().matrix();
  return a.tape()->record(std::move(out), {a}, [ia, eps](GradTape& t, const Matrix& g) {
    Matrix d = (-0.5 * (t.value(ia).array() + eps).pow(-1.5)).matrix();
    t.accumulate(ia, g.cwiseProduct(d));
  });
}

Var square(Var a) {
  const auto ia = a.id();
  return a.tape()->record(a.value().cwiseAbs2(), {a}, [ia](GradTape& t, const Matrix& g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
  });
}

Var sum(Var a) {
  const auto ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape()->record(Matrix::Constant(1, 1, a.value().sum()), {a},
                          [ia, r, c](GradTape& t, const Matrix& g) {
                            t.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                          });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw DimensionError("mean: empty input");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var col_mean(Var a) {
  if (a.rows() == 0) throw DimensionError("col_mean: no rows");
  const auto ia = a.id();
  const Index r = a.rows();
  return a.tape()->record(a.value().colwise().mean(), {a}, [ia, r](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(r, 1) / static_cast<double>(r));
  });
}

Var row_mean(Var a) {
  if (a.cols() == 0) throw DimensionError("row_mean: no columns");
  const auto ia = a.id();
  const Index c = a.cols();
  return a.tape()->record(a.value().rowwise().mean(), {a}, [ia, c](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g.replicate(1, c) / static_cast<double>(c));
  });
}

Var block(Var a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw DimensionError("block: range outside operand");
  }
  const auto ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out = a.value().block(row, col, rows, cols);
  return a.tape()->record(std::move(out), {a},
                          [ia, r, c, row, col, rows, cols](GradTape& t, const Matrix& g) {
                            Matrix d = Matrix::Zero(r, c);
                            d.block(row, col, rows, cols) = g;
                            t.accumulate(ia, d);
                          });
}

Var reshape(Var a, Index rows, Index cols) {
  if (rows * cols != a.value().size()) throw DimensionError("reshape: element count mismatch");
  const auto ia = a.id();
  const Index r = a.rows(), c = a.cols();
  Matrix out = a.value().reshaped<Eigen::RowMajor>(rows, cols);
  return a.tape()->record(std::move(out), {a}, [ia, r, c](GradTape& t, const Matrix& g) {
    t.accumulate(ia, g.reshaped<Eigen::RowMajor>(r, c));
  });
}

Var softmax_rows(Var a) {
  const auto ia = a.id();
  Matrix out = softmax_rows(a.value());
  if (!a.tape()->needs_grad(ia)) return a.tape()->record(std::move(out), {a}, nullptr);
  const Matrix y = out;
  return a.tape()->record(std::move(out), {a}, [ia, y](GradTape& t, const Matrix& g) {
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    t.accumulate(ia, y.cwiseProduct(g - dots.replicate(1, g.cols())));
  });
}

Var cosine_gram(Var a) {
  const auto ia = a.id();
  const Matrix& x = a.value();
  const Eigen::VectorXd norms = x.rowwise().norm();
  const Matrix dots = x * x.transpose();
  const Matrix denom = (norms * norms.transpose()).array() + kEpsNorm;
  Matrix out = dots.cwiseQuotient(denom);
  return a.tape()->record(std::move(out), {a},
                          [ia, norms, dots, denom](GradTape& t, const Matrix& g) {
                            const Matrix& x = t.value(ia);
                            const Matrix d_dots = g.cwiseQuotient(denom);
                            const Matrix d_denom =
                                -(g.cwiseProduct(dots).array() / denom.array().square()).matrix();
                            Matrix dx = (d_dots + d_dots.transpose()) * x;
                            const Eigen::VectorXd d_norm = (d_denom + d_denom.transpose()) * norms;
                            for (Index i = 0; i < x.rows(); ++i) {
                              if (norms(i) > 0.0) dx.row(i) += d_norm(i) / norms(i) * x.row(i);
                            }
                            t.accumulate(ia, dx);
                          });
}

Var rowwise_cosine(Var a, Var b) {
  same_shape(a, b, "rowwise_cosine");
  const auto ia = a.id(), ib = b.id();
  const Eigen::VectorXd na = a.value().rowwise().norm();
  const Eigen::VectorXd nb = b.value().rowwise().norm();
  const Eigen::VectorXd dots = a.value().cwiseProduct(b.value()).rowwise().sum();
  const Eigen::VectorXd denom = (na.array() * nb.array() + kEpsNorm).matrix();
  Matrix out = dots.cwiseQuotient(denom);
  return a.tape()->record(std::move(out), {a, b},
                          [ia, ib, na, nb, dots, denom](GradTape& t, const Matrix& g) {
                            const Matrix& x = t.value(ia);
                            const Matrix& y = t.value(ib);
                            Matrix dx = Matrix::Zero(x.rows(), x.cols());
                            Matrix dy = Matrix::Zero(y.rows(), y.cols());
                            for (Index i = 0; i < x.rows(); ++i) {
                              const double d_dot = g(i, 0) / denom(i);
                              const double d_den = -g(i, 0) * dots(i) / (denom(i) * denom(i));
                              dx.row(i) = d_dot * y.row(i);
                              dy.row(i) = d_dot * x.row(i);
                              if (na(i) > 0.0) dx.row(i) += d_den * nb(i) / na(i) * x.row(i);
                              if (nb(i) > 0.0) dy.row(i) += d_den * na(i) / nb(i) * y.row(i);
                            }
                            t.accumulate(ia, dx);
                            t.accumulate(ib, dy);
                          });
}

}  // namespace cfsg
