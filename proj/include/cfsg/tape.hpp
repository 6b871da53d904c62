#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Every operation evaluates eagerly and appends a node to the tape that owns
// its operands. backward() walks the tape in reverse creation order, so the
// gradient of a given forward pass is fully deterministic.

#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "cfsg/numkernel.hpp"

namespace cfsg {

class GradTape;

/// Handle to a node on a GradTape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(GradTape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;

  GradTape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  GradTape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class GradTape {
 public:
  using BackwardFn = std::function<void(GradTape&, const Matrix& out_grad)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is tracked.
  Var parameter(Matrix value);

  /// Seeds d(root)/d(root) = 1 and accumulates gradients for every tracked node.
  void backward(Var root);

  /// Gradient of the last backward() root w.r.t. v; zeros when v did not contribute.
  Matrix grad(Var v) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Adds delta into the gradient slot of node id (no-op for untracked nodes).
  void accumulate(std::size_t id, const Matrix& delta);

  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// ---- operations --------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
/// a * s where s is a 1x1 node.
Var scale(Var a, Var s);
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// Broadcasts the 1xN row r onto every row of a.
Var add_rowvec(Var a, Var r);
Var mul_rowvec(Var a, Var r);

Var relu(Var a);
Var softplus(Var a);
/// ln(max(a, kEpsProb)); gradient is zero inside the clamp.
Var log_clamped(Var a);
/// a ln a with 0 ln 0 = 0.
Var xlogx(Var a);
/// (a + eps)^(-1/2).
Var rsqrt_eps(Var a, double eps);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
/// Column means, 1 x cols.
Var col_mean(Var a);
/// Row means, rows x 1.
Var row_mean(Var a);

Var block(Var a, Index row, Index col, Index rows, Index cols);
/// Row-major reinterpretation of a's entries as rows x cols.
Var reshape(Var a, Index rows, Index cols);

Var softmax_rows(Var a);
/// G(i,j) = <a_i, a_j> / (|a_i| |a_j| + kEpsNorm) over the rows of a.
Var cosine_gram(Var a);
/// c(i) = <a_i, b_i> / (|a_i| |b_i| + kEpsNorm), rows x 1.
Var rowwise_cosine(Var a, Var b);

}  // namespace cfsg
