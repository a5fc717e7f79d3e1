#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records one forward evaluation as a topologically ordered node
// list; every primitive appends a node whose parents precede it. Scalars are
// 1x1 matrices and vectors are column matrices. Column-batched evaluation
// (one column per sample) uses the two broadcast primitives.

namespace nfgp::ad {

using Matrix = Eigen::MatrixXd;

enum class Op : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kSum,
  kColSum,
  kRowSum,
  kMean,
  kDot,
  kTranspose,
  kSoftplus,
  kSigmoid,
  kLog,
  kExp,
  kSquare,
  kSqrt,
  kMaxScalar,
  kNorm2,
  kScale,
  kAddScalar,
  kBroadcastCols,
  kBroadcastRows,
};

std::string_view op_name(Op op);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Accumulated adjoint. Zero-filled with the value's shape until backward
  /// reaches this node.
  Matrix grad() const;
  double scalar() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape* tape() const { return tape_; }
  int index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (parameter or input variable).
  Var leaf(Matrix value);
  /// Non-differentiable input; backward skips everything that only depends
  /// on constants.
  Var constant(Matrix value);
  Var scalar_constant(double value);

  /// Propagates d(output)/d(node) through the tape. Leaf adjoints
  /// accumulate across calls until zero_grad(); interior adjoints are
  /// recomputed from scratch on every call.
  void backward(Var output);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  /// Nodes visited by the most recent backward call.
  std::size_t last_backward_visits() const { return last_visits_; }

  const Matrix& value(int index) const { return nodes_[index].value; }
  Matrix grad(int index) const;
  Op op(int index) const { return nodes_[index].op; }
  /// Parent indices of a node (-1 when absent).
  std::pair<int, int> parents(int index) const {
    return {nodes_[index].lhs, nodes_[index].rhs};
  }

  // Node construction used by the primitive functions.
  Var record(Op op, Matrix value, int lhs, int rhs = -1, double param = 0.0);
  bool needs_grad(int index) const { return nodes_[index].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Op op = Op::kConstant;
    int lhs = -1;
    int rhs = -1;
    double param = 0.0;
    bool needs_grad = false;
  };

  void propagate(int index);
  void accumulate(int index, const Matrix& adjoint);

  std::vector<Node> nodes_;
  std::size_t last_visits_ = 0;
};

// Primitives. Binary primitives require both operands on the same tape and
// throw DimensionError on shape mismatch.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
Var sum(Var a);         // all entries -> 1x1
Var col_sum(Var a);     // r x c -> 1 x c
Var row_sum(Var a);     // r x c -> r x 1
Var mean(Var a);        // all entries -> 1x1
Var dot(Var a, Var b);  // equal-shape operands -> 1x1
Var transpose(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Elementwise max(a, s). The adjoint passes through only where a > s.
Var maximum(Var a, double s);
/// Frobenius norm -> 1x1. The adjoint at the zero matrix is zero.
Var norm2(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Column vector v (r x 1) repeated into r x cols.
Var broadcast_cols(Var v, Eigen::Index cols);
/// Row vector v (1 x c) repeated into rows x c.
Var broadcast_rows(Var v, Eigen::Index rows);

// Composites expressed with the primitives above.
Var minimum(Var a, double s);                 // -max(-a, -s)
Var clamp(Var a, double low, double high);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }
inline Var operator+(Var a, double s) { return add_scalar(a, s); }
inline Var operator+(double s, Var a) { return add_scalar(a, s); }
inline Var operator-(Var a, double s) { return add_scalar(a, -s); }
inline Var operator-(double s, Var a) { return add_scalar(scale(a, -1.0), s); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// Numerically stable log(1 + e^x) and logistic function on plain values.
double softplus(double x);
double sigmoid(double x);

}  // namespace nfgp::ad
