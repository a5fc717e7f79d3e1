#include "nfgp/autodiff.hpp"

#include "nfgp/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <utility>

namespace nfgp::ad {

namespace {

std::string shape(const Matrix& m) { return fmt::format("{}x{}", m.rows(), m.cols()); }

Tape& same_tape(std::string_view prim, Var a, Var b) {
  if (!a.valid() || !b.valid()) {
    throw UsageError(fmt::format("{}: operand is not attached to a tape", prim));
  }
  if (a.tape() != b.tape()) {
    throw UsageError(fmt::format("{}: operands live on different tapes", prim));
  }
  return *a.tape();
}

Tape& tape_of(std::string_view prim, Var a) {
  if (!a.valid()) {
    throw UsageError(fmt::format("{}: operand is not attached to a tape", prim));
  }
  return *a.tape();
}

void require_same_shape(std::string_view prim, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", prim, shape(a), shape(b)));
  }
}

Matrix softplus_values(const Matrix& x) {
  return x.unaryExpr([](double v) { return softplus(v); });
}

Matrix sigmoid_values(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kSum: return "sum";
    case Op::kColSum: return "col_sum";
    case Op::kRowSum: return "row_sum";
    case Op::kMean: return "mean";
    case Op::kDot: return "dot";
    case Op::kTranspose: return "transpose";
    case Op::kSoftplus: return "softplus";
    case Op::kSigmoid: return "sigmoid";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kMaxScalar: return "maximum";
    case Op::kNorm2: return "norm2";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kBroadcastRows: return "broadcast_rows";
  }
  return "unknown";
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Var / Tape

const Matrix& Var::value() const { return tape_->value(index_); }
Matrix Var::grad() const { return tape_->grad(index_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) {
    throw DimensionError(fmt::format("scalar: node {} has shape {}", index_, shape(v)));
  }
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  Node node;
  node.grad = Matrix::Zero(value.rows(), value.cols());
  node.value = std::move(value);
  node.op = Op::kLeaf;
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  node.op = Op::kConstant;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::record(Op op, Matrix value, int lhs, int rhs, double param) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.lhs = lhs;
  node.rhs = rhs;
  node.param = param;
  node.needs_grad = (lhs >= 0 && nodes_[lhs].needs_grad) || (rhs >= 0 && nodes_[rhs].needs_grad);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix Tape::grad(int index) const {
  const Node& node = nodes_[index];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) {
    if (node.op == Op::kLeaf) {
      node.grad.setZero();
    } else {
      node.grad.resize(0, 0);
    }
  }
}

void Tape::accumulate(int index, const Matrix& adjoint) {
  Node& node = nodes_[index];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = adjoint;
  } else {
    node.grad += adjoint;
  }
}

void Tape::backward(Var output) {
  if (output.tape() != this) {
    throw UsageError("backward: output node does not belong to this tape");
  }
  const Matrix& out = nodes_[output.index()].value;
  if (out.size() != 1) {
    throw UsageError(fmt::format("backward: output must be scalar, got {}", shape(out)));
  }
  for (Node& node : nodes_) {
    if (node.op != Op::kLeaf) node.grad.resize(0, 0);
  }
  accumulate(output.index(), Matrix::Ones(1, 1));

  last_visits_ = 0;
  for (int i = output.index(); i >= 0; --i) {
    ++last_visits_;
    const Node& node = nodes_[i];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (node.op == Op::kLeaf || node.op == Op::kConstant) continue;
    propagate(i);
  }
}

void Tape::propagate(int index) {
  // accumulate() writes into parent nodes only and never resizes nodes_.
  const Node& node = nodes_[index];
  const Matrix& g = node.grad;
  const Matrix& y = node.value;
  const int a = node.lhs;
  const int b = node.rhs;
  auto va = [&]() -> const Matrix& { return nodes_[a].value; };
  auto vb = [&]() -> const Matrix& { return nodes_[b].value; };
  auto want = [&](int i) { return i >= 0 && nodes_[i].needs_grad; };

  switch (node.op) {
    case Op::kLeaf:
    case Op::kConstant:
      break;
    case Op::kMatMul:
      if (want(a)) accumulate(a, g * vb().transpose());
      if (want(b)) accumulate(b, va().transpose() * g);
      break;
    case Op::kAdd:
      if (want(a)) accumulate(a, g);
      if (want(b)) accumulate(b, g);
      break;
    case Op::kSub:
      if (want(a)) accumulate(a, g);
      if (want(b)) accumulate(b, -g);
      break;
    case Op::kMul:
      if (want(a)) accumulate(a, g.cwiseProduct(vb()));
      if (want(b)) accumulate(b, g.cwiseProduct(va()));
      break;
    case Op::kDiv:
      if (want(a)) accumulate(a, g.cwiseQuotient(vb()));
      if (want(b)) {
        accumulate(b, -(g.cwiseProduct(va()).cwiseQuotient(vb().cwiseProduct(vb()))));
      }
      break;
    case Op::kSum:
      accumulate(a, Matrix::Constant(va().rows(), va().cols(), g(0, 0)));
      break;
    case Op::kColSum:
      accumulate(a, g.replicate(va().rows(), 1));
      break;
    case Op::kRowSum:
      accumulate(a, g.replicate(1, va().cols()));
      break;
    case Op::kMean:
      accumulate(a, Matrix::Constant(va().rows(), va().cols(),
                                     g(0, 0) / static_cast<double>(va().size())));
      break;
    case Op::kDot:
      if (want(a)) accumulate(a, g(0, 0) * vb());
      if (want(b)) accumulate(b, g(0, 0) * va());
      break;
    case Op::kTranspose:
      accumulate(a, g.transpose());
      break;
    case Op::kSoftplus:
      accumulate(a, g.cwiseProduct(sigmoid_values(va())));
      break;
    case Op::kSigmoid:
      accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
      break;
    case Op::kLog:
      accumulate(a, g.cwiseQuotient(va()));
      break;
    case Op::kExp:
      accumulate(a, g.cwiseProduct(y));
      break;
    case Op::kSquare:
      accumulate(a, 2.0 * g.cwiseProduct(va()));
      break;
    case Op::kSqrt:
      accumulate(a, (0.5 * g.array() / y.array()).matrix());
      break;
    case Op::kMaxScalar: {
      const double s = node.param;
      accumulate(a, (va().array() > s).select(g, 0.0));
      break;
    }
    case Op::kNorm2: {
      const double n = y(0, 0);
      if (n > 0.0) {
        accumulate(a, (g(0, 0) / n) * va());
      } else {
        accumulate(a, Matrix::Zero(va().rows(), va().cols()));
      }
      break;
    }
    case Op::kScale:
      accumulate(a, node.param * g);
      break;
    case Op::kAddScalar:
      accumulate(a, g);
      break;
    case Op::kBroadcastCols:
      accumulate(a, g.rowwise().sum());
      break;
    case Op::kBroadcastRows:
      accumulate(a, g.colwise().sum());
      break;
  }
}

// ---------------------------------------------------------------------------
// Primitives

Var matmul(Var a, Var b) {
  Tape& t = same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError(
        fmt::format("matmul: inner dimensions differ {} * {}", shape(a.value()), shape(b.value())));
  }
  return t.record(Op::kMatMul, a.value() * b.value(), a.index(), b.index());
}

Var add(Var a, Var b) {
  Tape& t = same_tape("add", a, b);
  require_same_shape("add", a.value(), b.value());
  return t.record(Op::kAdd, a.value() + b.value(), a.index(), b.index());
}

Var sub(Var a, Var b) {
  Tape& t = same_tape("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  return t.record(Op::kSub, a.value() - b.value(), a.index(), b.index());
}

Var mul(Var a, Var b) {
  Tape& t = same_tape("mul", a, b);
  require_same_shape("mul", a.value(), b.value());
  return t.record(Op::kMul, a.value().cwiseProduct(b.value()), a.index(), b.index());
}

Var div(Var a, Var b) {
  Tape& t = same_tape("div", a, b);
  require_same_shape("div", a.value(), b.value());
  return t.record(Op::kDiv, a.value().cwiseQuotient(b.value()), a.index(), b.index());
}

Var sum(Var a) {
  Tape& t = tape_of("sum", a);
  return t.record(Op::kSum, Matrix::Constant(1, 1, a.value().sum()), a.index());
}

Var col_sum(Var a) {
  Tape& t = tape_of("col_sum", a);
  return t.record(Op::kColSum, a.value().colwise().sum(), a.index());
}

Var row_sum(Var a) {
  Tape& t = tape_of("row_sum", a);
  return t.record(Op::kRowSum, a.value().rowwise().sum(), a.index());
}

Var mean(Var a) {
  Tape& t = tape_of("mean", a);
  if (a.value().size() == 0) throw DimensionError("mean: empty operand");
  return t.record(Op::kMean, Matrix::Constant(1, 1, a.value().mean()), a.index());
}

Var dot(Var a, Var b) {
  Tape& t = same_tape("dot", a, b);
  require_same_shape("dot", a.value(), b.value());
  return t.record(Op::kDot, Matrix::Constant(1, 1, a.value().cwiseProduct(b.value()).sum()),
                  a.index(), b.index());
}

Var transpose(Var a) {
  Tape& t = tape_of("transpose", a);
  return t.record(Op::kTranspose, a.value().transpose(), a.index());
}

Var softplus(Var a) {
  Tape& t = tape_of("softplus", a);
  return t.record(Op::kSoftplus, softplus_values(a.value()), a.index());
}

Var sigmoid(Var a) {
  Tape& t = tape_of("sigmoid", a);
  return t.record(Op::kSigmoid, sigmoid_values(a.value()), a.index());
}

Var log(Var a) {
  Tape& t = tape_of("log", a);
  return t.record(Op::kLog, a.value().array().log().matrix(), a.index());
}

Var exp(Var a) {
  Tape& t = tape_of("exp", a);
  return t.record(Op::kExp, a.value().array().exp().matrix(), a.index());
}

Var square(Var a) {
  Tape& t = tape_of("square", a);
  return t.record(Op::kSquare, a.value().array().square().matrix(), a.index());
}

Var sqrt(Var a) {
  Tape& t = tape_of("sqrt", a);
  return t.record(Op::kSqrt, a.value().array().sqrt().matrix(), a.index());
}

Var maximum(Var a, double s) {
  Tape& t = tape_of("maximum", a);
  return t.record(Op::kMaxScalar, a.value().array().max(s).matrix(), a.index(), -1, s);
}

Var norm2(Var a) {
  Tape& t = tape_of("norm2", a);
  return t.record(Op::kNorm2, Matrix::Constant(1, 1, a.value().norm()), a.index());
}

Var scale(Var a, double s) {
  Tape& t = tape_of("scale", a);
  return t.record(Op::kScale, s * a.value(), a.index(), -1, s);
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of("add_scalar", a);
  return t.record(Op::kAddScalar, (a.value().array() + s).matrix(), a.index(), -1, s);
}

Var broadcast_cols(Var v, Eigen::Index cols) {
  Tape& t = tape_of("broadcast_cols", v);
  if (v.cols() != 1) {
    throw DimensionError(
        fmt::format("broadcast_cols: expected a column vector, got {}", shape(v.value())));
  }
  return t.record(Op::kBroadcastCols, v.value().replicate(1, cols), v.index());
}

Var broadcast_rows(Var v, Eigen::Index rows) {
  Tape& t = tape_of("broadcast_rows", v);
  if (v.rows() != 1) {
    throw DimensionError(
        fmt::format("broadcast_rows: expected a row vector, got {}", shape(v.value())));
  }
  return t.record(Op::kBroadcastRows, v.value().replicate(rows, 1), v.index());
}

Var minimum(Var a, double s) { return scale(maximum(scale(a, -1.0), -s), -1.0); }

Var clamp(Var a, double low, double high) { return minimum(maximum(a, low), high); }

}  // namespace nfgp::ad
