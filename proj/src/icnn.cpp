#include "nfgp/icnn.hpp"

#include "nfgp/errors.hpp"
#include "nfgp/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace nfgp::icnn {

namespace {

void require_input(const ICNNParams& theta, const Eigen::VectorXd& x) {
  if (x.size() != theta.inputs()) {
    throw DimensionError(
        fmt::format("icnn: input has {} entries, network expects {}", x.size(), theta.inputs()));
  }
}

void require_simplex(const Eigen::VectorXd& x) {
  if (!x.allFinite() || (x.array() <= 0.0).any()) {
    throw DataError("icnn: input must have strictly positive finite entries");
  }
  if (std::abs(x.sum() - 1.0) > kSimplexTolerance) {
    throw DataError(fmt::format("icnn: input sums to {:.17g}, expected 1", x.sum()));
  }
}

Eigen::MatrixXd glorot(Rng& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                       Eigen::Index fan_out, bool nonnegative) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill so the draw order matches the serialised layout.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double v = rng.uniform(-a, a);
      m(i, j) = nonnegative ? std::abs(v) : v;
    }
  }
  return m;
}

template <typename Fn>
void for_each_block(const ICNNParams& t, Fn&& fn) {
  // fn(matrix, constrained)
  for (std::size_t k = 0; k < t.W.size(); ++k) fn(t.W[k], k >= 1);
  for (const auto& u : t.U) fn(u, false);
  for (const auto& b : t.b) fn(b, false);
  fn(t.w, true);
  fn(t.u, false);
}

template <typename Fn>
void for_each_block_mut(ICNNParams& t, Fn&& fn) {
  for (std::size_t k = 0; k < t.W.size(); ++k) fn(t.W[k], k >= 1);
  for (auto& u : t.U) fn(u, false);
  for (auto& b : t.b) fn(b, false);
  fn(t.w, true);
  fn(t.u, false);
}

}  // namespace

ICNNParams ICNNParams::zeros(int n, const std::vector<int>& widths) {
  if (n < 2) throw ConfigError(fmt::format("icnn: need at least 2 inputs, got {}", n));
  if (widths.empty()) throw ConfigError("icnn: at least one hidden layer is required");
  for (int m : widths) {
    if (m <= 0) throw ConfigError(fmt::format("icnn: hidden width must be positive, got {}", m));
  }
  ICNNParams p;
  p.widths = widths;
  const auto depth = widths.size();
  p.W.push_back(Eigen::MatrixXd::Zero(widths[0], n));
  p.b.push_back(Eigen::VectorXd::Zero(widths[0]));
  for (std::size_t k = 1; k < depth; ++k) {
    p.W.push_back(Eigen::MatrixXd::Zero(widths[k], widths[k - 1]));
    p.U.push_back(Eigen::MatrixXd::Zero(widths[k], n));
    p.b.push_back(Eigen::VectorXd::Zero(widths[k]));
  }
  p.w = Eigen::VectorXd::Zero(widths.back());
  p.u = Eigen::VectorXd::Zero(n);
  p.c = 0.0;
  return p;
}

void ICNNParams::validate() const {
  const auto n = u.size();
  const auto depth = widths.size();
  auto fail = [](const std::string& what) { throw DimensionError("icnn: " + what); };
  if (depth == 0) fail("empty architecture");
  if (W.size() != depth || b.size() != depth || U.size() != depth - 1) {
    fail(fmt::format("expected {} W, {} U, {} b blocks; got {}, {}, {}", depth, depth - 1, depth,
                     W.size(), U.size(), b.size()));
  }
  for (std::size_t k = 0; k < depth; ++k) {
    const auto rows = widths[k];
    const auto cols = k == 0 ? n : widths[k - 1];
    if (W[k].rows() != rows || W[k].cols() != cols) {
      fail(fmt::format("W_{} is {}x{}, expected {}x{}", k, W[k].rows(), W[k].cols(), rows, cols));
    }
    if (b[k].size() != rows) fail(fmt::format("b_{} has {} entries, expected {}", k, b[k].size(), rows));
    if (k >= 1 && (U[k - 1].rows() != rows || U[k - 1].cols() != n)) {
      fail(fmt::format("U_{} is {}x{}, expected {}x{}", k, U[k - 1].rows(), U[k - 1].cols(), rows, n));
    }
  }
  if (w.size() != widths.back()) fail(fmt::format("w has {} entries, expected {}", w.size(), widths.back()));
}

Eigen::Index ICNNParams::parameter_count() const {
  Eigen::Index count = 1;  // c
  for_each_block(*this, [&](const auto& m, bool) { count += m.size(); });
  return count;
}

Eigen::VectorXd ICNNParams::flatten() const {
  Eigen::VectorXd flat(parameter_count());
  Eigen::Index pos = 0;
  for_each_block(*this, [&](const auto& m, bool) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) flat[pos++] = m(i, j);
    }
  });
  flat[pos] = c;
  return flat;
}

ICNNParams ICNNParams::unflatten(const Eigen::VectorXd& flat, const ICNNParams& like) {
  if (flat.size() != like.parameter_count()) {
    throw DimensionError(fmt::format("icnn: flat vector has {} entries, architecture needs {}",
                                     flat.size(), like.parameter_count()));
  }
  ICNNParams out = like;
  Eigen::Index pos = 0;
  for_each_block_mut(out, [&](auto& m, bool) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = flat[pos++];
    }
  });
  out.c = flat[pos];
  return out;
}

Eigen::VectorXd ICNNParams::constraint_mask() const {
  Eigen::VectorXd mask(parameter_count());
  Eigen::Index pos = 0;
  for_each_block(*this, [&](const auto& m, bool constrained) {
    mask.segment(pos, m.size()).setConstant(constrained ? 1.0 : 0.0);
    pos += m.size();
  });
  mask[pos] = 0.0;
  return mask;
}

bool ICNNParams::operator==(const ICNNParams& o) const {
  if (widths != o.widths || activation != o.activation || c != o.c) return false;
  if (W.size() != o.W.size() || U.size() != o.U.size() || b.size() != o.b.size()) return false;
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
  };
  for (std::size_t k = 0; k < W.size(); ++k) {
    if (!same(W[k], o.W[k])) return false;
  }
  for (std::size_t k = 0; k < U.size(); ++k) {
    if (!same(U[k], o.U[k])) return false;
  }
  for (std::size_t k = 0; k < b.size(); ++k) {
    if (!same(b[k], o.b[k])) return false;
  }
  return same(w, o.w) && same(u, o.u);
}

ICNNParams init(int n, const std::vector<int>& widths, std::uint64_t seed) {
  ICNNParams p = ICNNParams::zeros(n, widths);
  Rng rng(seed);
  p.W[0] = glorot(rng, widths[0], n, n, widths[0], false);
  for (std::size_t k = 1; k < widths.size(); ++k) {
    p.W[k] = glorot(rng, widths[k], widths[k - 1], widths[k - 1], widths[k], true);
    p.U[k - 1] = glorot(rng, widths[k], n, n, widths[k], false);
  }
  p.w = glorot(rng, widths.back(), 1, widths.back(), 1, true);
  p.u = glorot(rng, n, 1, n, 1, false);

  const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / n);
  const double probe = evaluate_f(p, uniform);
  p.c = -probe - 2.0;
  return p;
}

double evaluate_f(const ICNNParams& theta, const Eigen::VectorXd& x) {
  require_input(theta, x);
  auto softplus = [](const Eigen::VectorXd& v) {
    return v.unaryExpr([](double s) { return ad::softplus(s); }).eval();
  };
  Eigen::VectorXd z = softplus(theta.W[0] * x + theta.b[0]);
  for (std::size_t k = 1; k < theta.W.size(); ++k) {
    z = softplus(theta.W[k] * z + theta.U[k - 1] * x + theta.b[k]);
  }
  return theta.w.dot(z) + theta.u.dot(x) + theta.c;
}

ForwardCache forward(const ICNNParams& theta, const Eigen::VectorXd& x) {
  theta.validate();
  require_input(theta, x);
  require_simplex(x);
  ForwardCache cache;
  const auto depth = theta.W.size();
  for (std::size_t k = 0; k < depth; ++k) {
    Eigen::VectorXd p = k == 0 ? Eigen::VectorXd(theta.W[0] * x + theta.b[0])
                               : Eigen::VectorXd(theta.W[k] * cache.activation.back() +
                                                 theta.U[k - 1] * x + theta.b[k]);
    cache.activation.push_back(p.unaryExpr([](double s) { return ad::softplus(s); }));
    cache.pre.push_back(std::move(p));
  }
  cache.f_value = theta.w.dot(cache.activation.back()) + theta.u.dot(x) + theta.c;
  return cache;
}

double generating_function(const ICNNParams& theta, const Eigen::VectorXd& x) {
  return -forward(theta, x).f_value;
}

Eigen::VectorXd grad_log_G(const ICNNParams& theta, const Eigen::VectorXd& x) {
  theta.validate();
  require_input(theta, x);
  require_simplex(x);
  ad::Tape tape;
  const ParamVars vars = record_params(tape, theta, false);
  const NetworkGraph net = record_network(vars, tape.constant(x));
  return net.grad_log_G.value().col(0);
}

ICNNParams project_constraints(ICNNParams theta) {
  for (std::size_t k = 1; k < theta.W.size(); ++k) theta.W[k] = theta.W[k].cwiseMax(0.0);
  theta.w = theta.w.cwiseMax(0.0);
  return theta;
}

bool satisfies_constraints(const ICNNParams& theta) {
  for (std::size_t k = 1; k < theta.W.size(); ++k) {
    if ((theta.W[k].array() < 0.0).any()) return false;
  }
  return (theta.w.array() >= 0.0).all();
}

// ---------------------------------------------------------------------------

ParamVars record_params(ad::Tape& tape, const ICNNParams& theta, bool differentiable) {
  theta.validate();
  auto put = [&](const Eigen::MatrixXd& m) {
    return differentiable ? tape.leaf(m) : tape.constant(m);
  };
  ParamVars vars;
  for (const auto& m : theta.W) vars.W.push_back(put(m));
  for (const auto& m : theta.U) vars.U.push_back(put(m));
  for (const auto& v : theta.b) vars.b.push_back(put(v));
  vars.w = put(theta.w);
  vars.u = put(theta.u);
  vars.c = put(Eigen::MatrixXd::Constant(1, 1, theta.c));
  return vars;
}

ICNNParams collect_grads(const ParamVars& vars, const ICNNParams& like) {
  ICNNParams g = like;
  for (std::size_t k = 0; k < vars.W.size(); ++k) g.W[k] = vars.W[k].grad();
  for (std::size_t k = 0; k < vars.U.size(); ++k) g.U[k] = vars.U[k].grad();
  for (std::size_t k = 0; k < vars.b.size(); ++k) g.b[k] = vars.b[k].grad();
  g.w = vars.w.grad();
  g.u = vars.u.grad();
  g.c = vars.c.grad()(0, 0);
  return g;
}

NetworkGraph record_network(const ParamVars& params, ad::Var X) {
  using namespace ad;
  const Eigen::Index n = X.rows();
  const Eigen::Index T = X.cols();
  if (params.u.rows() != n) {
    throw DimensionError(
        fmt::format("icnn: input batch has {} rows, network expects {}", n, params.u.rows()));
  }
  const std::size_t depth = params.W.size();

  std::vector<Var> pre;
  Var z;
  for (std::size_t k = 0; k < depth; ++k) {
    Var p = k == 0 ? matmul(params.W[0], X) + broadcast_cols(params.b[0], T)
                   : matmul(params.W[k], z) + matmul(params.U[k - 1], X) +
                         broadcast_cols(params.b[k], T);
    pre.push_back(p);
    z = softplus(p);
  }
  NetworkGraph net;
  net.f = matmul(transpose(params.w), z) + matmul(transpose(params.u), X) +
          broadcast_cols(params.c, T);
  net.G = -net.f;

  // df/dx by backpropagating through the layers in closed form.
  Var a = mul(broadcast_cols(params.w, T), sigmoid(pre[depth - 1]));
  Var grad_f;
  for (std::size_t k = depth - 1; k >= 1; --k) {
    Var from_u = matmul(transpose(params.U[k - 1]), a);
    grad_f = grad_f.valid() ? grad_f + from_u : from_u;
    Var delta = matmul(transpose(params.W[k]), a);
    a = mul(delta, sigmoid(pre[k - 1]));
  }
  Var from_input = matmul(transpose(params.W[0]), a) + broadcast_cols(params.u, T);
  grad_f = grad_f.valid() ? grad_f + from_input : from_input;

  Var g_floor = broadcast_rows(maximum(net.G, kGeneratorFloor), n);
  net.grad_log_G = -div(grad_f, g_floor);
  return net;
}

}  // namespace nfgp::icnn
