#pragma once

#include "nfgp/autodiff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// Input convex neural network f and the concave generating function
// G(x) = -f(x).
//
//   z_1     = softplus(W_0 x + b_0)
//   z_{k+1} = softplus(W_k z_k + U_k x + b_k),   k = 1..K-1
//   f(x)    = w^T z_K + u^T x + c
//
// Convexity in x holds when W_k (k >= 1) and w are elementwise
// nonnegative; W_0, U_k, b_k, u and c are free.

namespace nfgp::icnn {

/// Floor applied to G before taking logs.
inline constexpr double kGeneratorFloor = 1e-8;
/// Tolerance of the simplex precondition on network inputs.
inline constexpr double kSimplexTolerance = 1e-9;

struct ICNNParams {
  std::vector<int> widths;        // m_1..m_K
  std::vector<Eigen::MatrixXd> W;  // W_0: m_1 x n, W_k: m_{k+1} x m_k
  std::vector<Eigen::MatrixXd> U;  // U_k: m_{k+1} x n, k = 1..K-1 (stored at U[k-1])
  std::vector<Eigen::VectorXd> b;  // b_k: m_{k+1}
  Eigen::VectorXd w;               // m_K
  Eigen::VectorXd u;               // n
  double c = 0.0;
  std::string activation = "softplus";

  int inputs() const { return static_cast<int>(u.size()); }
  int depth() const { return static_cast<int>(widths.size()); }

  /// Zero-valued parameters with the given architecture.
  static ICNNParams zeros(int n, const std::vector<int>& widths);

  /// Throws DimensionError if shapes are mutually inconsistent.
  void validate() const;

  /// Flat row-major concatenation in the order W, U, b, w, u, c.
  Eigen::VectorXd flatten() const;
  /// Inverse of flatten(); `like` supplies the architecture.
  static ICNNParams unflatten(const Eigen::VectorXd& flat, const ICNNParams& like);
  /// 1 where the entry must be nonnegative, 0 elsewhere; same layout as flatten().
  Eigen::VectorXd constraint_mask() const;
  Eigen::Index parameter_count() const;

  bool operator==(const ICNNParams& other) const;
};

struct ForwardCache {
  std::vector<Eigen::VectorXd> pre;         // p_k
  std::vector<Eigen::VectorXd> activation;  // z_k = softplus(p_k)
  double f_value = 0.0;
};

/// Glorot-uniform draw for the free weights, absolute values for the
/// constrained ones, zero biases. c is then shifted so G = 2 at the
/// uniform simplex point.
ICNNParams init(int n, const std::vector<int>& widths, std::uint64_t seed);

/// Evaluates the recursion. Requires x in the open simplex.
ForwardCache forward(const ICNNParams& theta, const Eigen::VectorXd& x);

/// Same recursion without the simplex precondition (used for finite
/// differences around simplex points).
double evaluate_f(const ICNNParams& theta, const Eigen::VectorXd& x);

/// G(x) = -f(x); may be nonpositive.
double generating_function(const ICNNParams& theta, const Eigen::VectorXd& x);

/// Gradient of log max(G, kGeneratorFloor) with respect to x.
Eigen::VectorXd grad_log_G(const ICNNParams& theta, const Eigen::VectorXd& x);

/// Replaces every constrained entry by max(entry, 0).
ICNNParams project_constraints(ICNNParams theta);

bool satisfies_constraints(const ICNNParams& theta);

// ---------------------------------------------------------------------------
// Tape-recorded evaluation, batched over columns of X (n x T).

struct ParamVars {
  std::vector<ad::Var> W;
  std::vector<ad::Var> U;
  std::vector<ad::Var> b;
  ad::Var w;
  ad::Var u;
  ad::Var c;
};

/// Records θ on the tape, as leaves when `differentiable`, else as constants.
ParamVars record_params(ad::Tape& tape, const ICNNParams& theta, bool differentiable);

/// Gradients of the leaves recorded by record_params, in ICNNParams layout.
ICNNParams collect_grads(const ParamVars& vars, const ICNNParams& like);

struct NetworkGraph {
  ad::Var f;           // 1 x T
  ad::Var G;           // 1 x T, -f
  ad::Var grad_log_G;  // n x T
};

/// Forward pass plus the explicit input-gradient recursion
///   delta_K = w
///   a_k = delta_k * sigmoid(p_k); grad += U_{k-1}^T a_k; delta_{k-1} = W_{k-1}^T a_k
///   grad += W_0^T (delta_1 * sigmoid(p_1)) + u
///   grad_log_G = -grad / max(G, eps)
/// so that derivatives in θ flow through grad_log_G on a first-order tape.
NetworkGraph record_network(const ParamVars& params, ad::Var X);

// ---------------------------------------------------------------------------
// Serialisation: JSON document with every double stored as a C99 hex-float
// string, so a save/load round trip is bit-exact.

std::string to_json(const ICNNParams& theta);
ICNNParams from_json(const std::string& text);
void save(const std::filesystem::path& path, const ICNNParams& theta);
ICNNParams load(const std::filesystem::path& path);

}  // namespace nfgp::icnn
