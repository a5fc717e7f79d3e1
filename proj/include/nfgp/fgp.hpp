#pragma once

#include "nfgp/autodiff.hpp"
#include "nfgp/icnn.hpp"

#include <Eigen/Dense>

#include <string>
#include <variant>

namespace nfgp::fgp {

/// Floor applied to raw weights before renormalising.
inline constexpr double kWeightFloor = 1e-6;
/// Componentwise cap on the input gradient of log G.
inline constexpr double kDefaultGradClip = 10.0;
/// Sum-to-one tolerance checked on every PortfolioWeights.
inline constexpr double kSumTolerance = 1e-10;

/// Long-only, fully invested weight vector. Construction checks that every
/// entry is strictly positive and the entries sum to 1 within 1e-10, and
/// throws NumericError otherwise.
class PortfolioWeights {
 public:
  explicit PortfolioWeights(Eigen::VectorXd pi);

  const Eigen::VectorXd& values() const { return pi_; }
  Eigen::Index size() const { return pi_.size(); }
  double operator[](Eigen::Index i) const { return pi_[i]; }

 private:
  Eigen::VectorXd pi_;
};

struct Constant {};
struct EqualWeight {};
struct Diversity {
  double p = 0.5;
};
struct Entropy {};
struct Neural {
  icnn::ICNNParams params;
  double grad_clip = kDefaultGradClip;
};

using Generator = std::variant<Constant, EqualWeight, Diversity, Entropy, Neural>;

/// Display name: Market, EWP, DWP(p=0.5), Entropy, NeuralFGP.
std::string name(const Generator& gen);

/// Throws ConfigError for Diversity with p outside (0, 1).
void validate(const Generator& gen);

/// pi_i = (g_i + 1 - sum_j x_j g_j) x_i. Sums to one; may be negative.
Eigen::VectorXd raw_fgp_weights(const Eigen::VectorXd& grad_log_g, const Eigen::VectorXd& x);

/// Clip every entry at kWeightFloor from below, then renormalise. Inputs
/// with no positive entry therefore map to the uniform vector.
PortfolioWeights project_to_simplex(const Eigen::VectorXd& raw);

/// Closed-form weights of the classical generators (not Neural).
PortfolioWeights classical_weights(const Generator& gen, const Eigen::VectorXd& x);

/// Neural FGP: clip grad log G at +-grad_clip, apply the generic map, project.
PortfolioWeights neural_weights(const icnn::ICNNParams& theta, const Eigen::VectorXd& x,
                                double grad_clip = kDefaultGradClip);

/// Column-batched neural weights for X (n x T); returns n x T.
Eigen::MatrixXd neural_weights_batch(const icnn::ICNNParams& theta, const Eigen::MatrixXd& X,
                                     double grad_clip = kDefaultGradClip);

/// Dispatches to classical_weights or neural_weights.
PortfolioWeights weights(const Generator& gen, const Eigen::VectorXd& x);

// Closed forms of the classical generating functions.
double generator_value(const Generator& gen, const Eigen::VectorXd& x);
Eigen::VectorXd analytic_grad_log(const Generator& gen, const Eigen::VectorXd& x);
Eigen::MatrixXd analytic_hessian(const Generator& gen, const Eigen::VectorXd& x);

// ---------------------------------------------------------------------------
// Tape versions, batched over columns (n x T).

ad::Var raw_fgp_weights(ad::Var grad_log_g, ad::Var X);
ad::Var project_to_simplex(ad::Var raw);
ad::Var neural_weights(const icnn::ParamVars& params, ad::Var X, double grad_clip);
/// Weights from an already recorded network graph.
ad::Var neural_weights(const icnn::NetworkGraph& net, ad::Var X, double grad_clip);

}  // namespace nfgp::fgp
