#include "nfgp/fgp.hpp"

#include "nfgp/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace nfgp::fgp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_same_size(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(fmt::format("{}: sizes differ ({} vs {})", what, a.size(), b.size()));
  }
}

void require_positive(const Eigen::VectorXd& x, const char* what) {
  if (x.size() < 1 || !x.allFinite() || (x.array() <= 0.0).any()) {
    throw DataError(fmt::format("{}: market weights must be finite and strictly positive", what));
  }
}

double entropy(const Eigen::VectorXd& x) { return -(x.array() * x.array().log()).sum(); }

}  // namespace

PortfolioWeights::PortfolioWeights(Eigen::VectorXd pi) : pi_(std::move(pi)) {
  if (pi_.size() == 0 || !pi_.allFinite()) {
    throw NumericError("portfolio weights: empty or non-finite entries");
  }
  if ((pi_.array() <= 0.0).any()) {
    throw NumericError(fmt::format("portfolio weights: entry {:.6g} is not strictly positive",
                                   pi_.minCoeff()));
  }
  if (std::abs(pi_.sum() - 1.0) > kSumTolerance) {
    throw NumericError(fmt::format("portfolio weights: sum {:.17g} differs from 1", pi_.sum()));
  }
}

std::string name(const Generator& gen) {
  return std::visit(Overloaded{
                        [](const Constant&) { return std::string("Market"); },
                        [](const EqualWeight&) { return std::string("EWP"); },
                        [](const Diversity& d) { return fmt::format("DWP(p={})", d.p); },
                        [](const Entropy&) { return std::string("Entropy"); },
                        [](const Neural&) { return std::string("NeuralFGP"); },
                    },
                    gen);
}

void validate(const Generator& gen) {
  if (const auto* d = std::get_if<Diversity>(&gen)) {
    if (!(d->p > 0.0 && d->p < 1.0)) {
      throw ConfigError(fmt::format("diversity exponent must lie in (0, 1), got {}", d->p));
    }
  }
  if (const auto* nn = std::get_if<Neural>(&gen)) {
    if (!(nn->grad_clip > 0.0)) throw ConfigError("neural generator: grad_clip must be positive");
  }
}

Eigen::VectorXd raw_fgp_weights(const Eigen::VectorXd& grad_log_g, const Eigen::VectorXd& x) {
  require_same_size(grad_log_g, x, "raw_fgp_weights");
  const double drift = x.dot(grad_log_g);
  return ((grad_log_g.array() + 1.0 - drift) * x.array()).matrix();
}

PortfolioWeights project_to_simplex(const Eigen::VectorXd& raw) {
  if (raw.size() == 0) throw DimensionError("project_to_simplex: empty input");
  if (!raw.allFinite()) throw NumericError("project_to_simplex: non-finite raw weight");
  Eigen::VectorXd clipped = raw.cwiseMax(kWeightFloor);
  clipped /= clipped.sum();
  return PortfolioWeights(std::move(clipped));
}

PortfolioWeights classical_weights(const Generator& gen, const Eigen::VectorXd& x) {
  validate(gen);
  require_positive(x, "classical_weights");
  const auto n = static_cast<double>(x.size());
  return std::visit(
      Overloaded{
          [&](const Constant&) { return PortfolioWeights(x); },
          [&](const EqualWeight&) {
            return PortfolioWeights(Eigen::VectorXd::Constant(x.size(), 1.0 / n));
          },
          [&](const Diversity& d) {
            Eigen::VectorXd powered = x.array().pow(d.p).matrix();
            return PortfolioWeights(powered / powered.sum());
          },
          [&](const Entropy&) {
            Eigen::VectorXd terms = (-(x.array() * x.array().log())).matrix();
            return PortfolioWeights(terms / terms.sum());
          },
          [&](const Neural&) -> PortfolioWeights {
            throw ConfigError("classical_weights: the neural generator has no closed form");
          },
      },
      gen);
}

Eigen::MatrixXd neural_weights_batch(const icnn::ICNNParams& theta, const Eigen::MatrixXd& X,
                                     double grad_clip) {
  ad::Tape tape;
  const icnn::ParamVars vars = icnn::record_params(tape, theta, false);
  return neural_weights(vars, tape.constant(X), grad_clip).value();
}

PortfolioWeights neural_weights(const icnn::ICNNParams& theta, const Eigen::VectorXd& x,
                                double grad_clip) {
  require_positive(x, "neural_weights");
  if (x.size() != theta.inputs()) {
    throw DimensionError(fmt::format("neural_weights: x has {} entries, network expects {}",
                                     x.size(), theta.inputs()));
  }
  const Eigen::MatrixXd pi = neural_weights_batch(theta, x, grad_clip);
  return PortfolioWeights(pi.col(0));
}

PortfolioWeights weights(const Generator& gen, const Eigen::VectorXd& x) {
  if (const auto* nn = std::get_if<Neural>(&gen)) return neural_weights(nn->params, x, nn->grad_clip);
  return classical_weights(gen, x);
}

double generator_value(const Generator& gen, const Eigen::VectorXd& x) {
  validate(gen);
  require_positive(x, "generator_value");
  return std::visit(Overloaded{
                        [&](const Constant&) { return 1.0; },
                        [&](const EqualWeight&) { return std::exp(x.array().log().mean()); },
                        [&](const Diversity& d) { return std::pow(x.array().pow(d.p).sum(), 1.0 / d.p); },
                        [&](const Entropy&) { return entropy(x); },
                        [&](const Neural& nn) { return icnn::generating_function(nn.params, x); },
                    },
                    gen);
}

Eigen::VectorXd analytic_grad_log(const Generator& gen, const Eigen::VectorXd& x) {
  validate(gen);
  require_positive(x, "analytic_grad_log");
  const auto n = static_cast<double>(x.size());
  return std::visit(
      Overloaded{
          [&](const Constant&) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(x.size()); },
          [&](const EqualWeight&) -> Eigen::VectorXd { return (1.0 / (n * x.array())).matrix(); },
          [&](const Diversity& d) -> Eigen::VectorXd {
            // G = (sum x^p)^(1/p); the p-th power alone does not generate x^p / sum x^p.
            const double s = x.array().pow(d.p).sum();
            return (x.array().pow(d.p - 1.0) / s).matrix();
          },
          [&](const Entropy&) -> Eigen::VectorXd {
            return ((-x.array().log() - 1.0) / entropy(x)).matrix();
          },
          [&](const Neural& nn) -> Eigen::VectorXd { return icnn::grad_log_G(nn.params, x); },
      },
      gen);
}

Eigen::MatrixXd analytic_hessian(const Generator& gen, const Eigen::VectorXd& x) {
  validate(gen);
  require_positive(x, "analytic_hessian");
  const auto size = x.size();
  const auto n = static_cast<double>(size);
  return std::visit(
      Overloaded{
          [&](const Constant&) -> Eigen::MatrixXd { return Eigen::MatrixXd::Zero(size, size); },
          [&](const EqualWeight&) -> Eigen::MatrixXd {
            const double g = std::exp(x.array().log().mean());
            const Eigen::VectorXd inv = x.cwiseInverse();
            Eigen::MatrixXd h = (g / (n * n)) * inv * inv.transpose();
            h.diagonal() = (g * (1.0 / n) * (1.0 / n - 1.0) * inv.array().square()).matrix();
            return h;
          },
          [&](const Diversity& d) -> Eigen::MatrixXd {
            const double s = x.array().pow(d.p).sum();
            const double g = std::pow(s, 1.0 / d.p);
            const Eigen::VectorXd a = x.array().pow(d.p - 1.0).matrix();
            Eigen::MatrixXd h = (g * (1.0 - d.p) / (s * s)) * a * a.transpose();
            h.diagonal() -= (g * (1.0 - d.p) / s * x.array().pow(d.p - 2.0)).matrix();
            return h;
          },
          [&](const Entropy&) -> Eigen::MatrixXd {
            return (-x.cwiseInverse()).asDiagonal();
          },
          [&](const Neural&) -> Eigen::MatrixXd {
            throw ConfigError("analytic_hessian: the neural generator has no closed form");
          },
      },
      gen);
}

// ---------------------------------------------------------------------------

ad::Var raw_fgp_weights(ad::Var grad_log_g, ad::Var X) {
  using namespace ad;
  const Eigen::Index n = X.rows();
  Var drift = broadcast_rows(col_sum(mul(X, grad_log_g)), n);
  return mul(X, (grad_log_g - drift) + 1.0);
}

ad::Var project_to_simplex(ad::Var raw) {
  using namespace ad;
  Var clipped = maximum(raw, kWeightFloor);
  return div(clipped, broadcast_rows(col_sum(clipped), raw.rows()));
}

ad::Var neural_weights(const icnn::NetworkGraph& net, ad::Var X, double grad_clip) {
  ad::Var g = ad::clamp(net.grad_log_G, -grad_clip, grad_clip);
  return project_to_simplex(raw_fgp_weights(g, X));
}

ad::Var neural_weights(const icnn::ParamVars& params, ad::Var X, double grad_clip) {
  return neural_weights(icnn::record_network(params, X), X, grad_clip);
}

}  // namespace nfgp::fgp
