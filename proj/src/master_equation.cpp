#include "nfgp/backtest.hpp"
#include "nfgp/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace nfgp::backtest {

namespace {

void require_positive_path(const MarketWeightPath& path) {
  if (path.days() < 2) throw DataError("master equation: need at least 2 rows");
  if ((path.weights().array() <= 0.0).any()) {
    throw DataError("master equation: market weights must be strictly positive");
  }
}

// -(1/2G) sum_ij H_ij mu_i mu_j dl_i dl_j with dl the log-weight increment.
double drift_step(double g, const Eigen::MatrixXd& hessian, const Eigen::VectorXd& mu,
                  const Eigen::VectorXd& dlog) {
  const Eigen::VectorXd scaled = mu.cwiseProduct(dlog);
  return -0.5 / g * scaled.dot(hessian * scaled);
}

Eigen::MatrixXd fd_hessian(const icnn::ICNNParams& theta, const Eigen::VectorXd& x, double h) {
  const auto n = x.size();
  auto G = [&](const Eigen::VectorXd& y) { return -icnn::evaluate_f(theta, y); };
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      H(i, j) = (G(pp) - G(pm) - G(mp) + G(mm)) / (4.0 * h * h);
      H(j, i) = H(i, j);
    }
  }
  return H;
}

}  // namespace

Eigen::MatrixXd estimate_tau(const MarketWeightPath& path) {
  require_positive_path(path);
  const Eigen::MatrixXd logs = path.weights().array().log().matrix();
  const Eigen::Index n = path.assets();
  Eigen::MatrixXd tau = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index s = 1; s < logs.rows(); ++s) {
    const Eigen::VectorXd d = (logs.row(s) - logs.row(s - 1)).transpose();
    tau.noalias() += d * d.transpose();
  }
  return tau;
}

MasterDecomposition master_residual(const fgp::Generator& gen, const MarketWeightPath& path) {
  if (std::holds_alternative<fgp::Neural>(gen)) {
    throw ConfigError("master_residual: use master_residual_neural for the neural generator");
  }
  fgp::validate(gen);
  require_positive_path(path);
  const bool market = std::holds_alternative<fgp::Constant>(gen);

  MasterDecomposition out;
  for (Eigen::Index s = 1; s < path.days(); ++s) {
    const Eigen::VectorXd prev = path.row(s - 1);
    const Eigen::VectorXd next = path.row(s);
    // The market relative to itself is identically 1.
    if (!market) {
      const fgp::PortfolioWeights pi = fgp::classical_weights(gen, prev);
      out.log_v += std::log(pi.values().dot(next.cwiseQuotient(prev)));
    }
    const Eigen::VectorXd dlog = (next.array().log() - prev.array().log()).matrix();
    out.drift_integral += drift_step(fgp::generator_value(gen, prev), fgp::analytic_hessian(gen, prev),
                                     prev, dlog);
  }
  out.log_g_ratio = std::log(fgp::generator_value(gen, path.row(path.days() - 1)) /
                             fgp::generator_value(gen, path.row(0)));
  out.residual = out.log_v - out.log_g_ratio - out.drift_integral;
  if (!std::isfinite(out.residual)) throw NumericError("master_residual: non-finite residual");
  return out;
}

MasterDecomposition master_residual_neural(const icnn::ICNNParams& theta, double grad_clip,
                                           const MarketWeightPath& path, double fd_step) {
  require_positive_path(path);
  if (!(fd_step > 0.0)) throw ConfigError("master_residual_neural: fd_step must be positive");
  auto G = [&](const Eigen::VectorXd& x) {
    const double g = -icnn::evaluate_f(theta, x);
    if (!(g > 0.0)) throw NumericError(fmt::format("master_residual_neural: G = {} is not positive", g));
    return g;
  };

  MasterDecomposition out;
  out.log_v = std::log(relative_wealth_neural(theta, grad_clip, path).terminal());
  for (Eigen::Index s = 1; s < path.days(); ++s) {
    const Eigen::VectorXd prev = path.row(s - 1);
    const Eigen::VectorXd dlog = (path.row(s).array().log() - prev.array().log()).matrix();
    out.drift_integral += drift_step(G(prev), fd_hessian(theta, prev, fd_step), prev, dlog);
  }
  out.log_g_ratio = std::log(G(path.row(path.days() - 1)) / G(path.row(0)));
  out.residual = out.log_v - out.log_g_ratio - out.drift_integral;
  if (!std::isfinite(out.residual)) throw NumericError("master_residual_neural: non-finite residual");
  return out;
}

}  // namespace nfgp::backtest
