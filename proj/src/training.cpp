#include "nfgp/training.hpp"

#include "nfgp/errors.hpp"
#include "nfgp/fgp.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>

namespace nfgp::training {

void TrainConfig::validate() const {
  if (!(lambda_l2 >= 0.0) || !(lambda_pos >= 0.0) || !(delta_pos >= 0.0)) {
    throw ConfigError("train: penalty coefficients must be nonnegative");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (epochs < 1) throw ConfigError(fmt::format("train: epochs must be >= 1, got {}", epochs));
  if (!(grad_clip > 0.0)) throw ConfigError("train: grad_clip must be positive");
}

AdamState AdamState::for_params(const icnn::ICNNParams& theta) {
  AdamState s;
  s.m = Eigen::VectorXd::Zero(theta.parameter_count());
  s.v = Eigen::VectorXd::Zero(theta.parameter_count());
  return s;
}

LossGraph record_loss(const icnn::ParamVars& params, ad::Tape& tape, const MarketWeightPath& window,
                      const TrainConfig& cfg) {
  using namespace ad;
  if (window.assets() < 2) throw ConfigError("loss: need at least 2 assets");
  const Eigen::Index T = window.days() - 1;
  if (T < 1) throw ConfigError("loss: window needs at least 2 rows");

  const Eigen::MatrixXd& rows = window.weights();
  const Eigen::MatrixXd prev = rows.topRows(T).transpose();
  const Eigen::MatrixXd next = rows.bottomRows(T).transpose();
  Var X = tape.constant(prev);
  Var ratio = tape.constant(next.cwiseQuotient(prev));

  const icnn::NetworkGraph net = icnn::record_network(params, X);
  Var pi = fgp::neural_weights(net, X, cfg.grad_clip);

  Var gross = col_sum(mul(pi, ratio));
  const Eigen::MatrixXd& gv = gross.value();
  for (Eigen::Index s = 0; s < T; ++s) {
    if (!std::isfinite(gv(0, s)) || gv(0, s) <= 0.0) {
      throw NumericError(fmt::format("loss: non-finite or nonpositive growth factor at step {}", s + 1));
    }
  }
  const double inv_t = 1.0 / static_cast<double>(T);

  LossGraph loss;
  loss.log_v_term = scale(sum(log(gross)), -inv_t);
  loss.penalty = scale(mean(sqrt(col_sum(square(pi)))), cfg.lambda_l2);
  loss.hinge = scale(mean(square(maximum(cfg.delta_pos - net.G, 0.0))), cfg.lambda_pos);
  loss.total = loss.log_v_term + loss.penalty + loss.hinge;
  if (!std::isfinite(loss.total.scalar())) throw NumericError("loss: non-finite objective");
  return loss;
}

namespace {

LossTerms read_terms(const LossGraph& g) {
  return {g.total.scalar(), g.log_v_term.scalar(), g.penalty.scalar(), g.hinge.scalar()};
}

}  // namespace

LossTerms evaluate_loss(const icnn::ICNNParams& theta, const MarketWeightPath& window,
                        const TrainConfig& cfg) {
  ad::Tape tape;
  const auto vars = icnn::record_params(tape, theta, false);
  return read_terms(record_loss(vars, tape, window, cfg));
}

LossAndGrad loss_and_gradient(const icnn::ICNNParams& theta, const MarketWeightPath& window,
                              const TrainConfig& cfg) {
  ad::Tape tape;
  const auto vars = icnn::record_params(tape, theta, true);
  const LossGraph loss = record_loss(vars, tape, window, cfg);
  tape.backward(loss.total);
  return {read_terms(loss), icnn::collect_grads(vars, theta)};
}

std::pair<icnn::ICNNParams, AdamState> adam_step(const icnn::ICNNParams& theta,
                                                 const icnn::ICNNParams& grads, AdamState state,
                                                 double learning_rate) {
  Eigen::VectorXd x = theta.flatten();
  const Eigen::VectorXd g = grads.flatten();
  if (g.size() != x.size() || state.m.size() != x.size() || state.v.size() != x.size()) {
    throw DimensionError(fmt::format("adam: parameter/gradient/state sizes {} / {} / {}", x.size(),
                                     g.size(), state.m.size()));
  }
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseProduct(g);
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const Eigen::ArrayXd m_hat = state.m.array() / bias1;
  const Eigen::ArrayXd v_hat = state.v.array() / bias2;
  x.array() -= learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  return {icnn::project_constraints(icnn::ICNNParams::unflatten(x, theta)), std::move(state)};
}

TrainResult train_window(const icnn::ICNNParams& theta0, const MarketWeightPath& window,
                         const TrainConfig& cfg) {
  cfg.validate();
  icnn::ICNNParams theta = icnn::project_constraints(theta0);
  AdamState state = AdamState::for_params(theta);

  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  result.log.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    LossAndGrad lg = loss_and_gradient(theta, window, cfg);
    result.log.push_back({epoch, lg.terms});
    if (lg.terms.total < result.best_loss) {
      result.best_loss = lg.terms.total;
      result.params = theta;
    }
    std::tie(theta, state) = adam_step(theta, lg.grad, std::move(state), cfg.learning_rate);
  }
  const LossTerms last = evaluate_loss(theta, window, cfg);
  if (last.total < result.best_loss) {
    result.best_loss = last.total;
    result.params = std::move(theta);
  }
  return result;
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << "epoch,loss,log_v_term,penalty_term,hinge_term\n";
  for (const auto& r : log) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.terms.total,
                       r.terms.log_v_term, r.terms.penalty, r.terms.hinge);
  }
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace nfgp::training
