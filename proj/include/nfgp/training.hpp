#pragma once

#include "nfgp/autodiff.hpp"
#include "nfgp/icnn.hpp"
#include "nfgp/market_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace nfgp::training {

struct TrainConfig {
  double lambda_l2 = 1e-3;    // weight-norm penalty
  double lambda_pos = 1.0;    // positivity hinge on G
  double delta_pos = 0.1;     // hinge margin
  double learning_rate = 1e-3;
  int epochs = 300;
  double grad_clip = 10.0;    // cap on |d log G / dx_i|
  std::uint64_t seed = 0;
  bool warm_start = false;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;  // flattened like ICNNParams::flatten()
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const icnn::ICNNParams& theta);
};

struct LossTerms {
  double total = 0.0;
  double log_v_term = 0.0;  // -(1/T) log V_T
  double penalty = 0.0;     // lambda * mean_t ||pi_t||_2
  double hinge = 0.0;       // lambda_pos * mean_t max(0, delta - G_t)^2
};

struct LossGraph {
  ad::Var total;
  ad::Var log_v_term;
  ad::Var penalty;
  ad::Var hinge;
};

/// Records the training objective for a window of T+1 market-weight rows:
///   L = -(1/T) sum_s log(sum_i pi_i(x_{s-1}) x_{s,i} / x_{s-1,i})
///       + lambda * (1/T) sum_t ||pi(x_t)||_2
///       + lambda_pos * (1/T) sum_t max(0, delta_pos - G(x_t))^2
LossGraph record_loss(const icnn::ParamVars& params, ad::Tape& tape, const MarketWeightPath& window,
                      const TrainConfig& cfg);

LossTerms evaluate_loss(const icnn::ICNNParams& theta, const MarketWeightPath& window,
                        const TrainConfig& cfg);

struct LossAndGrad {
  LossTerms terms;
  icnn::ICNNParams grad;
};

LossAndGrad loss_and_gradient(const icnn::ICNNParams& theta, const MarketWeightPath& window,
                              const TrainConfig& cfg);

/// One bias-corrected Adam update followed by constraint projection.
std::pair<icnn::ICNNParams, AdamState> adam_step(const icnn::ICNNParams& theta,
                                                 const icnn::ICNNParams& grads, AdamState state,
                                                 double learning_rate);

struct EpochRecord {
  int epoch = 0;
  LossTerms terms;
};

struct TrainResult {
  icnn::ICNNParams params;  // lowest-loss iterate
  double best_loss = 0.0;
  std::vector<EpochRecord> log;  // one row per epoch, loss before that epoch's step
};

/// Full-batch Adam for cfg.epochs steps from theta0. The iterate after the
/// last step is also scored, so the returned loss never exceeds the first
/// logged one.
TrainResult train_window(const icnn::ICNNParams& theta0, const MarketWeightPath& window,
                         const TrainConfig& cfg);

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& log);

}  // namespace nfgp::training
