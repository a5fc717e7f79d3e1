#pragma once

#include "nfgp/fgp.hpp"
#include "nfgp/icnn.hpp"
#include "nfgp/market_data.hpp"
#include "nfgp/training.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace nfgp::backtest {

using WeightsFn = std::function<fgp::PortfolioWeights(const Eigen::VectorXd&)>;

/// V_t of a strategy relative to the market, V_0 = 1.
struct RelativeWealthPath {
  std::vector<double> v;
  double terminal() const { return v.back(); }
};

/// V_t = prod_{s<=t} sum_i pi_i(x_{s-1}) x_{s,i} / x_{s-1,i}. Weights at
/// step s only see row s-1.
RelativeWealthPath relative_wealth(const WeightsFn& weights, const MarketWeightPath& path);

/// Neural strategy over a whole path, evaluated column-batched.
RelativeWealthPath relative_wealth_neural(const icnn::ICNNParams& theta, double grad_clip,
                                          const MarketWeightPath& path);

struct WalkForwardConfig {
  int train_days = 200;
  int test_days = 20;
  bool include_neural = true;
  std::vector<fgp::Generator> benchmarks{fgp::EqualWeight{}, fgp::Constant{}, fgp::Diversity{0.3},
                                         fgp::Diversity{0.5}, fgp::Diversity{0.8}};
  /// Window k (1-based) initialises its network with seed train.seed + k.
  training::TrainConfig train;
  std::vector<int> widths{64, 64};
  /// Worker threads over windows; results do not depend on this value.
  int jobs = 1;
  /// Report V_{T_k} chained across windows instead of restarting at 1.
  bool cumulative = false;

  void validate() const;
};

struct WindowBounds {
  int index = 0;        // 1-based
  int train_begin = 0;  // rows [train_begin, train_end] inclusive
  int train_end = 0;
  int test_begin = 0;   // rows [test_begin, test_end] inclusive; test_begin == train_end
  int test_end = 0;
};

struct StrategyResult {
  std::string name;
  std::vector<double> terminal;  // V_{T_k}, k = 1..K
};

struct WalkForwardReport {
  std::vector<WindowBounds> windows;
  std::vector<StrategyResult> strategies;  // NeuralFGP first when present
  std::vector<icnn::ICNNParams> trained;   // one per window when the neural strategy runs
};

/// K = (N - (train + test)) / test, integer division.
int window_count(int n_rows, int train_days, int test_days);

std::vector<WindowBounds> window_bounds(int n_rows, int train_days, int test_days);

WalkForwardReport walk_forward(const MarketWeightPath& path, const WalkForwardConfig& cfg);

struct SummaryRow {
  std::string strategy;
  double avg_log_relative_return = 0.0;
  int windows = 0;
};

/// Per strategy, (1/K) sum_k log V_{T_k}.
std::vector<SummaryRow> summarize(const WalkForwardReport& report);

// ---------------------------------------------------------------------------
// Master-equation diagnostics

/// Realised quadratic covariation of log market weights over the slice:
/// tau_ij = sum_s dlog mu_i(s) dlog mu_j(s).
Eigen::MatrixXd estimate_tau(const MarketWeightPath& path);

struct MasterDecomposition {
  double log_v = 0.0;
  double log_g_ratio = 0.0;
  double drift_integral = 0.0;
  double residual = 0.0;  // log_v - log_g_ratio - drift_integral
};

/// Discrete check of log V_T = log(G(mu_T)/G(mu_0)) + sum_s q_s with
///   q_s = -1/(2 G(mu_{s-1})) sum_ij D2_ij G(mu_{s-1}) mu_i mu_j dtau_ij(s).
/// Requires a classical generator with a closed-form Hessian.
MasterDecomposition master_residual(const fgp::Generator& gen, const MarketWeightPath& path);

/// Same decomposition for a trained network, with the Hessian of G taken
/// by central differences (step `fd_step`). Diagnostics only; slow.
MasterDecomposition master_residual_neural(const icnn::ICNNParams& theta, double grad_clip,
                                           const MarketWeightPath& path, double fd_step = 1e-4);

// ---------------------------------------------------------------------------
// Report files

void write_window_csv(const std::filesystem::path& path, const WalkForwardReport& report);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
void write_plot_data(const std::filesystem::path& path, const WalkForwardReport& report);
void write_svg(const std::filesystem::path& path, const WalkForwardReport& report,
               const std::string& title);

struct SummaryFileRow {
  std::string strategy;
  std::string avg_text;  // exactly as stored
  double avg = 0.0;
  int windows = 0;
};

std::vector<SummaryFileRow> read_summary_csv(const std::filesystem::path& path);

}  // namespace nfgp::backtest
