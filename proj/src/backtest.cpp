#include "nfgp/backtest.hpp"

#include "nfgp/errors.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cmath>
#include <exception>
#include <thread>

namespace nfgp::backtest {

namespace {

// Relative wealth from a weight matrix whose column s-1 is the portfolio
// held over step s.
RelativeWealthPath wealth_from_weights(const Eigen::MatrixXd& pi, const MarketWeightPath& path) {
  const Eigen::MatrixXd& x = path.weights();
  RelativeWealthPath out;
  out.v.reserve(static_cast<std::size_t>(x.rows()));
  out.v.push_back(1.0);
  double v = 1.0;
  for (Eigen::Index s = 1; s < x.rows(); ++s) {
    double gross = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) gross += pi(i, s - 1) * (x(s, i) / x(s - 1, i));
    if (!std::isfinite(gross) || gross <= 0.0) {
      throw DataError(fmt::format("relative wealth: invalid growth factor {} at step {}", gross, s));
    }
    v *= gross;
    out.v.push_back(v);
  }
  return out;
}

}  // namespace

RelativeWealthPath relative_wealth(const WeightsFn& weights, const MarketWeightPath& path) {
  const Eigen::Index T = path.days() - 1;
  Eigen::MatrixXd pi(path.assets(), T);
  for (Eigen::Index s = 0; s < T; ++s) {
    const fgp::PortfolioWeights w = weights(path.row(s));
    if (w.size() != path.assets()) {
      throw DimensionError(fmt::format("relative wealth: strategy returned {} weights for {} assets",
                                       w.size(), path.assets()));
    }
    pi.col(s) = w.values();
  }
  return wealth_from_weights(pi, path);
}

RelativeWealthPath relative_wealth_neural(const icnn::ICNNParams& theta, double grad_clip,
                                          const MarketWeightPath& path) {
  const Eigen::Index T = path.days() - 1;
  const Eigen::MatrixXd X = path.weights().topRows(T).transpose();
  const Eigen::MatrixXd pi = fgp::neural_weights_batch(theta, X, grad_clip);
  for (Eigen::Index s = 0; s < T; ++s) (void)fgp::PortfolioWeights(pi.col(s));
  return wealth_from_weights(pi, path);
}

void WalkForwardConfig::validate() const {
  if (train_days < 2) throw ConfigError(fmt::format("walk-forward: train_days must be >= 2, got {}", train_days));
  if (test_days < 1) throw ConfigError(fmt::format("walk-forward: test_days must be >= 1, got {}", test_days));
  if (jobs < 1) throw ConfigError("walk-forward: jobs must be >= 1");
  if (!include_neural && benchmarks.empty()) throw ConfigError("walk-forward: no strategies selected");
  for (const auto& g : benchmarks) {
    if (std::holds_alternative<fgp::Neural>(g)) {
      throw ConfigError("walk-forward: the neural strategy is trained per window, not a benchmark");
    }
    fgp::validate(g);
  }
  if (include_neural) train.validate();
}

int window_count(int n_rows, int train_days, int test_days) {
  if (test_days < 1) throw ConfigError("walk-forward: test_days must be >= 1");
  const int usable = n_rows - (train_days + test_days);
  return usable < 0 ? 0 : usable / test_days;
}

std::vector<WindowBounds> window_bounds(int n_rows, int train_days, int test_days) {
  const int k_total = window_count(n_rows, train_days, test_days);
  if (k_total < 1) {
    throw ConfigError(fmt::format(
        "walk-forward: {} rows give no windows; need at least {} rows (train {} + 2 x test {})",
        n_rows, train_days + 2 * test_days, train_days, test_days));
  }
  std::vector<WindowBounds> out;
  for (int k = 1; k <= k_total; ++k) {
    WindowBounds b;
    b.index = k;
    b.train_begin = (k - 1) * test_days;
    b.train_end = b.train_begin + train_days;
    b.test_begin = b.train_end;
    b.test_end = b.test_begin + test_days;
    out.push_back(b);
  }
  return out;
}

namespace {

struct WindowResult {
  std::vector<double> terminal;  // one per strategy, report order
  std::optional<icnn::ICNNParams> trained;
};

WindowResult run_window(const MarketWeightPath& path, const WalkForwardConfig& cfg,
                        const WindowBounds& b, const icnn::ICNNParams* warm) {
  WindowResult r;
  const MarketWeightPath test = path.slice(b.test_begin, b.test_end + 1);
  if (cfg.include_neural) {
    const MarketWeightPath train = path.slice(b.train_begin, b.train_end + 1);
    const icnn::ICNNParams theta0 =
        warm != nullptr ? *warm
                        : icnn::init(static_cast<int>(path.assets()), cfg.widths,
                                     cfg.train.seed + static_cast<std::uint64_t>(b.index));
    training::TrainResult trained = training::train_window(theta0, train, cfg.train);
    r.terminal.push_back(relative_wealth_neural(trained.params, cfg.train.grad_clip, test).terminal());
    r.trained = std::move(trained.params);
  }
  for (const auto& gen : cfg.benchmarks) {
    const auto fn = [&gen](const Eigen::VectorXd& x) { return fgp::classical_weights(gen, x); };
    r.terminal.push_back(relative_wealth(fn, test).terminal());
  }
  return r;
}

}  // namespace

WalkForwardReport walk_forward(const MarketWeightPath& path, const WalkForwardConfig& cfg) {
  cfg.validate();
  WalkForwardReport report;
  report.windows = window_bounds(static_cast<int>(path.days()), cfg.train_days, cfg.test_days);
  if (cfg.include_neural) report.strategies.push_back({fgp::name(fgp::Neural{}), {}});
  for (const auto& gen : cfg.benchmarks) report.strategies.push_back({fgp::name(gen), {}});

  const std::size_t k_total = report.windows.size();
  std::vector<WindowResult> results(k_total);

  const bool sequential = cfg.jobs == 1 || (cfg.include_neural && cfg.train.warm_start);
  if (sequential) {
    for (std::size_t k = 0; k < k_total; ++k) {
      const icnn::ICNNParams* warm =
          (cfg.train.warm_start && k > 0 && results[k - 1].trained) ? &*results[k - 1].trained : nullptr;
      results[k] = run_window(path, cfg, report.windows[k], warm);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(k_total);
    auto worker = [&]() {
      for (std::size_t k = next++; k < k_total; k = next++) {
        try {
          results[k] = run_window(path, cfg, report.windows[k], nullptr);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.jobs), k_total);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (std::size_t k = 0; k < k_total; ++k) {
    for (std::size_t s = 0; s < report.strategies.size(); ++s) {
      double v = results[k].terminal[s];
      if (cfg.cumulative && k > 0) v *= report.strategies[s].terminal.back();
      report.strategies[s].terminal.push_back(v);
    }
    if (results[k].trained) report.trained.push_back(std::move(*results[k].trained));
  }
  return report;
}

std::vector<SummaryRow> summarize(const WalkForwardReport& report) {
  std::vector<SummaryRow> rows;
  for (const auto& s : report.strategies) {
    if (s.terminal.empty()) throw ConfigError(fmt::format("summary: strategy {} has no windows", s.name));
    double total = 0.0;
    for (double v : s.terminal) total += std::log(v);
    rows.push_back({s.name, total / static_cast<double>(s.terminal.size()),
                    static_cast<int>(s.terminal.size())});
  }
  return rows;
}

}  // namespace nfgp::backtest
