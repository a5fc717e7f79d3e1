#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nfgp {

/// Capitalisations over time. Rows are trading days, columns are assets.
///
/// Dates are either integer day indices (synthetic data) or ISO-8601
/// `YYYY-MM-DD` strings (real data). Construction validates positivity,
/// shape and strictly increasing dates and throws DataError otherwise.
class PricePath {
 public:
  PricePath(std::vector<std::string> dates, Eigen::MatrixXd prices,
            std::vector<std::string> tickers);

  const std::vector<std::string>& dates() const { return dates_; }
  const Eigen::MatrixXd& prices() const { return prices_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  Eigen::Index days() const { return prices_.rows(); }
  Eigen::Index assets() const { return prices_.cols(); }

  /// Rows [begin, end).
  PricePath slice(Eigen::Index begin, Eigen::Index end) const;

 private:
  std::vector<std::string> dates_;
  Eigen::MatrixXd prices_;
  std::vector<std::string> tickers_;
};

/// Market weights: every row lies in the open unit simplex.
class MarketWeightPath {
 public:
  static constexpr double kRowSumTolerance = 1e-12;
  static constexpr double kWeightFloor = 1e-12;

  MarketWeightPath(std::vector<std::string> dates, Eigen::MatrixXd weights,
                   std::vector<std::string> tickers);

  const std::vector<std::string>& dates() const { return dates_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  const std::vector<std::string>& tickers() const { return tickers_; }
  Eigen::Index days() const { return weights_.rows(); }
  Eigen::Index assets() const { return weights_.cols(); }
  Eigen::VectorXd row(Eigen::Index t) const { return weights_.row(t).transpose(); }

  /// Rows [begin, end).
  MarketWeightPath slice(Eigen::Index begin, Eigen::Index end) const;

 private:
  std::vector<std::string> dates_;
  Eigen::MatrixXd weights_;
  std::vector<std::string> tickers_;
};

struct GbmConfig {
  int n_assets = 5;
  int n_days = 1000;
  double dt = 1.0 / 252.0;
  std::pair<double, double> drift_range{-0.05, 0.15};
  std::pair<double, double> vol_range{0.10, 0.40};
  std::uint64_t seed = 42;
  double initial_price = 1.0;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

/// Independent geometric Brownian motions, one per asset.
///
/// Draw order (part of the reproducibility contract): all drifts, then all
/// volatilities, then for each day t = 1..n_days-1 one normal per asset in
/// column order. Row 0 holds `initial_price` for every asset.
PricePath gbm_simulate(const GbmConfig& cfg);

/// Divides every row by its sum. Entries below the 1e-12 floor are lifted
/// to the floor and the row is renormalised.
MarketWeightPath normalize_to_weights(const PricePath& prices);

/// Reads a wide CSV (`date,<ticker1>,...`). Empty cells are forward-filled
/// from the previous row; leading rows that cannot be filled are dropped.
/// When `tickers` is given, columns are restricted to those labels in the
/// requested order.
PricePath load_prices_csv(const std::filesystem::path& path,
                          const std::optional<std::vector<std::string>>& tickers = std::nullopt);

/// Writes `prices` in the same wide format, values printed with 17
/// significant digits.
void write_prices_csv(const std::filesystem::path& path, const PricePath& prices);

/// Downloads `url` over HTTP(S) to `out`. The body must parse as a price CSV.
void fetch_prices_csv(const std::string& url, const std::filesystem::path& out);

}  // namespace nfgp
