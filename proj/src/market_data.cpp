#include "nfgp/market_data.hpp"

#include "nfgp/errors.hpp"
#include "nfgp/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace nfgp {

namespace {

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t start = (s[0] == '-') ? 1 : 0;
  if (start == s.size()) return false;
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(start), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

void validate_dates(const std::vector<std::string>& dates) {
  const bool numeric = std::all_of(dates.begin(), dates.end(), is_integer);
  const bool iso = !numeric && std::all_of(dates.begin(), dates.end(), is_iso_date);
  if (!numeric && !iso) {
    throw DataError("dates must all be integer day indices or all ISO-8601 YYYY-MM-DD");
  }
  for (std::size_t t = 1; t < dates.size(); ++t) {
    const bool increasing = numeric ? std::stoll(dates[t - 1]) < std::stoll(dates[t])
                                    : dates[t - 1] < dates[t];
    if (!increasing) {
      throw DataError(fmt::format("dates not strictly increasing at row {} ('{}' after '{}')", t,
                                  dates[t], dates[t - 1]));
    }
  }
}

void validate_shape(const std::vector<std::string>& dates, const Eigen::MatrixXd& values,
                    const std::vector<std::string>& tickers, const char* what) {
  if (values.rows() < 2) throw DataError(fmt::format("{}: need at least 2 rows, got {}", what, values.rows()));
  if (values.cols() < 2) throw DataError(fmt::format("{}: need at least 2 assets, got {}", what, values.cols()));
  if (static_cast<Eigen::Index>(dates.size()) != values.rows()) {
    throw DataError(fmt::format("{}: {} dates for {} rows", what, dates.size(), values.rows()));
  }
  if (static_cast<Eigen::Index>(tickers.size()) != values.cols()) {
    throw DataError(fmt::format("{}: {} tickers for {} columns", what, tickers.size(), values.cols()));
  }
}

std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    const auto first = c.find_first_not_of(" \t");
    const auto last = c.find_last_not_of(" \t");
    c = first == std::string::npos ? std::string() : c.substr(first, last - first + 1);
  }
  return cells;
}

std::vector<std::string> slice_dates(const std::vector<std::string>& dates, Eigen::Index begin,
                                     Eigen::Index end) {
  return {dates.begin() + begin, dates.begin() + end};
}

void check_range(Eigen::Index begin, Eigen::Index end, Eigen::Index rows) {
  if (begin < 0 || end > rows || end - begin < 2) {
    throw ConfigError(fmt::format("slice [{}, {}) invalid for {} rows (need >= 2 rows)", begin, end, rows));
  }
}

}  // namespace

PricePath::PricePath(std::vector<std::string> dates, Eigen::MatrixXd prices,
                     std::vector<std::string> tickers)
    : dates_(std::move(dates)), prices_(std::move(prices)), tickers_(std::move(tickers)) {
  validate_shape(dates_, prices_, tickers_, "price path");
  for (Eigen::Index t = 0; t < prices_.rows(); ++t) {
    for (Eigen::Index i = 0; i < prices_.cols(); ++i) {
      const double v = prices_(t, i);
      if (!std::isfinite(v) || v <= 0.0) {
        throw DataError(fmt::format("price path: non-positive price {} at row {} column {} ({})", v,
                                    t, i, tickers_[static_cast<std::size_t>(i)]));
      }
    }
  }
  validate_dates(dates_);
}

PricePath PricePath::slice(Eigen::Index begin, Eigen::Index end) const {
  check_range(begin, end, days());
  return PricePath(slice_dates(dates_, begin, end), prices_.middleRows(begin, end - begin), tickers_);
}

MarketWeightPath::MarketWeightPath(std::vector<std::string> dates, Eigen::MatrixXd weights,
                                   std::vector<std::string> tickers)
    : dates_(std::move(dates)), weights_(std::move(weights)), tickers_(std::move(tickers)) {
  validate_shape(dates_, weights_, tickers_, "market weights");
  for (Eigen::Index t = 0; t < weights_.rows(); ++t) {
    const auto row = weights_.row(t);
    if (!row.allFinite() || row.minCoeff() < kWeightFloor) {
      throw DataError(fmt::format("market weights: row {} has an entry below {}", t, kWeightFloor));
    }
    if (std::abs(row.sum() - 1.0) > kRowSumTolerance) {
      throw DataError(fmt::format("market weights: row {} sums to {:.17g}", t, row.sum()));
    }
  }
}

MarketWeightPath MarketWeightPath::slice(Eigen::Index begin, Eigen::Index end) const {
  check_range(begin, end, days());
  return MarketWeightPath(slice_dates(dates_, begin, end), weights_.middleRows(begin, end - begin),
                          tickers_);
}

void GbmConfig::validate() const {
  if (n_assets < 2) throw ConfigError(fmt::format("gbm: need at least 2 assets, got {}", n_assets));
  if (n_days < 2) throw ConfigError(fmt::format("gbm: need at least 2 days, got {}", n_days));
  if (!(dt > 0.0)) throw ConfigError("gbm: dt must be positive");
  if (!(drift_range.first <= drift_range.second)) throw ConfigError("gbm: drift range is not ordered");
  if (!(vol_range.first > 0.0)) throw ConfigError("gbm: volatility lower bound must be positive");
  if (!(vol_range.first <= vol_range.second)) throw ConfigError("gbm: volatility range is not ordered");
  if (!(initial_price > 0.0)) throw ConfigError("gbm: initial price must be positive");
}

PricePath gbm_simulate(const GbmConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int n = cfg.n_assets;
  Eigen::VectorXd drift(n);
  Eigen::VectorXd vol(n);
  for (int i = 0; i < n; ++i) drift[i] = rng.uniform(cfg.drift_range.first, cfg.drift_range.second);
  for (int i = 0; i < n; ++i) vol[i] = rng.uniform(cfg.vol_range.first, cfg.vol_range.second);

  const double sqrt_dt = std::sqrt(cfg.dt);
  Eigen::MatrixXd prices(cfg.n_days, n);
  prices.row(0).setConstant(cfg.initial_price);
  Eigen::VectorXd log_price = Eigen::VectorXd::Constant(n, std::log(cfg.initial_price));
  for (int t = 1; t < cfg.n_days; ++t) {
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      log_price[i] += (drift[i] - 0.5 * vol[i] * vol[i]) * cfg.dt + vol[i] * sqrt_dt * z;
      prices(t, i) = std::exp(log_price[i]);
    }
  }

  std::vector<std::string> dates;
  dates.reserve(static_cast<std::size_t>(cfg.n_days));
  for (int t = 0; t < cfg.n_days; ++t) dates.push_back(std::to_string(t));
  std::vector<std::string> tickers;
  for (int i = 0; i < n; ++i) tickers.push_back(fmt::format("S{}", i + 1));
  return PricePath(std::move(dates), std::move(prices), std::move(tickers));
}

MarketWeightPath normalize_to_weights(const PricePath& p) {
  const Eigen::MatrixXd& prices = p.prices();
  Eigen::MatrixXd weights(prices.rows(), prices.cols());
  for (Eigen::Index t = 0; t < prices.rows(); ++t) {
    for (Eigen::Index i = 0; i < prices.cols(); ++i) {
      if (!(prices(t, i) > 0.0)) {
        throw DataError(fmt::format("normalize: non-positive price at row {} column {}", t, i));
      }
    }
    Eigen::RowVectorXd row = prices.row(t) / prices.row(t).sum();
    if (row.minCoeff() < MarketWeightPath::kWeightFloor) {
      // Pin tiny entries at the floor and shrink the rest to keep the sum at 1.
      const auto tiny = (row.array() < MarketWeightPath::kWeightFloor);
      const double pinned = static_cast<double>(tiny.count()) * MarketWeightPath::kWeightFloor;
      const double rest = tiny.select(0.0, row.array()).sum();
      row = tiny.select(MarketWeightPath::kWeightFloor, row.array() * ((1.0 - pinned) / rest)).matrix();
    }
    weights.row(t) = row;
  }
  return MarketWeightPath(p.dates(), std::move(weights), p.tickers());
}

PricePath load_prices_csv(const std::filesystem::path& path,
                          const std::optional<std::vector<std::string>>& tickers) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open price file '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line)) throw DataError(fmt::format("'{}': empty file", path.string()));
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "date") {
    throw DataError(fmt::format("'{}': header must be date,<ticker1>,<ticker2>,...", path.string()));
  }

  std::vector<std::size_t> columns;
  std::vector<std::string> labels;
  if (tickers) {
    for (const auto& t : *tickers) {
      auto it = std::find(header.begin() + 1, header.end(), t);
      if (it == header.end()) {
        throw DataError(fmt::format("'{}': unknown ticker '{}'", path.string(), t));
      }
      columns.push_back(static_cast<std::size_t>(it - header.begin()));
      labels.push_back(t);
    }
  } else {
    for (std::size_t c = 1; c < header.size(); ++c) {
      columns.push_back(c);
      labels.push_back(header[c]);
    }
  }

  const std::size_t n = columns.size();
  std::vector<std::string> dates;
  std::vector<double> values;
  std::vector<double> last(n, 0.0);
  std::vector<bool> seen(n, false);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("'{}' line {}: expected {} cells, got {}", path.string(), line_no,
                                  header.size(), cells.size()));
    }
    std::vector<double> row(n);
    bool complete = true;
    for (std::size_t k = 0; k < n; ++k) {
      const std::string& cell = cells[columns[k]];
      if (cell.empty()) {
        if (seen[k]) {
          row[k] = last[k];
        } else {
          complete = false;
        }
        continue;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError(fmt::format("'{}' line {} column '{}': cannot parse '{}'", path.string(),
                                    line_no, labels[k], cell));
      }
      if (!std::isfinite(v) || v <= 0.0) {
        throw DataError(fmt::format("'{}' line {} column '{}': price {} is not positive",
                                    path.string(), line_no, labels[k], cell));
      }
      row[k] = v;
      last[k] = v;
      seen[k] = true;
    }
    if (!complete) continue;  // leading rows before every column has a value
    dates.push_back(cells[0]);
    values.insert(values.end(), row.begin(), row.end());
  }

  if (dates.size() < 2) {
    throw DataError(fmt::format("'{}': fewer than 2 usable rows", path.string()));
  }
  Eigen::MatrixXd prices(static_cast<Eigen::Index>(dates.size()), static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < dates.size(); ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      prices(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) = values[t * n + k];
    }
  }
  return PricePath(std::move(dates), std::move(prices), std::move(labels));
}

void write_prices_csv(const std::filesystem::path& path, const PricePath& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
  out << "date";
  for (const auto& t : p.tickers()) out << ',' << t;
  out << '\n';
  for (Eigen::Index t = 0; t < p.days(); ++t) {
    out << p.dates()[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < p.assets(); ++i) out << ',' << fmt::format("{:.17g}", p.prices()(t, i));
    out << '\n';
  }
  if (!out) throw DataError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace nfgp
