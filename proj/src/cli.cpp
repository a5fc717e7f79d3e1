#include "nfgp/cli.hpp"

#include "nfgp/errors.hpp"
#include "nfgp/icnn.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>

namespace nfgp::cli {

namespace {

constexpr int kTradingDaysPerYear = 252;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string item;
  for (char c : s) {
    if (c == ',' || c == ' ') {
      if (!item.empty()) items.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  if (!item.empty()) items.push_back(item);
  return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError(fmt::format("setting '{}': cannot parse '{}'", key, text));
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(fmt::format("setting '{}': expected a boolean, got '{}'", key, text));
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(key, item));
  if (out.empty()) throw ConfigError(fmt::format("setting '{}': empty list", key));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"use_real", [](RunConfig& c, const auto& k, const auto& v) { c.use_real = parse_bool(k, v); }},
      {"n", [](RunConfig& c, const auto& k, const auto& v) { c.n = parse_number<int>(k, v); }},
      {"y", [](RunConfig& c, const auto& k, const auto& v) { c.years = parse_number<int>(k, v); }},
      {"p_vals", [](RunConfig& c, const auto& k, const auto& v) { c.p_vals = parse_list<double>(k, v); }},
      {"data", [](RunConfig& c, const auto&, const auto& v) { c.data_path = trim(v); }},
      {"url", [](RunConfig& c, const auto&, const auto& v) { c.fetch_url = trim(v); }},
      {"tickers", [](RunConfig& c, const auto&, const auto& v) { c.tickers = split_list(v); }},
      {"days", [](RunConfig& c, const auto& k, const auto& v) { c.days = parse_number<int>(k, v); }},
      {"seed", [](RunConfig& c, const auto& k, const auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"train_days", [](RunConfig& c, const auto& k, const auto& v) { c.train_days = parse_number<int>(k, v); }},
      {"test_days", [](RunConfig& c, const auto& k, const auto& v) { c.test_days = parse_number<int>(k, v); }},
      {"widths", [](RunConfig& c, const auto& k, const auto& v) { c.widths = parse_list<int>(k, v); }},
      {"epochs", [](RunConfig& c, const auto& k, const auto& v) { c.train.epochs = parse_number<int>(k, v); }},
      {"lr", [](RunConfig& c, const auto& k, const auto& v) { c.train.learning_rate = parse_number<double>(k, v); }},
      {"lambda", [](RunConfig& c, const auto& k, const auto& v) { c.train.lambda_l2 = parse_number<double>(k, v); }},
      {"lambda_pos", [](RunConfig& c, const auto& k, const auto& v) { c.train.lambda_pos = parse_number<double>(k, v); }},
      {"delta_pos", [](RunConfig& c, const auto& k, const auto& v) { c.train.delta_pos = parse_number<double>(k, v); }},
      {"grad_clip", [](RunConfig& c, const auto& k, const auto& v) { c.train.grad_clip = parse_number<double>(k, v); }},
      {"warm_start", [](RunConfig& c, const auto& k, const auto& v) { c.train.warm_start = parse_bool(k, v); }},
      {"jobs", [](RunConfig& c, const auto& k, const auto& v) { c.jobs = parse_number<int>(k, v); }},
      {"out", [](RunConfig& c, const auto&, const auto& v) { c.out = trim(v); }},
      {"svg", [](RunConfig& c, const auto& k, const auto& v) { c.svg = parse_bool(k, v); }},
      {"cumulative", [](RunConfig& c, const auto& k, const auto& v) { c.cumulative = parse_bool(k, v); }},
  };
  return table;
}

std::filesystem::path output_dir(const RunConfig& cfg) {
  std::filesystem::path dir = cfg.out.value_or("out");
  std::filesystem::create_directories(dir);
  return dir;
}

void print_summary(std::ostream& out, const std::vector<backtest::SummaryFileRow>& rows) {
  std::size_t width = 8;
  for (const auto& r : rows) width = std::max(width, r.strategy.size());
  out << fmt::format("{:<{}}  {:>24}  {:>4}\n", "Strategy", width, "(1/K) sum log V_Tk", "K");
  for (const auto& r : rows) {
    out << fmt::format("{:<{}}  {:>24}  {:>4}\n", r.strategy, width, r.avg_text, r.windows);
  }
}

std::vector<backtest::SummaryFileRow> as_file_rows(const std::vector<backtest::SummaryRow>& rows) {
  std::vector<backtest::SummaryFileRow> out;
  for (const auto& r : rows) {
    out.push_back({r.strategy, fmt::format("{:.17g}", r.avg_log_relative_return),
                   r.avg_log_relative_return, r.windows});
  }
  return out;
}

// --- subcommands ------------------------------------------------------------

void cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  GbmConfig gbm;
  gbm.n_assets = cfg.n;
  gbm.n_days = cfg.days;
  gbm.seed = cfg.seed;
  const PricePath prices = gbm_simulate(gbm);
  const std::filesystem::path path = cfg.out.value_or("prices.csv");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_prices_csv(path, prices);
  out << fmt::format("simulated {} days x {} assets (seed {}) -> {}\n", prices.days(), prices.assets(),
                     cfg.seed, path.string());
}

void cmd_fetch(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.fetch_url) throw ConfigError("fetch: --url is required");
  if (!cfg.out) throw ConfigError("fetch: --out is required");
  const std::filesystem::path path = *cfg.out;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  fetch_prices_csv(*cfg.fetch_url, path);
  const PricePath prices = load_prices_csv(path);
  out << fmt::format("fetched {} days x {} assets -> {}\n", prices.days(), prices.assets(), path.string());
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
  const MarketWeightPath market = load_market(cfg);
  if (market.days() < cfg.train_days + 1) {
    throw ConfigError(fmt::format("train: need {} rows, data has {}", cfg.train_days + 1, market.days()));
  }
  const MarketWeightPath window = market.slice(0, cfg.train_days + 1);
  training::TrainConfig train = cfg.train;
  train.seed = cfg.seed + kTrainSeedOffset;
  const auto theta0 = icnn::init(static_cast<int>(market.assets()), cfg.widths, train.seed + 1);
  const training::TrainResult result = training::train_window(theta0, window, train);

  const auto dir = output_dir(cfg);
  icnn::save(dir / "theta.json", result.params);
  training::write_training_log(dir / "training_log.csv", result.log);
  out << fmt::format("trained {} epochs on rows 0..{}; initial loss {:.10g}, best loss {:.10g}\n",
                     train.epochs, cfg.train_days, result.log.front().terms.total, result.best_loss);
  out << fmt::format("wrote {} and {}\n", (dir / "theta.json").string(),
                     (dir / "training_log.csv").string());
}

void cmd_backtest(const RunConfig& cfg, std::ostream& out) {
  const MarketWeightPath market = load_market(cfg);
  const backtest::WalkForwardConfig wf = cfg.walk_forward_config();
  const backtest::WalkForwardReport report = backtest::walk_forward(market, wf);
  const auto summary = backtest::summarize(report);

  const auto dir = output_dir(cfg);
  backtest::write_window_csv(dir / "windows.csv", report);
  backtest::write_summary_csv(dir / "summary.csv", summary);
  backtest::write_plot_data(dir / "plot_data.csv", report);
  if (cfg.svg) {
    backtest::write_svg(dir / "relative_wealth.svg", report,
                        fmt::format("Relative terminal wealth V_Tk ({} data, K = {})",
                                    cfg.use_real ? "real" : "synthetic", report.windows.size()));
  }
  out << fmt::format("walk-forward: {} rows, K = {} windows ({} train / {} test days)\n", market.days(),
                     report.windows.size(), cfg.train_days, cfg.test_days);
  print_summary(out, as_file_rows(summary));
  out << fmt::format("reports written to {}\n", dir.string());
}

void cmd_report(const RunConfig& cfg, const std::optional<std::string>& dir_arg, std::ostream& out) {
  const std::filesystem::path dir = dir_arg ? *dir_arg : cfg.out.value_or("out");
  const auto path = dir / "summary.csv";
  if (!std::filesystem::exists(path)) {
    throw DataError(fmt::format("report: no summary.csv in '{}'", dir.string()));
  }
  print_summary(out, backtest::read_summary_csv(path));
}

}  // namespace

// -----------------------------------------------------------------------------

void RunConfig::validate() const {
  if (n < 2) throw ConfigError(fmt::format("n must be >= 2, got {}", n));
  if (use_real && years < 1) throw ConfigError(fmt::format("y must be >= 1, got {}", years));
  for (double p : p_vals) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError(fmt::format("p_vals entries must lie in (0, 1), got {}", p));
  }
  if (days < 2) throw ConfigError(fmt::format("days must be >= 2, got {}", days));
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  for (int w : widths) {
    if (w < 1) throw ConfigError("widths must be positive");
  }
  train.validate();
}

backtest::WalkForwardConfig RunConfig::walk_forward_config() const {
  backtest::WalkForwardConfig wf;
  wf.train_days = train_days;
  wf.test_days = test_days;
  wf.benchmarks = {fgp::EqualWeight{}, fgp::Constant{}};
  for (double p : p_vals) wf.benchmarks.emplace_back(fgp::Diversity{p});
  wf.train = train;
  wf.train.seed = seed + kTrainSeedOffset;
  wf.widths = widths;
  wf.jobs = jobs;
  wf.cumulative = cumulative;
  return wf;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(fmt::format("unknown setting '{}'", key));
  it->second(cfg, key, value);
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected key = value", path.string(), line_no));
    }
    apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

const std::vector<FlagSpec>& flag_table() {
  static const std::vector<FlagSpec> table = {
      {"--use-real", "use_real", true, "use real price data instead of simulated GBM paths"},
      {"--n", "n", false, "number of simulated assets"},
      {"--years", "y", false, "years of real history to use (252 trading days each)"},
      {"--p-vals", "p_vals", false, "diversity-weighted benchmark exponents, comma separated"},
      {"--data", "data", false, "price CSV (date,<ticker>,...)"},
      {"--url", "url", false, "HTTP(S) URL of a price CSV"},
      {"--tickers", "tickers", false, "restrict the CSV to these tickers, comma separated"},
      {"--days", "days", false, "number of simulated days"},
      {"--seed", "seed", false, "master seed"},
      {"--train-days", "train_days", false, "training window length"},
      {"--test-days", "test_days", false, "out-of-sample window length"},
      {"--widths", "widths", false, "hidden layer widths, comma separated"},
      {"--epochs", "epochs", false, "Adam steps per training window"},
      {"--lr", "lr", false, "Adam learning rate"},
      {"--lambda", "lambda", false, "weight-norm penalty coefficient"},
      {"--lambda-pos", "lambda_pos", false, "positivity hinge coefficient"},
      {"--delta-pos", "delta_pos", false, "positivity hinge margin"},
      {"--grad-clip", "grad_clip", false, "cap on |d log G / dx_i|"},
      {"--warm-start", "warm_start", true, "start each window from the previous window's network"},
      {"--jobs", "jobs", false, "worker threads over walk-forward windows"},
      {"--out", "out", false, "output directory (simulate/fetch: output file)"},
      {"--svg", "svg", true, "also write an SVG chart of V_Tk"},
      {"--cumulative", "cumulative", true, "chain V_Tk across windows"},
  };
  return table;
}

MarketWeightPath load_market(const RunConfig& cfg) {
  cfg.validate();
  const std::optional<std::vector<std::string>> tickers =
      cfg.tickers.empty() ? std::nullopt : std::optional(cfg.tickers);
  if (cfg.use_real) {
    std::filesystem::path path;
    if (cfg.data_path) {
      path = *cfg.data_path;
    } else if (cfg.fetch_url) {
      path = output_dir(cfg) / "prices.csv";
      fetch_prices_csv(*cfg.fetch_url, path);
    } else {
      throw ConfigError("use_real requires --data or --url");
    }
    PricePath prices = load_prices_csv(path, tickers);
    const Eigen::Index keep = static_cast<Eigen::Index>(cfg.years) * kTradingDaysPerYear;
    if (prices.days() > keep) prices = prices.slice(prices.days() - keep, prices.days());
    return normalize_to_weights(prices);
  }
  if (cfg.data_path) return normalize_to_weights(load_prices_csv(*cfg.data_path, tickers));
  GbmConfig gbm;
  gbm.n_assets = cfg.n;
  gbm.n_days = cfg.days;
  gbm.seed = cfg.seed;
  return normalize_to_weights(gbm_simulate(gbm));
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural functionally generated portfolios: simulate, train and backtest"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::map<std::string, std::string> given;
  std::optional<std::string> report_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option_function<std::string>("--config", [&](const std::string& v) { config_path = v; },
                                          "key=value configuration file");
    for (const auto& spec : flag_table()) {
      const std::string key = spec.key;
      if (spec.is_switch) {
        sub->add_flag_callback(spec.flag, [&given, key]() { given[key] = "true"; }, spec.help);
      } else {
        sub->add_option_function<std::string>(
            spec.flag, [&given, key](const std::string& v) { given[key] = v; }, spec.help);
      }
    }
  };

  CLI::App* simulate = app.add_subcommand("simulate", "write a simulated GBM price CSV");
  CLI::App* fetch = app.add_subcommand("fetch", "download a price CSV over HTTP(S)");
  CLI::App* train = app.add_subcommand("train", "train the network on the first window");
  CLI::App* backtest = app.add_subcommand("backtest", "walk-forward evaluation against benchmarks");
  CLI::App* report = app.add_subcommand("report", "print the summary table of a backtest directory");
  for (CLI::App* sub : {simulate, fetch, train, backtest, report}) add_common(sub);
  report->add_option_function<std::string>("dir", [&](const std::string& v) { report_dir = v; },
                                           "directory holding summary.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    RunConfig cfg;
    if (config_path) apply_config_file(cfg, *config_path);
    for (const auto& [key, value] : given) apply_setting(cfg, key, value);
    cfg.validate();

    if (simulate->parsed()) {
      cmd_simulate(cfg, out);
    } else if (fetch->parsed()) {
      cmd_fetch(cfg, out);
    } else if (train->parsed()) {
      cmd_train(cfg, out);
    } else if (backtest->parsed()) {
      cmd_backtest(cfg, out);
    } else if (report->parsed()) {
      cmd_report(cfg, report_dir, out);
    }
    return kOk;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DimensionError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace nfgp::cli
