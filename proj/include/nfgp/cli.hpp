#pragma once

#include "nfgp/backtest.hpp"
#include "nfgp/market_data.hpp"
#include "nfgp/training.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace nfgp::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericError = 4,
};

// Sub-seed offsets from the master seed.
inline constexpr std::uint64_t kTrainSeedOffset = 1000;

struct RunConfig {
  bool use_real = false;
  int n = 5;
  int years = 5;
  std::vector<double> p_vals{0.3, 0.5, 0.8};
  std::optional<std::string> data_path;
  std::optional<std::string> fetch_url;
  std::vector<std::string> tickers;
  int days = 1000;
  std::uint64_t seed = 42;
  int train_days = 200;
  int test_days = 20;
  std::vector<int> widths{64, 64};
  training::TrainConfig train;
  int jobs = 1;
  std::optional<std::string> out;
  bool svg = false;
  bool cumulative = false;

  void validate() const;
  backtest::WalkForwardConfig walk_forward_config() const;
};

/// Applies one `key = value` setting; keys follow the config-file names
/// (use_real, n, y, p_vals, ...). Throws ConfigError on unknown keys or
/// unparsable values.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Flat key=value document; '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

struct FlagSpec {
  const char* flag;        // command-line name, e.g. "--years"
  const char* key;         // config-file key, e.g. "y"
  bool is_switch;          // takes no value
  const char* help;
};

/// Every command-line setting with its config-file equivalent.
const std::vector<FlagSpec>& flag_table();

/// Market weights for a run: real CSV (last 252*y rows), a given CSV, or GBM.
MarketWeightPath load_market(const RunConfig& cfg);

/// Entry point shared by the executable and tests. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nfgp::cli
