#include "nfgp/cli.hpp"
#include "nfgp/errors.hpp"
#include "nfgp/icnn.hpp"

#include <httplib.h>

#include <gtest/gtest.h>

#include <fmt/format.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

namespace cli = nfgp::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "nfgp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static int counter = 0;
    dir_ = fs::temp_directory_path() / ("nfgp_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

const char* kSmallRun[] = {"--days", "90", "--train-days", "30", "--test-days", "10", "--epochs", "3", "--widths", "4,4"};

std::vector<std::string> small_run(std::vector<std::string> head) {
  for (const char* a : kSmallRun) head.emplace_back(a);
  return head;
}

}  // namespace

TEST(CliConfig, EveryFlagHasAConfigKey) {
  std::set<std::string> keys;
  for (const auto& spec : cli::flag_table()) {
    EXPECT_EQ(std::string(spec.flag).rfind("--", 0), 0u);
    keys.insert(spec.key);
  }
  for (const char* required : {"use_real", "n", "y", "p_vals", "train_days", "test_days", "epochs", "lr", "lambda",
                               "seed", "jobs", "out", "svg"}) {
    EXPECT_TRUE(keys.count(required)) << required;
  }
  std::set<std::string> flags;
  for (const auto& spec : cli::flag_table()) flags.insert(spec.flag);
  for (const char* required : {"--use-real", "--n", "--years", "--p-vals", "--train-days", "--test-days", "--epochs",
                               "--lr", "--lambda", "--seed", "--jobs", "--out", "--svg"}) {
    EXPECT_TRUE(flags.count(required)) << required;
  }
}

TEST(CliConfig, ApplySettingParsesValues) {
  cli::RunConfig cfg;
  cli::apply_setting(cfg, "use_real", "true");
  cli::apply_setting(cfg, "y", "3");
  cli::apply_setting(cfg, "p_vals", "0.2, 0.4");
  cli::apply_setting(cfg, "widths", "8,8,8");
  cli::apply_setting(cfg, "lr", "0.01");
  cli::apply_setting(cfg, "tickers", "AAPL,MSFT");
  EXPECT_TRUE(cfg.use_real);
  EXPECT_EQ(cfg.years, 3);
  EXPECT_EQ(cfg.p_vals, (std::vector<double>{0.2, 0.4}));
  EXPECT_EQ(cfg.widths, (std::vector<int>{8, 8, 8}));
  EXPECT_EQ(cfg.train.learning_rate, 0.01);
  EXPECT_EQ(cfg.tickers, (std::vector<std::string>{"AAPL", "MSFT"}));
  EXPECT_THROW(cli::apply_setting(cfg, "bogus", "1"), nfgp::ConfigError);
  EXPECT_THROW(cli::apply_setting(cfg, "n", "five"), nfgp::ConfigError);
  EXPECT_THROW(cli::apply_setting(cfg, "svg", "maybe"), nfgp::ConfigError);
}

TEST(CliConfig, ValidateInvariants) {
  cli::RunConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.n = 1;
  EXPECT_THROW(cfg.validate(), nfgp::ConfigError);
  cfg = {};
  cfg.p_vals = {0.5, 1.0};
  EXPECT_THROW(cfg.validate(), nfgp::ConfigError);
  cfg = {};
  cfg.use_real = true;
  cfg.years = 0;
  EXPECT_THROW(cfg.validate(), nfgp::ConfigError);
  const auto wf = cli::RunConfig{}.walk_forward_config();
  EXPECT_EQ(wf.benchmarks.size(), 5u);
  EXPECT_EQ(wf.train.seed, 42u + cli::kTrainSeedOffset);
}

TEST_F(CliTest, ConfigFileAndFlagOverride) {
  std::ofstream(path("run.cfg")) << "# comment line\nn = 3\ndays = 60   # trailing comment\nseed=5\n\n";
  auto r = run({"simulate", "--config", path("run.cfg"), "--out", path("a.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::string body = slurp(path("a.csv"));
  EXPECT_EQ(body.substr(0, body.find('\n')), "date,S1,S2,S3");
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 61);

  r = run({"simulate", "--config", path("run.cfg"), "--n", "4", "--out", path("b.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  body = slurp(path("b.csv"));
  EXPECT_EQ(body.substr(0, body.find('\n')), "date,S1,S2,S3,S4");

  std::ofstream(path("bad.cfg")) << "n 3\n";
  EXPECT_EQ(run({"simulate", "--config", path("bad.cfg")}).code, cli::kConfigError);
  std::ofstream(path("unknown.cfg")) << "colour = red\n";
  EXPECT_EQ(run({"simulate", "--config", path("unknown.cfg")}).code, cli::kConfigError);
  EXPECT_EQ(run({"simulate", "--config", path("missing.cfg")}).code, cli::kConfigError);
}

TEST_F(CliTest, SimulateShapeDeterminismAndGuard) {
  auto r = run({"simulate", "--n", "5", "--days", "1000", "--seed", "42", "--out", path("p1.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("seed 42"), std::string::npos);
  const std::string body = slurp(path("p1.csv"));
  EXPECT_EQ(std::count(body.begin(), body.end(), '\n'), 1001);  // header + 1000 rows
  EXPECT_EQ(body.substr(0, body.find('\n')), "date,S1,S2,S3,S4,S5");
  ASSERT_EQ(run({"simulate", "--n", "5", "--days", "1000", "--seed", "42", "--out", path("p2.csv")}).code, 0);
  EXPECT_EQ(body, slurp(path("p2.csv")));

  EXPECT_EQ(run({"simulate", "--days", "1"}).code, cli::kConfigError);
  EXPECT_EQ(run({"simulate", "--n", "1"}).code, cli::kConfigError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kConfigError);
  EXPECT_EQ(run({}).code, cli::kConfigError);
  EXPECT_EQ(run({"simulate", "--no-such-flag"}).code, cli::kConfigError);
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST_F(CliTest, TrainWritesThetaAndLog) {
  auto r = run({"train", "--days", "60", "--train-days", "40", "--epochs", "1", "--widths", "4", "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string log = slurp(path("t/training_log.csv"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 2);  // header + one epoch

  r = run({"train", "--days", "60", "--train-days", "40", "--epochs", "15", "--widths", "4", "--out", path("t")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto theta = nfgp::icnn::load(path("t/theta.json"));
  EXPECT_EQ(theta.widths, std::vector<int>{4});
  const Eigen::VectorXd probe = Eigen::VectorXd::Constant(5, 0.2);
  EXPECT_NEAR(nfgp::icnn::evaluate_f(nfgp::icnn::load(path("t/theta.json")), probe),
              nfgp::icnn::evaluate_f(theta, probe), 1e-15);

  std::ifstream in(path("t/training_log.csv"));
  std::string line;
  std::getline(in, line);
  double first = 0.0, best = 1e300;
  bool have_first = false;
  while (std::getline(in, line)) {
    const auto a = line.find(',');
    const double loss = std::stod(line.substr(a + 1, line.find(',', a + 1) - a - 1));
    if (!have_first) first = loss, have_first = true;
    best = std::min(best, loss);
  }
  EXPECT_LE(best, first);

  EXPECT_EQ(run({"train", "--days", "30", "--train-days", "40"}).code, cli::kConfigError);
  EXPECT_EQ(run({"train", "--epochs", "0"}).code, cli::kConfigError);
}

TEST_F(CliTest, BacktestReportRoundTrip) {
  auto r = run(small_run({"backtest", "--out", path("bt"), "--svg"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("bt/windows.csv")));
  EXPECT_TRUE(fs::exists(path("bt/plot_data.csv")));
  EXPECT_TRUE(fs::exists(path("bt/relative_wealth.svg")));
  const std::string summary = slurp(path("bt/summary.csv"));
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 7);  // header + 6 strategies

  r = run({"report", path("bt")});
  ASSERT_EQ(r.code, 0) << r.err;
  // Printed averages are the stored tokens.
  std::istringstream rows(summary);
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    const auto a = line.find(','), b = line.rfind(',');
    EXPECT_NE(r.out.find(line.substr(0, a)), std::string::npos);
    EXPECT_NE(r.out.find(line.substr(a + 1, b - a - 1)), std::string::npos);
    ++n;
  }
  EXPECT_EQ(n, 6);

  fs::create_directories(path("empty"));
  EXPECT_EQ(run({"report", path("empty")}).code, cli::kDataError);
}

TEST_F(CliTest, BacktestDeterministicAcrossJobs) {
  ASSERT_EQ(run(small_run({"backtest", "--out", path("j1")})).code, 0);
  ASSERT_EQ(run(small_run({"backtest", "--out", path("j4"), "--jobs", "4"})).code, 0);
  EXPECT_EQ(slurp(path("j1/summary.csv")), slurp(path("j4/summary.csv")));
  EXPECT_EQ(slurp(path("j1/windows.csv")), slurp(path("j4/windows.csv")));
}

TEST_F(CliTest, BacktestErrorsMapToExitCodes) {
  EXPECT_EQ(run({"backtest", "--days", "220"}).code, cli::kConfigError);
  EXPECT_EQ(run({"backtest", "--p-vals", "0.5,2"}).code, cli::kConfigError);
  EXPECT_EQ(run({"backtest", "--use-real"}).code, cli::kConfigError);
  EXPECT_EQ(run({"backtest", "--use-real", "--data", path("nope.csv")}).code, cli::kDataError);
  std::ofstream(path("zero.csv")) << "date,A,B\n2024-01-02,1,2\n2024-01-03,0,2\n";
  EXPECT_EQ(run({"backtest", "--use-real", "--data", path("zero.csv")}).code, cli::kDataError);
}

TEST_F(CliTest, RealDataKeepsLastYears) {
  // 300 trading days on disk, one year requested -> 252 rows -> K = 1.
  std::ofstream csv(path("real.csv"));
  csv << "date,AAA,BBB,CCC\n";
  for (int t = 0; t < 300; ++t) {
    csv << fmt::format("{:04d}-{:02d}-{:02d},{},{},{}\n", 2000 + t / 300, 1 + (t / 28) % 12, 1 + t % 28,
                       10.0 + 0.01 * t, 20.0 - 0.01 * t, 15.0 + std::sin(t * 0.1));
  }
  csv.close();
  cli::RunConfig cfg;
  cfg.use_real = true;
  cfg.years = 1;
  cfg.data_path = path("real.csv");
  const auto market = cli::load_market(cfg);
  EXPECT_EQ(market.days(), 252);
  EXPECT_EQ(market.dates().front(), "2000-02-21");
  cfg.tickers = {"CCC", "AAA"};
  EXPECT_EQ(cli::load_market(cfg).assets(), 2);

  const auto r = run({"backtest", "--use-real", "--years", "1", "--data", path("real.csv"), "--epochs", "2",
                      "--widths", "4", "--out", path("real_out")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("K = 1 windows"), std::string::npos) << r.out;
}

TEST_F(CliTest, FetchFromLoopbackServer) {
  httplib::Server server;
  const std::string body = "date,AAA,BBB\n2024-01-02,10,20\n2024-01-03,11,19\n2024-01-04,12,18\n";
  server.Get("/prices.csv", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(body, "text/csv");
  });
  server.Get("/junk.csv", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("this is not a price file", "text/csv");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  auto r = run({"fetch", "--url", base + "/prices.csv", "--out", path("fetched.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("fetched.csv")), body);

  EXPECT_EQ(run({"fetch", "--url", base + "/missing.csv", "--out", path("m.csv")}).code, cli::kDataError);
  EXPECT_FALSE(fs::exists(path("m.csv")));
  EXPECT_EQ(run({"fetch", "--url", base + "/junk.csv", "--out", path("j.csv")}).code, cli::kDataError);
  EXPECT_FALSE(fs::exists(path("j.csv")));
  EXPECT_FALSE(fs::exists(path("j.csv.part")));
  EXPECT_EQ(run({"fetch", "--url", "ftp://example.com/x.csv", "--out", path("x.csv")}).code, cli::kConfigError);
  EXPECT_EQ(run({"fetch", "--out", path("x.csv")}).code, cli::kConfigError);

  server.stop();
  thread.join();
}
