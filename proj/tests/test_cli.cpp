#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "candlerl/cli.hpp"
#include "support/fixtures.hpp"

using namespace candlerl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int code;
  std::string out;
  std::string err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "candlerl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

std::string to_csv(const OhlcSeries& s) {
  std::ostringstream out;
  out << "Date,Open,High,Low,Close,Adj Close,Volume\n";
  for (const auto& c : s.candles)
    out << c.date.iso() << ',' << c.open << ',' << c.high << ',' << c.low << ',' << c.close << ',' << c.close
        << ",1000\n";
  return out.str();
}

constexpr std::size_t kHammerDay = 90;

/// Steady decline with two-unit bodies, a long-lower-shadow Hammer on day 90,
/// then a one-unit-per-day recovery.
OhlcSeries planted_series() {
  std::vector<Candle> cs;
  double prev = 302;
  for (std::size_t i = 0; i < 120; ++i) {
    double o = prev, c, h, l;
    if (i < kHammerDay) {
      c = o - 2;
      h = o + 0.3;
      l = c - 0.3;
    } else if (i == kHammerDay) {
      c = o + 4;
      h = c + 0.5;
      l = o - 10;
    } else {
      c = o + 1;
      h = c + 0.3;
      l = o - 0.3;
    }
    cs.push_back(fixtures::candle(o, h, l, c, i));
    prev = c;
  }
  return fixtures::series_of(std::move(cs));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("candlerl_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    data_ = (dir_ / "PLANT.csv").string();
    write(data_, to_csv(planted_series()));
  }
  void TearDown() override { fs::remove_all(dir_); }

  [[nodiscard]] std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// Arguments shared by train/backtest on the planted series.
  [[nodiscard]] std::vector<std::string> common(const std::string& sub, const std::string& out) const {
    return {sub,
            "--data_path=" + data_,
            "--seed=7",
            "--split.begin=2020-01-01",
            "--split.split_point=2020-02-20",
            "--split.end=2020-12-31",
            "--output_dir=" + path(out)};
  }

  fs::path dir_;
  std::string data_;
};

std::string cell(const std::vector<std::vector<std::string>>& rows, const std::string& date, std::size_t col) {
  for (const auto& r : rows)
    if (!r.empty() && r[0] == date) return r.at(col);
  return "";
}

}  // namespace

TEST_F(CliTest, PlantedSeriesHoldsAHammerInADowntrend) {
  const auto s = planted_series();
  const auto window = std::span<const Candle>(s.candles).subspan(kHammerDay, 1);
  EXPECT_TRUE(detect_patterns(window, PatternParams{}, max_body_length(s)).contains(PatternId::Hammer));
  const auto train_body = max_body_length(OhlcSeries{"x", {s.candles.begin(), s.candles.begin() + 50}});
  EXPECT_TRUE(detect_patterns(window, PatternParams{}, train_body).contains(PatternId::Hammer));
  EXPECT_EQ(trend_series(s.closes(), TrendParams{})[kHammerDay], Trend::Downtrend);
}

TEST_F(CliTest, ScanReportsPlantedHammer) {
  const auto r = run_cli({"scan", "--data_path=" + data_, "-o", path("scan.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(path("scan.csv"));
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"date", "pattern_id", "trend", "signal"}));
  const std::string date = fixtures::day(kHammerDay).iso();
  bool found = false;
  for (const auto& row : rows)
    if (row[0] == date && row[1] == "Hammer") {
      found = true;
      EXPECT_EQ(row[2], "downtrend");
      EXPECT_EQ(row[3], "Buy");
    }
  EXPECT_TRUE(found);

  const auto again = run_cli({"scan", "--data_path=" + data_});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(again.out, slurp(path("scan.csv")));
}

TEST_F(CliTest, ScanOfHeaderOnlyFileIsDataError) {
  write(path("empty.csv"), "Date,Open,High,Low,Close,Adj Close,Volume\n");
  const auto r = run_cli({"scan", "--data_path=" + path("empty.csv")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("zero valid rows"), std::string::npos) << r.err;
}

TEST_F(CliTest, MissingDataFileIsConfigError) {
  EXPECT_EQ(run_cli({"scan", "--data_path=" + path("nope.csv")}).code, 2);
}

TEST_F(CliTest, MalformedDataIsDataError) {
  write(path("bad.csv"), "Date,Open,High,Low,Close,Adj Close,Volume\n2020-01-01,10,9,8,9.5,9.5,1\n");
  EXPECT_EQ(run_cli({"scan", "--data_path=" + path("bad.csv")}).code, 3);
}

TEST_F(CliTest, ConfigErrorsExitWithTwo) {
  auto args = common("train", "run");
  args.push_back("--no_such.key=1");
  EXPECT_EQ(run_cli(args).code, 2);

  args = common("train", "run");
  args.erase(args.begin() + 2);
  const auto no_seed = run_cli(args);
  EXPECT_EQ(no_seed.code, 2);
  EXPECT_NE(no_seed.err.find("seed"), std::string::npos);

  args = common("train", "run");
  args.insert(args.end(), {"--input_mode=vanilla", "--extractor=gru"});
  EXPECT_EQ(run_cli(args).code, 2);

  args = common("train", "run");
  args.push_back("--dqn.episodes=many");
  EXPECT_EQ(run_cli(args).code, 2);

  write(path("broken.json"), "{not json");
  EXPECT_EQ(run_cli({"train", "--config", path("broken.json")}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
}

TEST_F(CliTest, ConfigFileAndOverridesMerge) {
  write(path("cfg.json"), json{{"agent", "rule"}, {"backtest", {{"tc", 0.5}}}}.dump());
  const auto c = cli::config_from_args(path("cfg.json"), {"--backtest.tc", "0", "--trend.w=7"});
  EXPECT_EQ(c.agent, "rule");
  EXPECT_EQ(c.backtest.tc, 0.0);
  EXPECT_EQ(c.trend.w, 7u);
  EXPECT_EQ(c.dqn.batch_size, DqnParams{}.batch_size);
  EXPECT_THROW(cli::config_from_args("", {"--trend.w"}), ConfigError);
  EXPECT_THROW(cli::config_from_args("", {"trend.w=3"}), ConfigError);
}

TEST_F(CliTest, SarsaOnTooShortSeriesIsDataError) {
  std::vector<double> closes(10);
  for (std::size_t i = 0; i < closes.size(); ++i) closes[i] = 50 + i;
  write(path("short.csv"), to_csv(fixtures::series_from_closes(closes)));
  const auto r = run_cli({"train", "--agent=sarsa", "--sarsa.n=20", "--seed=1", "--data_path=" + path("short.csv"),
                          "--split.begin=2020-01-01", "--split.split_point=2020-01-09", "--split.end=2020-12-31",
                          "--output_dir=" + path("run")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("too short"), std::string::npos) << r.err;
}

TEST_F(CliTest, TrainIsDeterministicAndManifestReproduces) {
  auto a = common("train", "a");
  a.push_back("--dqn.episodes=2");
  auto b = common("train", "b");
  b.push_back("--dqn.episodes=2");
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  const std::string weights = slurp(dir_ / "a" / "weights.json");
  ASSERT_FALSE(weights.empty());
  EXPECT_EQ(weights, slurp(dir_ / "b" / "weights.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "training_log.csv"), slurp(dir_ / "b" / "training_log.csv"));

  const json manifest = json::parse(slurp(dir_ / "a" / "train.manifest.json"));
  EXPECT_EQ(manifest.at("format"), "candlerl-manifest");
  EXPECT_EQ(manifest.at("seed"), 7);
  EXPECT_EQ(manifest.at("data_hash").get<std::string>().rfind("fnv1a64:", 0), 0u);
  const auto c = run_cli({"train", "--config", path("a/train.manifest.json"), "--output_dir=" + path("c")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(weights, slurp(dir_ / "c" / "weights.json"));

  auto other = common("train", "d");
  other.insert(other.end(), {"--dqn.episodes=2", "--seed=8"});
  ASSERT_EQ(run_cli(other).code, 0);
  EXPECT_NE(weights, slurp(dir_ / "d" / "weights.json"));
}

TEST_F(CliTest, TrainThenBacktestLearningAgents) {
  for (const std::string agent : {"dqn", "sarsa"}) {
    auto t = common("train", agent);
    t.insert(t.end(), {"--agent=" + agent, "--dqn.episodes=2", "--sarsa.episodes=5"});
    ASSERT_EQ(run_cli(t).code, 0) << agent;
    auto b = common("backtest", agent);
    b.push_back("--agent=" + agent);
    const auto r = run_cli(b);
    ASSERT_EQ(r.code, 0) << r.err;
    const json m = json::parse(slurp(dir_ / agent / "metrics.json"));
    EXPECT_EQ(m.at("agent"), agent);
    EXPECT_TRUE(fs::exists(dir_ / agent / "decision_log.csv"));
    EXPECT_TRUE(fs::exists(dir_ / agent / "profit_curve.csv"));
  }
  auto wrong = common("backtest", "dqn");
  wrong.push_back("--agent=sarsa");
  EXPECT_EQ(run_cli(wrong).code, 2);
  auto missing = common("backtest", "nowhere");
  missing.push_back("--agent=dqn");
  EXPECT_EQ(run_cli(missing).code, 3);
}

TEST_F(CliTest, BuyAndHoldTotalReturnIsPriceRatio) {
  auto args = common("backtest", "bh");
  args.insert(args.end(), {"--agent=bh", "--backtest.tc=0"});
  ASSERT_EQ(run_cli(args).code, 0);
  const auto log = read_csv(dir_ / "bh" / "decision_log.csv");
  double buy = 0;
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i][2] == "Buy" && log[i][3] == "1") buy = std::stod(log[i][1]);
  ASSERT_GT(buy, 0);
  const double last = std::stod(log.back()[1]);
  const json m = json::parse(slurp(dir_ / "bh" / "metrics.json"));
  EXPECT_NEAR(m.at("total_return").get<double>(), last / buy - 1, 1e-12);
}

TEST_F(CliTest, RuleAgentBuysTheDayAfterTheHammer) {
  auto args = common("backtest", "rule");
  args.insert(args.end(), {"--agent=rule", "--run_name=rule"});
  ASSERT_EQ(run_cli(args).code, 0);
  const auto log = read_csv(dir_ / "rule" / "decision_log.csv");
  EXPECT_EQ(log[0], (std::vector<std::string>{"date", "close", "action", "executed"}));
  EXPECT_EQ(cell(log, fixtures::day(kHammerDay + 1).iso(), 2), "Buy");
  EXPECT_EQ(cell(log, fixtures::day(kHammerDay + 1).iso(), 3), "1");
  const auto curve = read_csv(dir_ / "rule" / "profit_curve.csv");
  EXPECT_EQ(curve.size(), log.size());
}

TEST_F(CliTest, TransactionCostLowersFinalValue) {
  double prev = 1e300;
  for (const std::string tc : {"0", "0.001", "0.01", "0.05"}) {
    auto args = common("backtest", "tc" + tc);
    args.insert(args.end(), {"--agent=rule", "--backtest.tc=" + tc});
    ASSERT_EQ(run_cli(args).code, 0);
    const double v = json::parse(slurp(dir_ / ("tc" + tc) / "metrics.json")).at("final_portfolio_value").get<double>();
    EXPECT_LT(v, prev) << tc;
    prev = v;
  }
}

TEST_F(CliTest, BacktestIsDeterministic) {
  for (const std::string out : {"x", "y"}) {
    auto args = common("backtest", out);
    args.insert(args.end(), {"--agent=rule", "--run_name=same"});
    ASSERT_EQ(run_cli(args).code, 0);
  }
  EXPECT_EQ(slurp(dir_ / "x" / "decision_log.csv"), slurp(dir_ / "y" / "decision_log.csv"));
  auto mx = json::parse(slurp(dir_ / "x" / "metrics.json"));
  auto my = json::parse(slurp(dir_ / "y" / "metrics.json"));
  mx.erase("manifest");
  my.erase("manifest");
  EXPECT_EQ(mx.dump(), my.dump());
}

TEST_F(CliTest, CompareMergesRuns) {
  for (const std::string agent : {"bh", "rule"}) {
    auto args = common("backtest", agent);
    args.insert(args.end(), {"--agent=" + agent, "--run_name=" + agent});
    ASSERT_EQ(run_cli(args).code, 0);
  }
  const auto r = run_cli({"compare", path("bh"), path("rule"), "-o", path("cmp.csv"), "--json", path("cmp.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_csv(path("cmp.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], cli::compare_columns());
  EXPECT_EQ(rows[0][0], "agent");
  EXPECT_EQ(rows[1][0], "bh");
  EXPECT_EQ(rows[2][0], "rule");
  const json j = json::parse(slurp(path("cmp.json")));
  EXPECT_EQ(j.at("rows").size(), 2u);
  const double tt = json::parse(slurp(dir_ / "bh" / "metrics.json")).at("total_return").get<double>();
  const auto& cols = cli::compare_columns();
  const auto col = std::find(cols.begin(), cols.end(), "total_return") - cols.begin();
  EXPECT_DOUBLE_EQ(j.at("rows")[0][col].get<double>(), tt);

  EXPECT_EQ(run_cli({"compare", path("bh"), path("bh")}).code, 2);
  EXPECT_EQ(run_cli({"compare", path("bh")}).code, 2);
}

TEST(CliRealData, BuyAndHoldOnGoog) {
  const fs::path out = fs::temp_directory_path() / "candlerl_cli_goog";
  fs::remove_all(out);
  const auto r = run_cli({"backtest", "--agent=bh", "--seed=1", "--backtest.tc=0",
                          std::string("--data_path=") + CANDLERL_TEST_DATA + "/goog.csv", "--split.begin=2004-08-19",
                          "--split.split_point=2006-01-01", "--split.end=2007-10-31", "--output_dir=" + out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto log = read_csv(out / "decision_log.csv");
  double buy = 0;
  for (std::size_t i = 1; i < log.size(); ++i)
    if (log[i][2] == "Buy" && log[i][3] == "1") buy = std::stod(log[i][1]);
  ASSERT_GT(buy, 0);
  const json m = json::parse(slurp(out / "metrics.json"));
  EXPECT_NEAR(m.at("total_return").get<double>(), std::stod(log.back()[1]) / buy - 1, 1e-12);
  EXPECT_EQ(m.at("manifest").at("config").at("symbol"), "");
  fs::remove_all(out);
}
