#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "candlerl/agents.hpp"
#include "candlerl/backtest.hpp"
#include "candlerl/candle_analysis.hpp"
#include "candlerl/dqn.hpp"
#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"
#include "candlerl/nn/checkpoint.hpp"
#include "candlerl/sarsa.hpp"

namespace candlerl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

inline constexpr const char* kManifestFormat = "candlerl-manifest";
inline constexpr const char* kCheckpointMetaFormat = "candlerl-checkpoint";

/// Columns of the comparison table, in order.
inline const std::vector<std::string>& compare_columns() {
  static const std::vector<std::string> cols = {
      "agent",        "arithmetic_return", "average_daily_return", "daily_return_variance",
      "time_weighted_return", "total_return", "sharpe_ratio", "value_at_risk",
      "volatility",   "initial_investment", "final_portfolio_value"};
  return cols;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Every recognised key with its default. Dates and the seed have no default.
inline json default_config() {
  const SarsaParams sp;
  const DqnParams dp;
  const PatternParams pp;
  const TrendParams tp;
  const BacktestConfig bc;
  return json{
      {"data_path", ""},
      {"symbol", ""},
      {"use_adj_close", false},
      {"split", {{"begin", nullptr}, {"split_point", nullptr}, {"end", nullptr}}},
      {"agent", "dqn"},
      {"input_mode", "vanilla"},
      {"extractor", "mlp"},
      {"softmax_head", false},
      {"seed", nullptr},
      {"output_dir", "run"},
      {"run_name", ""},
      {"sarsa",
       {{"n", sp.n},
        {"alpha", sp.alpha},
        {"gamma", sp.gamma},
        {"lambda", sp.lambda},
        {"epsilon", sp.epsilon},
        {"epsilon_end", sp.epsilon_end},
        {"tc", sp.tc},
        {"episodes", 200}}},
      {"dqn",
       {{"gamma", dp.gamma},
        {"reward_n", dp.reward_n},
        {"replay_capacity", dp.replay_capacity},
        {"batch_size", dp.batch_size},
        {"target_sync_steps", dp.target_sync_steps},
        {"episodes", dp.episodes},
        {"epsilon_start", dp.epsilon_start},
        {"epsilon_end", dp.epsilon_end},
        {"epsilon_decay_episodes", dp.epsilon_decay_episodes},
        {"tc", dp.tc},
        {"lr", dp.lr}}},
      {"patterns",
       {{"gsl", pp.gsl},
        {"csl", pp.csl},
        {"psh", pp.psh},
        {"ubhl", pp.ubhl},
        {"lbhl", pp.lbhl},
        {"doji_body_ratio", pp.doji_body_ratio}}},
      {"trend", {{"w", tp.w}, {"v", tp.v}, {"literal_ma", tp.literal_ma}}},
      {"backtest",
       {{"initial_cash", bc.initial_cash},
        {"tc", bc.tc},
        {"execute_next_day", bc.execute_next_day},
        {"var_alpha", 5.0},
        {"var_sims", 1000}}},
  };
}

namespace detail {

inline void check_value(const json& def, const json& v, const std::string& key) {
  if (def.is_null() || v.is_null()) return;
  const bool ok = (def.is_boolean() && v.is_boolean()) || (def.is_string() && v.is_string()) ||
                  (def.is_number() && v.is_number()) || (def.is_object() && v.is_object());
  if (!ok) throw ConfigError("config key '" + key + "' has the wrong type");
  if (def.is_number_unsigned() && v.is_number_integer() && v.get<std::int64_t>() < 0)
    throw ConfigError("config key '" + key + "' must be non-negative");
  if (def.is_number_integer() && v.is_number_float())
    throw ConfigError("config key '" + key + "' must be an integer");
}

/// Merges `src` into `dst`, rejecting keys absent from the defaults.
inline void merge_known(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config" + (prefix.empty() ? "" : " key '" + prefix + "'") +
                                          " must be a JSON object");
  for (const auto& [k, v] : src.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!dst.contains(k)) throw ConfigError("unknown config key '" + key + "'");
    check_value(dst[k], v, key);
    if (dst[k].is_object())
      merge_known(dst[k], v, key);
    else
      dst[k] = v;
  }
}

}  // namespace detail

/// Applies `--a.b=value` / `--a.b value` pairs. Values are read as JSON when
/// they parse, otherwise as strings.
inline void apply_overrides(json& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string arg = args[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    arg = arg.substr(2);
    std::string key, raw;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      key = arg.substr(0, eq);
      raw = arg.substr(eq + 1);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("override '--" + arg + "' has no value");
      key = arg;
      raw = args[++i];
    }
    json* node = &cfg;
    std::stringstream path(key);
    std::string part;
    while (std::getline(path, part, '.')) {
      if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
      node = &(*node)[part];
    }
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded() || (node->is_string() && !v.is_string()) || (node->is_null() && !v.is_number()))
      v = raw;
    detail::check_value(*node, v, key);
    *node = v;
  }
}

/// Reads a config or manifest document and merges it over the defaults.
inline json load_config(const std::string& path) {
  json cfg = default_config();
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path + ": not valid JSON");
  if (doc.is_object() && doc.value("format", "") == kManifestFormat) doc = doc.at("config");
  try {
    detail::merge_known(cfg, doc, "");
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

struct RunConfig {
  json raw;
  std::string data_path;
  std::string symbol;
  CsvOptions csv;
  std::optional<SplitSpec> split;
  std::string agent;
  QNetworkConfig net;
  SarsaParams sarsa;
  std::size_t sarsa_episodes = 200;
  DqnParams dqn;
  PatternParams patterns;
  TrendParams trend;
  BacktestConfig backtest;
  double var_alpha = 5;
  std::size_t var_sims = 1000;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
  std::string run_name;

  [[nodiscard]] std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("a seed is required (set \"seed\" or pass --seed)");
    return *seed;
  }
  [[nodiscard]] const SplitSpec& require_split() const {
    if (!split) throw ConfigError("split.begin, split.split_point and split.end are required");
    return *split;
  }
  [[nodiscard]] bool learning_agent() const { return agent == "sarsa" || agent == "dqn"; }
};

inline Date config_date(const json& v, const char* key) {
  const auto d = Date::parse(v.get<std::string>());
  if (!d) throw ConfigError(std::string("split.") + key + ": unparseable date");
  return *d;
}

/// Typed view of a merged config; checks every invariant that does not need the data.
inline RunConfig resolve(const json& j) {
  RunConfig c;
  c.raw = j;
  try {
    c.data_path = j.at("data_path").get<std::string>();
    c.symbol = j.at("symbol").get<std::string>();
    c.csv.use_adj_close = j.at("use_adj_close").get<bool>();
    const auto& s = j.at("split");
    if (!s.at("begin").is_null() || !s.at("split_point").is_null() || !s.at("end").is_null()) {
      if (s.at("begin").is_null() || s.at("split_point").is_null() || s.at("end").is_null())
        throw ConfigError("split needs begin, split_point and end");
      c.split = SplitSpec{config_date(s.at("begin"), "begin"), config_date(s.at("split_point"), "split_point"),
                          config_date(s.at("end"), "end")};
      if (!c.split->valid()) throw ConfigError("split dates must satisfy begin < split_point < end");
    }
    c.agent = j.at("agent").get<std::string>();
    if (c.agent != "rule" && c.agent != "bh" && c.agent != "sarsa" && c.agent != "dqn")
      throw ConfigError("agent must be one of rule, bh, sarsa, dqn");
    const auto mode = parse_input_mode(j.at("input_mode").get<std::string>());
    if (!mode) throw ConfigError("unknown input_mode '" + j.at("input_mode").get<std::string>() + "'");
    const auto kind = parse_extractor(j.at("extractor").get<std::string>());
    if (!kind) throw ConfigError("unknown extractor '" + j.at("extractor").get<std::string>() + "'");
    c.net.mode = *mode;
    c.net.kind = *kind;
    c.net.softmax_head = j.at("softmax_head").get<bool>();
    if (c.agent == "dqn") validate_pairing(c.net.mode, c.net.kind);

    const auto& sj = j.at("sarsa");
    c.sarsa.n = sj.at("n").get<int>();
    c.sarsa.alpha = sj.at("alpha").get<double>();
    c.sarsa.gamma = sj.at("gamma").get<double>();
    c.sarsa.lambda = sj.at("lambda").get<double>();
    c.sarsa.epsilon = sj.at("epsilon").get<double>();
    c.sarsa.epsilon_end = sj.at("epsilon_end").get<double>();
    c.sarsa.tc = sj.at("tc").get<double>();
    c.sarsa_episodes = sj.at("episodes").get<std::size_t>();
    if (!c.sarsa.valid() || c.sarsa_episodes == 0) throw ConfigError("invalid sarsa parameters");

    const auto& dj = j.at("dqn");
    c.dqn.gamma = dj.at("gamma").get<double>();
    c.dqn.reward_n = dj.at("reward_n").get<int>();
    c.dqn.replay_capacity = dj.at("replay_capacity").get<std::size_t>();
    c.dqn.batch_size = dj.at("batch_size").get<std::size_t>();
    c.dqn.target_sync_steps = dj.at("target_sync_steps").get<std::size_t>();
    c.dqn.episodes = dj.at("episodes").get<std::size_t>();
    c.dqn.epsilon_start = dj.at("epsilon_start").get<double>();
    c.dqn.epsilon_end = dj.at("epsilon_end").get<double>();
    c.dqn.epsilon_decay_episodes = dj.at("epsilon_decay_episodes").get<std::size_t>();
    c.dqn.tc = dj.at("tc").get<double>();
    c.dqn.lr = dj.at("lr").get<double>();
    if (!c.dqn.valid()) throw ConfigError("invalid dqn parameters");

    const auto& pj = j.at("patterns");
    c.patterns.gsl = pj.at("gsl").get<double>();
    c.patterns.csl = pj.at("csl").get<double>();
    c.patterns.psh = pj.at("psh").get<double>();
    c.patterns.ubhl = pj.at("ubhl").get<double>();
    c.patterns.lbhl = pj.at("lbhl").get<double>();
    c.patterns.doji_body_ratio = pj.at("doji_body_ratio").get<double>();
    if (!c.patterns.valid()) throw ConfigError("invalid pattern parameters");

    const auto& tj = j.at("trend");
    c.trend.w = tj.at("w").get<int>();
    c.trend.v = tj.at("v").get<int>();
    c.trend.literal_ma = tj.at("literal_ma").get<bool>();
    if (!c.trend.valid()) throw ConfigError("invalid trend parameters");

    const auto& bj = j.at("backtest");
    c.backtest.initial_cash = bj.at("initial_cash").get<double>();
    c.backtest.tc = bj.at("tc").get<double>();
    c.backtest.execute_next_day = bj.at("execute_next_day").get<bool>();
    c.var_alpha = bj.at("var_alpha").get<double>();
    c.var_sims = bj.at("var_sims").get<std::size_t>();
    if (!c.backtest.valid()) throw ConfigError("invalid backtest parameters");
    if (!(c.var_alpha > 0 && c.var_alpha < 100) || c.var_sims < 100)
      throw ConfigError("backtest.var_alpha must be in (0, 100) and backtest.var_sims >= 100");

    if (!j.at("seed").is_null()) {
      if (!j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0)
        throw ConfigError("seed must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.output_dir = j.at("output_dir").get<std::string>();
    c.run_name = j.at("run_name").get<std::string>();
    if (c.run_name.empty()) c.run_name = c.agent;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Data and artifacts
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a of the bytes, as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string read_file(const std::string& path, bool config_error_if_missing) {
  if (!fs::exists(path)) {
    const std::string msg = "file not found: '" + path + "'";
    if (config_error_if_missing) throw ConfigError(msg);
    throw DataError(msg);
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct LoadedData {
  OhlcSeries series;
  std::string hash;
};

inline LoadedData load_data(const RunConfig& c) {
  if (c.data_path.empty()) throw ConfigError("data_path is required");
  const std::string text = read_file(c.data_path, true);
  const std::string symbol = c.symbol.empty() ? fs::path(c.data_path).stem().string() : c.symbol;
  try {
    return {parse_csv(text, symbol, c.csv), "fnv1a64:" + fnv1a_hex(text)};
  } catch (const DataError& e) {
    throw DataError(c.data_path + ": " + e.what());
  }
}

inline json make_manifest(const RunConfig& c, std::string_view command, const std::string& data_hash,
                          const std::vector<std::string>& artifacts) {
  return json{{"format", kManifestFormat},
              {"version", 1},
              {"command", command},
              {"seed", c.seed ? json(*c.seed) : json(nullptr)},
              {"data_hash", data_hash},
              {"artifacts", artifacts},
              {"config", c.raw}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// date,pattern_id,trend,signal for every pattern detected over the series.
inline void cmd_scan(const RunConfig& c, std::ostream& out) {
  const auto data = load_data(c);
  const auto& s = data.series;
  const double max_body = max_body_length(s);
  const auto trends = trend_series(s.closes(), c.trend);
  out << "date,pattern_id,trend,signal\n";
  for (std::size_t t = 0; t < s.size(); ++t) {
    const std::size_t len = std::min(kMaxPatternWindow, t + 1);
    const auto window = std::span<const Candle>(s.candles).subspan(t + 1 - len, len);
    for (auto p : detect_patterns(window, c.patterns, max_body).to_vector())
      out << s[t].date.iso() << ',' << to_string(p) << ',' << to_string(trends[t]) << ','
          << to_string(signal(p, trends[t])) << '\n';
  }
}

inline void write_dqn_log(const std::vector<DqnEpisodeLog>& log, std::ostream& out) {
  out << "episode,mean_loss,train_total_return,epsilon\n";
  for (const auto& e : log)
    out << e.episode << ',' << candlerl::detail::format_double(e.mean_loss) << ','
        << candlerl::detail::format_double(e.train_total_return) << ','
        << candlerl::detail::format_double(e.epsilon) << '\n';
}

inline void write_sarsa_log(const std::vector<SarsaEpisodeLog>& log, std::ostream& out) {
  out << "episode,total_reward,epsilon\n";
  for (const auto& e : log)
    out << e.episode << ',' << candlerl::detail::format_double(e.total_reward) << ','
        << candlerl::detail::format_double(e.epsilon) << '\n';
}

/// Trains on the train partition and writes checkpoint.json (the sidecar),
/// the agent's weights or table, training_log.csv and train.manifest.json.
inline void cmd_train(const RunConfig& c, std::ostream& log) {
  const auto seed = c.require_seed();
  const auto& spec = c.require_split();
  const auto data = load_data(c);
  const auto [train, test] = split(data.series, spec);
  ensure_dir(c.output_dir);
  const fs::path dir(c.output_dir);
  std::vector<std::string> artifacts = {"checkpoint.json"};
  json meta{{"format", kCheckpointMetaFormat},
            {"version", 1},
            {"agent", c.agent},
            {"max_body", max_body_length(train)},
            {"patterns", c.raw.at("patterns")},
            {"trend", c.raw.at("trend")},
            {"seed", seed}};
  Rng rng(seed);

  if (c.agent == "dqn") {
    auto result = dqn_train(train, c.net, c.dqn, rng, c.patterns, c.trend);
    write_text(dir / "weights.json", nn::to_json(result.net.weights()).dump() + "\n");
    std::ostringstream csv;
    write_dqn_log(result.log, csv);
    write_text(dir / "training_log.csv", csv.str());
    meta["weights"] = "weights.json";
    meta["input_mode"] = to_string(c.net.mode);
    meta["extractor"] = to_string(c.net.kind);
    meta["softmax_head"] = c.net.softmax_head;
    meta["params"] = c.raw.at("dqn");
    artifacts.insert(artifacts.end(), {"weights.json", "training_log.csv"});
    log << "dqn: " << result.log.size() << " episodes, final train return "
        << result.log.back().train_total_return << '\n';
  } else if (c.agent == "sarsa") {
    std::vector<SarsaEpisodeLog> elog;
    const auto table = sarsa_train(train, c.sarsa, c.sarsa_episodes, rng, c.patterns, c.trend, &elog);
    std::ostringstream q, csv;
    write_qtable_csv(table, q);
    write_sarsa_log(elog, csv);
    write_text(dir / "qtable.csv", q.str());
    write_text(dir / "training_log.csv", csv.str());
    meta["qtable"] = "qtable.csv";
    meta["params"] = c.raw.at("sarsa");
    artifacts.insert(artifacts.end(), {"qtable.csv", "training_log.csv"});
    log << "sarsa: " << elog.size() << " episodes, " << table.values.size() << " states\n";
  } else {
    log << c.agent << ": nothing to learn\n";
  }
  const json manifest = make_manifest(c, "train", data.hash, artifacts);
  meta["manifest"] = manifest;
  write_text(dir / "checkpoint.json", meta.dump(2) + "\n");
  write_text(dir / "train.manifest.json", manifest.dump(2) + "\n");
}

/// Loads the agent named by the config, reading the checkpoint sidecar for
/// learning agents. Returns the agent and the max body length to observe with.
inline std::pair<std::unique_ptr<Agent>, double> load_agent(const RunConfig& c, const std::string& checkpoint,
                                                            const OhlcSeries& train) {
  if (c.agent == "bh") return {std::make_unique<BuyAndHoldAgent>(), 0.0};
  if (c.agent == "rule") return {std::make_unique<RuleBasedAgent>(c.patterns), max_body_length(train)};

  const fs::path meta_path = checkpoint.empty() ? fs::path(c.output_dir) / "checkpoint.json" : fs::path(checkpoint);
  const std::string text = read_file(meta_path.string(), false);
  const json meta = json::parse(text, nullptr, false);
  if (meta.is_discarded() || !meta.is_object() || meta.value("format", "") != kCheckpointMetaFormat)
    throw DataError(meta_path.string() + ": not a checkpoint sidecar");
  if (meta.value("agent", "") != c.agent)
    throw ConfigError("checkpoint/agent mismatch: checkpoint holds '" + meta.value("agent", "") +
                      "', config selects '" + c.agent + "'");
  const fs::path base = meta_path.parent_path();
  const double max_body = meta.value("max_body", 0.0);
  try {
    if (c.agent == "sarsa") {
      std::istringstream q(read_file((base / meta.at("qtable").get<std::string>()).string(), false));
      return {std::make_unique<SarsaAgent>(read_qtable_csv(q), c.patterns), max_body};
    }
    QNetworkConfig net = c.net;
    const auto mode = parse_input_mode(meta.at("input_mode").get<std::string>());
    const auto kind = parse_extractor(meta.at("extractor").get<std::string>());
    if (!mode || !kind) throw DataError(meta_path.string() + ": unknown network type");
    if (*mode != c.net.mode || *kind != c.net.kind || meta.at("softmax_head").get<bool>() != c.net.softmax_head)
      throw ConfigError("checkpoint/agent mismatch: checkpoint network is " + std::string(to_string(*kind)) + "/" +
                        std::string(to_string(*mode)));
    Rng init(0);
    QNetwork q(net, init);
    const json weights = json::parse(read_file((base / meta.at("weights").get<std::string>()).string(), false),
                                     nullptr, false);
    if (weights.is_discarded()) throw DataError("weights file is not valid JSON");
    q.load_weights(nn::tensors_from_json(weights));
    return {std::make_unique<DqnAgent>(std::move(q), c.patterns), max_body};
  } catch (const json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
}

/// Runs the agent greedily on the test partition and writes metrics.json,
/// profit_curve.csv, decision_log.csv and backtest.manifest.json.
inline void cmd_backtest(const RunConfig& c, const std::string& checkpoint, std::ostream& log) {
  const auto seed = c.require_seed();
  const auto& spec = c.require_split();
  const auto data = load_data(c);
  const auto [train, test] = split(data.series, spec);
  auto [agent, max_body] = load_agent(c, checkpoint, train);

  const auto result = run_backtest(*agent, test, c.backtest, c.trend, max_body);
  BuyAndHoldAgent bh;
  const auto bench = run_backtest(bh, test, c.backtest, c.trend, max_body);
  Rng rng(seed);
  const auto metrics = report(result, c.var_alpha, rng, c.var_sims);

  ensure_dir(c.output_dir);
  const fs::path dir(c.output_dir);
  const std::vector<std::string> artifacts = {"metrics.json", "profit_curve.csv", "decision_log.csv"};
  const json manifest = make_manifest(c, "backtest", data.hash, artifacts);
  json doc = to_json(metrics);
  doc["run"] = c.run_name;
  doc["agent"] = c.agent;
  doc["manifest"] = manifest;
  write_text(dir / "metrics.json", doc.dump(2) + "\n");
  std::ostringstream curve, decisions;
  write_profit_curve_csv(result, bench, curve);
  write_decision_log_csv(result, decisions);
  write_text(dir / "profit_curve.csv", curve.str());
  write_text(dir / "decision_log.csv", decisions.str());
  write_text(dir / "backtest.manifest.json", manifest.dump(2) + "\n");
  log << c.run_name << ": total return " << metrics.total_return << ", final value " << metrics.final_value << '\n';
}

struct CompareRow {
  std::string name;
  MetricsReport metrics;
};

/// Reads `<run>/metrics.json` (or a metrics file given directly) per run.
inline std::vector<CompareRow> load_runs(const std::vector<std::string>& runs) {
  if (runs.size() < 2) throw ConfigError("compare needs at least two runs");
  std::vector<CompareRow> rows;
  std::set<std::string> names;
  for (const auto& r : runs) {
    const fs::path p = fs::is_directory(r) ? fs::path(r) / "metrics.json" : fs::path(r);
    const json doc = json::parse(read_file(p.string(), false), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw DataError(p.string() + ": not a metrics document");
    std::string name = doc.value("run", "");
    if (name.empty()) name = fs::is_directory(r) ? fs::path(r).filename().string() : p.stem().string();
    if (!names.insert(name).second) throw ConfigError("duplicate run name '" + name + "'");
    try {
      rows.push_back({name, metrics_from_json(doc)});
    } catch (const DataError& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return rows;
}

inline void write_compare_csv(const std::vector<CompareRow>& rows, std::ostream& out) {
  const auto& cols = compare_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  using candlerl::detail::format_double;
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.name << ',' << format_double(m.arithmetic_return) << ',' << format_double(m.average_daily_return) << ','
        << format_double(m.return_variance) << ',' << format_double(m.time_weighted_return) << ','
        << format_double(m.total_return) << ',' << (m.sharpe ? format_double(*m.sharpe) : "") << ','
        << format_double(m.var_alpha) << ',' << format_double(m.volatility) << ','
        << format_double(m.initial_value) << ',' << format_double(m.final_value) << '\n';
  }
}

inline json compare_json(const std::vector<CompareRow>& rows) {
  json out{{"columns", compare_columns()}, {"rows", json::array()}};
  for (const auto& r : rows) {
    json m = to_json(r.metrics);
    json row = json::array({r.name});
    for (std::size_t i = 1; i < compare_columns().size(); ++i) row.push_back(m.at(compare_columns()[i]));
    out["rows"].push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline RunConfig config_from_args(const std::string& config_path, const std::vector<std::string>& extras) {
  json j = load_config(config_path);
  apply_overrides(j, extras);
  return resolve(j);
}

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"candlestick trading agents: scan, train, backtest, compare"};
  app.require_subcommand(1);
  std::string config_path, output, checkpoint, json_output;
  std::vector<std::string> runs;

  auto* scan = app.add_subcommand("scan", "list detected candlestick patterns as CSV");
  scan->add_option("--config", config_path, "JSON run configuration");
  scan->add_option("-o,--output", output, "output CSV (default: stdout)");
  scan->allow_extras();

  auto* train = app.add_subcommand("train", "train the configured agent on the train split");
  train->add_option("--config", config_path, "JSON run configuration");
  train->allow_extras();

  auto* backtest = app.add_subcommand("backtest", "evaluate the configured agent on the test split");
  backtest->add_option("--config", config_path, "JSON run configuration");
  backtest->add_option("--checkpoint", checkpoint, "checkpoint sidecar (default: <output_dir>/checkpoint.json)");
  backtest->allow_extras();

  auto* compare = app.add_subcommand("compare", "merge run metrics into one table");
  compare->add_option("runs", runs, "run directories or metrics.json files")->required();
  compare->add_option("-o,--output", output, "output CSV (default: stdout)");
  compare->add_option("--json", json_output, "also write the table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*scan) {
      const auto c = config_from_args(config_path, scan->remaining());
      if (output.empty()) {
        cmd_scan(c, out);
      } else {
        std::ostringstream csv;
        cmd_scan(c, csv);
        write_text(output, csv.str());
      }
    } else if (*train) {
      cmd_train(config_from_args(config_path, train->remaining()), err);
    } else if (*backtest) {
      cmd_backtest(config_from_args(config_path, backtest->remaining()), checkpoint, err);
    } else if (*compare) {
      const auto rows = load_runs(runs);
      std::ostringstream csv;
      write_compare_csv(rows, csv);
      if (output.empty())
        out << csv.str();
      else
        write_text(output, csv.str());
      if (!json_output.empty()) write_text(json_output, compare_json(rows).dump(2) + "\n");
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace candlerl::cli
