#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "candlerl/agents.hpp"
#include "candlerl/candle_analysis.hpp"
#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"

namespace candlerl {

struct BacktestConfig {
  double initial_cash = 1000;
  double tc = 0;  // charged on the traded notional, each side
  bool execute_next_day = true;

  [[nodiscard]] bool valid() const { return initial_cash > 0 && tc >= 0 && tc < 1; }
};

/// One row per step: the action taking effect at `date` and whether it traded.
/// With next-day execution the action is the agent's signal from the previous
/// step, filled at this step's close.
struct ActionRecord {
  Date date;
  double price = 0;
  Action action = Action::None;
  bool executed = false;
};

struct BacktestResult {
  std::vector<Date> dates;
  std::vector<double> portfolio_values;
  std::vector<ActionRecord> action_log;
  double initial_cash = 0;
  double final_value = 0;
};

/// Long-only {Flat, Long} simulation. A Buy while flat converts all cash into
/// fractional shares, a Sell while long converts all shares back; anything
/// else is ignored. Open positions are marked to market at the end.
inline BacktestResult run_backtest(Agent& agent, const OhlcSeries& series, const BacktestConfig& cfg,
                                   const TrendParams& trend = {}, double max_body = 0) {
  if (!cfg.valid()) throw ConfigError("backtest requires initial_cash > 0 and tc in [0,1)");
  if (series.empty()) throw DataError("backtest on an empty series");
  agent.reset();
  ObservationBuilder obs(series, trend, max_body, agent.window());
  const std::size_t first = obs.first_step(agent);

  BacktestResult r;
  r.initial_cash = cfg.initial_cash;
  double cash = cfg.initial_cash, shares = 0;
  Action pending = Action::None;
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double price = series[t].close;
    Action signal = Action::None;
    if (t >= first) signal = agent.act(obs.at(t)).action;
    const Action effective = cfg.execute_next_day ? pending : signal;
    pending = signal;

    ActionRecord rec{series[t].date, price, effective, false};
    if (effective == Action::Buy && shares == 0) {
      shares = cash * (1 - cfg.tc) / price;
      cash = 0;
      rec.executed = true;
    } else if (effective == Action::Sell && shares > 0) {
      cash = shares * price * (1 - cfg.tc);
      shares = 0;
      rec.executed = true;
    }
    r.dates.push_back(series[t].date);
    r.action_log.push_back(rec);
    r.portfolio_values.push_back(cash + shares * price);
  }
  r.final_value = r.portfolio_values.back();
  return r;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// AR_t = (V_t - V_{t-1}) / V_{t-1} for t = 1..T.
inline std::vector<double> daily_returns(std::span<const double> values) {
  if (values.size() < 2) throw DataError("daily returns need at least 2 portfolio values");
  std::vector<double> out;
  out.reserve(values.size() - 1);
  for (std::size_t t = 1; t < values.size(); ++t) out.push_back((values[t] - values[t - 1]) / values[t - 1]);
  return out;
}

inline std::vector<double> daily_returns(const BacktestResult& r) { return daily_returns(r.portfolio_values); }

inline double total_return(const BacktestResult& r) {
  if (r.portfolio_values.empty()) throw DataError("total return of an empty result");
  const double v0 = r.portfolio_values.front();
  return (r.portfolio_values.back() - v0) / v0;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of an empty sequence");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Sample standard deviation (1 / (T - 1)).
inline double volatility(std::span<const double> returns) {
  if (returns.size() < 2) throw DataError("volatility needs at least 2 returns");
  const double m = mean(returns);
  double ss = 0;
  for (double x : returns) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(returns.size() - 1));
}

/// mean / volatility with a zero risk-free rate; nullopt when volatility is 0.
inline std::optional<double> sharpe(std::span<const double> returns) {
  const double vol = volatility(returns);
  if (vol == 0) return std::nullopt;
  return mean(returns) / vol;
}

/// Monte Carlo value at risk: fits N(mean, sd) to `returns`, draws `n_sims`
/// samples as mean + sd * z and returns the alpha-percent lowest one, i.e. the
/// sorted sample at index ceil(alpha / 100 * n_sims) - 1. A zero sd gives the
/// mean exactly.
inline double var_monte_carlo(std::span<const double> returns, double alpha, std::size_t n_sims,
                              std::mt19937_64& rng) {
  if (returns.size() < 2) throw DataError("value at risk needs at least 2 returns");
  if (!(alpha > 0 && alpha < 100)) throw ConfigError("value at risk alpha must be in (0, 100)");
  if (n_sims < 100) throw ConfigError("value at risk needs at least 100 simulations");
  const double mu = mean(returns);
  const double sd = volatility(returns);
  if (sd == 0) return mu;
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> sims(n_sims);
  for (auto& s : sims) s = mu + sd * z(rng);
  std::sort(sims.begin(), sims.end());
  const auto k = static_cast<std::size_t>(std::ceil(alpha / 100.0 * static_cast<double>(n_sims)));
  return sims[k == 0 ? 0 : k - 1];
}

/// Every evaluation metric of one run. Percent-valued fields are marked.
struct MetricsReport {
  std::vector<double> daily_returns;
  double arithmetic_return = 0;     // percent: sum of 100 * AR_t
  double average_daily_return = 0;  // percent: mean of 100 * AR_t
  double return_variance = 0;       // percent^2: sample variance of 100 * AR_t
  double time_weighted_return = 0;  // ratio: geometric mean of (1 + AR_t) minus 1
  double total_return = 0;          // ratio
  std::optional<double> sharpe;     // undefined when volatility is 0
  double var_alpha = 0;             // ratio
  double alpha = 5;                 // VaR confidence, percent
  double volatility = 0;            // ratio
  double initial_value = 0;
  double final_value = 0;
};

inline MetricsReport report(const BacktestResult& r, double alpha, std::mt19937_64& rng,
                            std::size_t n_sims = 1000) {
  MetricsReport m;
  m.daily_returns = daily_returns(r);
  const auto& ar = m.daily_returns;
  for (double x : ar) m.arithmetic_return += 100 * x;
  m.average_daily_return = 100 * mean(ar);
  m.volatility = volatility(ar);
  m.return_variance = 100 * 100 * m.volatility * m.volatility;
  double growth = 1;
  for (double x : ar) growth *= 1 + x;
  m.time_weighted_return = std::pow(growth, 1.0 / static_cast<double>(ar.size())) - 1;
  m.total_return = total_return(r);
  m.sharpe = sharpe(ar);
  m.alpha = alpha;
  m.var_alpha = var_monte_carlo(ar, alpha, n_sims, rng);
  m.initial_value = r.portfolio_values.front();
  m.final_value = r.portfolio_values.back();
  return m;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["arithmetic_return"] = m.arithmetic_return;
  j["average_daily_return"] = m.average_daily_return;
  j["daily_return_variance"] = m.return_variance;
  j["time_weighted_return"] = m.time_weighted_return;
  j["total_return"] = m.total_return;
  j["sharpe_ratio"] = m.sharpe ? nlohmann::json(*m.sharpe) : nlohmann::json(nullptr);
  j["value_at_risk"] = m.var_alpha;
  j["var_alpha_percent"] = m.alpha;
  j["volatility"] = m.volatility;
  j["initial_investment"] = m.initial_value;
  j["final_portfolio_value"] = m.final_value;
  j["daily_returns"] = m.daily_returns;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport m;
  try {
    m.arithmetic_return = j.at("arithmetic_return").get<double>();
    m.average_daily_return = j.at("average_daily_return").get<double>();
    m.return_variance = j.at("daily_return_variance").get<double>();
    m.time_weighted_return = j.at("time_weighted_return").get<double>();
    m.total_return = j.at("total_return").get<double>();
    if (!j.at("sharpe_ratio").is_null()) m.sharpe = j.at("sharpe_ratio").get<double>();
    m.var_alpha = j.at("value_at_risk").get<double>();
    m.alpha = j.value("var_alpha_percent", 5.0);
    m.volatility = j.at("volatility").get<double>();
    m.initial_value = j.at("initial_investment").get<double>();
    m.final_value = j.at("final_portfolio_value").get<double>();
    m.daily_returns = j.value("daily_returns", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics document: ") + e.what());
  }
  return m;
}

/// date,portfolio_value,benchmark_value
inline void write_profit_curve_csv(const BacktestResult& r, const BacktestResult& benchmark, std::ostream& out) {
  if (benchmark.portfolio_values.size() != r.portfolio_values.size())
    throw ComputeError("profit curve: benchmark length differs from run length");
  out << "date,portfolio_value,benchmark_value\n";
  for (std::size_t t = 0; t < r.portfolio_values.size(); ++t)
    out << r.dates[t].iso() << ',' << detail::format_double(r.portfolio_values[t]) << ','
        << detail::format_double(benchmark.portfolio_values[t]) << '\n';
}

/// date,close,action,executed
inline void write_decision_log_csv(const BacktestResult& r, std::ostream& out) {
  out << "date,close,action,executed\n";
  for (const auto& rec : r.action_log)
    out << rec.date.iso() << ',' << detail::format_double(rec.price) << ',' << to_string(rec.action) << ','
        << (rec.executed ? 1 : 0) << '\n';
}

}  // namespace candlerl
