#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "candlerl/agents.hpp"
#include "candlerl/candle_analysis.hpp"
#include "candlerl/market_data.hpp"

namespace fixtures {

using candlerl::Action;
using candlerl::Candle;
using candlerl::Date;
using candlerl::OhlcSeries;

/// Calendar day `offset` days after 2020-01-01.
inline Date day(std::size_t offset) {
  Date d{2020, 1, 1};
  for (std::size_t i = 0; i < offset; ++i) {
    if (++d.day > Date::days_in_month(d.year, d.month)) {
      d.day = 1;
      if (++d.month > 12) {
        d.month = 1;
        ++d.year;
      }
    }
  }
  return d;
}

inline Candle candle(double o, double h, double l, double c, std::size_t offset = 0) {
  return Candle{day(offset), o, h, l, c, std::nullopt};
}

inline OhlcSeries series_of(std::vector<Candle> candles, const char* symbol = "TEST") {
  for (std::size_t i = 0; i < candles.size(); ++i) candles[i].date = day(i);
  return OhlcSeries{symbol, std::move(candles)};
}

/// Open at the previous close, one unit of shadow on each side.
inline OhlcSeries series_from_closes(std::span<const double> closes, double shadow = 1.0) {
  std::vector<Candle> cs;
  for (std::size_t i = 0; i < closes.size(); ++i) {
    const double o = i == 0 ? closes[0] : closes[i - 1];
    const double c = closes[i];
    cs.push_back(candle(o, std::max(o, c) + shadow, std::min(o, c) - shadow, c, i));
  }
  return series_of(std::move(cs));
}

/// Close alternates between `low` and `high` every `half` days, starting at
/// `low` and `phase` days into the low half.
inline std::vector<double> square_wave_closes(std::size_t n, double low, double high, std::size_t half,
                                              std::size_t phase = 0) {
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(((i + phase) / half) % 2 == 0 ? low : high);
  return out;
}

/// Replays a fixed action per step; inert before `first`.
class ScriptedAgent final : public candlerl::Agent {
 public:
  explicit ScriptedAgent(std::vector<Action> actions) : actions_(std::move(actions)) {}
  candlerl::AgentDecision act(const candlerl::Observation& obs) override {
    return {obs.t < actions_.size() ? actions_[obs.t] : Action::None, {}};
  }
  [[nodiscard]] bool needs_trend() const override { return false; }
  [[nodiscard]] std::string name() const override { return "scripted"; }

 private:
  std::vector<Action> actions_;
};

/// Best achievable total return of a long-only all-in trader whose signals
/// can start at step `first_signal` and fill at the close `delay` steps later
/// (0 or 1), with proportional cost `tc` per side. Dynamic program over the
/// two holdings states.
inline double optimal_total_return(std::span<const double> closes, std::size_t first_signal, std::size_t delay,
                                   double tc = 0.0) {
  double flat = 1.0, shares = 0.0;
  for (std::size_t t = first_signal + delay; t < closes.size(); ++t) {
    const double p = closes[t];
    const double buy = flat * (1 - tc) / p;
    const double sell = shares * p * (1 - tc);
    shares = std::max(shares, buy);
    flat = std::max(flat, sell);
  }
  return std::max(flat, shares * closes.back()) - 1.0;
}

/// Independent recomputation of every metric, with long double sums.
struct MetricOracle {
  std::vector<long double> returns;
  long double arithmetic_pct = 0, mean_pct = 0, var_pct2 = 0, twr = 0, total = 0, vol = 0;
  std::optional<long double> sharpe;

  explicit MetricOracle(std::span<const double> values) {
    for (std::size_t t = 1; t < values.size(); ++t)
      returns.push_back(static_cast<long double>(values[t]) / values[t - 1] - 1.0L);
    const auto n = static_cast<long double>(returns.size());
    long double sum = 0, sum_sq = 0, log_growth = 0;
    for (auto r : returns) {
      sum += r;
      sum_sq += r * r;
      log_growth += std::log1p(r);
    }
    const long double mean = sum / n;
    const long double var = (sum_sq - n * mean * mean) / (n - 1);
    arithmetic_pct = 100 * sum;
    mean_pct = 100 * mean;
    var_pct2 = 10000 * var;
    vol = std::sqrt(std::max(var, 0.0L));
    twr = std::expm1(log_growth / n);
    total = static_cast<long double>(values.back()) / values.front() - 1.0L;
    if (vol > 0) sharpe = mean / vol;
  }
};

}  // namespace fixtures
