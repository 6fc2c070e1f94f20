#pragma once

#include <algorithm>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "candlerl/candle_analysis.hpp"
#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"

namespace candlerl {

/// What an agent sees at step `t`: the most recent candles (oldest first,
/// current candle last), the market trend at `t` and the training-set max body.
struct Observation {
  std::size_t t = 0;
  std::span<const Candle> candles;
  Trend trend = Trend::Side;
  double max_body = 0;

  [[nodiscard]] const Candle& current() const { return candles.back(); }
};

struct AgentDecision {
  Action action = Action::None;
  std::map<std::string, double> diagnostics;
};

/// Shared contract for every trading agent.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual AgentDecision act(const Observation& obs) = 0;
  /// Candles the agent needs in `Observation::candles`.
  [[nodiscard]] virtual std::size_t window() const { return 1; }
  /// Whether the agent needs a defined market trend (delays its first step).
  [[nodiscard]] virtual bool needs_trend() const { return true; }
  /// Called before a new pass over a series.
  virtual void reset() {}
  [[nodiscard]] virtual std::string name() const = 0;
};

/// Builds observations over a series with a fixed trend setup.
class ObservationBuilder {
 public:
  ObservationBuilder(const OhlcSeries& series, TrendParams trend, double max_body, std::size_t window)
      : series_(series), trend_params_(trend), max_body_(max_body), window_(std::max<std::size_t>(window, 1)) {
    trends_ = trend_series(series.closes(), trend_params_);
  }

  /// First step at which `agent` can act.
  [[nodiscard]] std::size_t first_step(const Agent& agent) const {
    std::size_t s = agent.window() - 1;
    if (agent.needs_trend()) s = std::max(s, trend_params_.warmup());
    return s;
  }

  /// Window is clipped at the series start.
  [[nodiscard]] Observation at(std::size_t t) const {
    if (t >= series_.size()) throw DataError("observation index out of range");
    const std::size_t len = std::min(window_, t + 1);
    return Observation{t, std::span<const Candle>(series_.candles).subspan(t + 1 - len, len), trends_[t],
                       max_body_};
  }

 private:
  const OhlcSeries& series_;
  TrendParams trend_params_;
  double max_body_;
  std::size_t window_;
  std::vector<Trend> trends_;
};

inline void check_window(const Agent& agent, const Observation& obs) {
  if (obs.candles.size() < agent.window())
    throw DataError(agent.name() + ": observation window has " + std::to_string(obs.candles.size()) +
                    " candles, needs " + std::to_string(agent.window()));
}

/// Buys on its first step and holds.
class BuyAndHoldAgent final : public Agent {
 public:
  AgentDecision act(const Observation& obs) override {
    check_window(*this, obs);
    if (bought_) return {};
    bought_ = true;
    return {Action::Buy, {}};
  }
  [[nodiscard]] bool needs_trend() const override { return false; }
  void reset() override { bought_ = false; }
  [[nodiscard]] std::string name() const override { return "bh"; }

 private:
  bool bought_ = false;
};

/// Never trades.
class IdleAgent final : public Agent {
 public:
  AgentDecision act(const Observation&) override { return {}; }
  [[nodiscard]] bool needs_trend() const override { return false; }
  [[nodiscard]] std::string name() const override { return "idle"; }
};

/// Candlestick rule table: detect every pattern ending at `t` and vote.
class RuleBasedAgent final : public Agent {
 public:
  explicit RuleBasedAgent(PatternParams params = {}) : params_(params) {
    if (!params_.valid()) throw ConfigError("invalid pattern parameters");
  }

  AgentDecision act(const Observation& obs) override {
    check_window(*this, obs);
    const auto hits = detect_patterns(obs.candles, params_, obs.max_body);
    AgentDecision d{aggregate_signal(hits, obs.trend), {}};
    d.diagnostics["patterns"] = static_cast<double>(hits.size());
    return d;
  }
  [[nodiscard]] std::size_t window() const override { return kMaxPatternWindow; }
  [[nodiscard]] std::string name() const override { return "rule"; }
  [[nodiscard]] const PatternParams& params() const { return params_; }

 private:
  PatternParams params_;
};

}  // namespace candlerl
