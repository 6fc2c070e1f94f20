#include <gtest/gtest.h>

#include <random>

#include "candlerl/agents.hpp"
#include "support/fixtures.hpp"

using namespace candlerl;
using fixtures::candle;

namespace {

Observation obs_of(const std::vector<Candle>& window, Trend trend, double max_body, std::size_t t = 10) {
  return Observation{t, window, trend, max_body};
}

}  // namespace

TEST(BuyAndHold, BuysOnceThenHolds) {
  BuyAndHoldAgent agent;
  const std::vector<Candle> w = {candle(10, 11, 9, 10)};
  EXPECT_EQ(agent.act(obs_of(w, Trend::Side, 1, 0)).action, Action::Buy);
  for (std::size_t t = 1; t < 50; ++t) EXPECT_EQ(agent.act(obs_of(w, Trend::Uptrend, 1, t)).action, Action::None);
  agent.reset();
  EXPECT_EQ(agent.act(obs_of(w, Trend::Side, 1, 0)).action, Action::Buy);
}

TEST(BuyAndHold, ExactlyOneBuyAndNoSellOverAnySeries) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(50, 150);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> closes;
    for (int i = 0; i < 60; ++i) closes.push_back(u(rng));
    const auto s = fixtures::series_from_closes(closes);
    BuyAndHoldAgent agent;
    ObservationBuilder ob(s, {}, max_body_length(s), agent.window());
    int buys = 0, sells = 0;
    for (std::size_t t = ob.first_step(agent); t < s.size(); ++t) {
      const auto a = agent.act(ob.at(t)).action;
      buys += a == Action::Buy;
      sells += a == Action::Sell;
    }
    EXPECT_EQ(buys, 1);
    EXPECT_EQ(sells, 0);
  }
}

TEST(RuleBased, HammerInDowntrendBuys) {
  RuleBasedAgent agent;
  std::vector<Candle> w(4, candle(50, 51, 49, 50));
  w.push_back(candle(7, 10.5, 0, 10));
  EXPECT_EQ(agent.act(obs_of(w, Trend::Downtrend, 4)).action, Action::Buy);
  EXPECT_EQ(agent.act(obs_of(w, Trend::Uptrend, 4)).action, Action::None);
}

TEST(RuleBased, NoPatternGivesNone) {
  RuleBasedAgent agent;
  const std::vector<Candle> w(5, candle(10, 11, 9, 10));
  for (auto t : {Trend::Uptrend, Trend::Downtrend, Trend::Side})
    EXPECT_EQ(agent.act(obs_of(w, t, 4)).action, Action::None);
}

TEST(RuleBased, ShortWindowIsRejected) {
  RuleBasedAgent agent;
  const std::vector<Candle> w(2, candle(10, 11, 9, 10));
  EXPECT_THROW(agent.act(obs_of(w, Trend::Side, 4)), DataError);
}

TEST(RuleBased, MatchesVoteOverSignalsOnRandomWindows) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> move(-3, 3), shadow(0, 2);
  std::uniform_int_distribution<int> trend(0, 2);
  RuleBasedAgent agent;
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<Candle> w;
    double prev = 50;
    for (int i = 0; i < 5; ++i) {
      const double o = prev + 0.3 * move(rng), c = o + move(rng);
      w.push_back(candle(o, std::max(o, c) + shadow(rng), std::min(o, c) - shadow(rng), c));
      prev = c;
    }
    const auto tr = static_cast<Trend>(trend(rng));
    int votes = 0;
    for (auto id : kAllPatterns) {
      const std::span<const Candle> suffix(w.end() - static_cast<std::ptrdiff_t>(window_length(id)), w.end());
      if (!detail::rule_holds(id, suffix, {}, 2)) continue;
      const auto a = signal(id, tr);
      votes += a == Action::Buy ? 1 : a == Action::Sell ? -1 : 0;
    }
    const Action expected = votes > 0 ? Action::Buy : votes < 0 ? Action::Sell : Action::None;
    EXPECT_EQ(agent.act(obs_of(w, tr, 2)).action, expected);
  }
}

TEST(ObservationBuilder, WindowAndTrendWarmup) {
  std::vector<double> closes;
  for (int i = 0; i < 40; ++i) closes.push_back(100 + i);
  const auto s = fixtures::series_from_closes(closes);
  const TrendParams tp{14, 3, false};
  ObservationBuilder ob(s, tp, 1.0, 5);
  RuleBasedAgent rule;
  BuyAndHoldAgent bh;
  EXPECT_EQ(ob.first_step(rule), tp.warmup());
  EXPECT_EQ(ob.first_step(bh), 0u);
  const auto o = ob.at(30);
  EXPECT_EQ(o.candles.size(), 5u);
  EXPECT_EQ(o.current().close, closes[30]);
  EXPECT_EQ(o.trend, Trend::Uptrend);
  EXPECT_EQ(ob.at(2).candles.size(), 3u);
}
