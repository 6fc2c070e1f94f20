#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"

namespace candlerl {

// ---------------------------------------------------------------------------
// Parameters and enumerations
// ---------------------------------------------------------------------------

/// Thresholds for the candlestick rules. Defaults are tuning starting points.
struct PatternParams {
  double gsl = 0.2;   // gap significance level
  double csl = 0.5;   // candle significance level, relative to the max body
  double psh = 0.3;   // max shadow share of a hammer-family candle
  double ubhl = 0.5;  // hammer body upper bound (share of total length)
  double lbhl = 0.2;  // hammer body lower bound
  double doji_body_ratio = 0.05;

  [[nodiscard]] bool valid() const {
    auto unit = [](double x) { return x > 0 && x <= 1; };
    return unit(gsl) && unit(csl) && unit(psh) && unit(ubhl) && unit(lbhl) && lbhl < ubhl &&
           doji_body_ratio > 0 && doji_body_ratio < 1;
  }
};

/// Moving-average trend detection: window `w`, `v` lookback comparisons.
struct TrendParams {
  int w = 14;
  int v = 3;
  /// Average P[t-w..t] (w+1 terms) over w instead of the plain w-day mean.
  bool literal_ma = false;

  [[nodiscard]] bool valid() const { return w >= 1 && v >= 1; }
  /// First index at which market_trend is defined.
  [[nodiscard]] std::size_t warmup() const {
    return static_cast<std::size_t>(w + v + (literal_ma ? 1 : 0));
  }
};

enum class Trend : std::uint8_t { Uptrend, Downtrend, Side };
enum class Action : std::uint8_t { Buy, None, Sell };
enum class Direction : std::uint8_t { Bullish, Bearish, Flat };

/// Fixed action order; also the greedy tie-break order.
inline constexpr std::array<Action, 3> kActions = {Action::Buy, Action::None, Action::Sell};

inline constexpr std::size_t action_index(Action a) { return static_cast<std::size_t>(a); }

inline constexpr std::string_view to_string(Trend t) {
  switch (t) {
    case Trend::Uptrend: return "uptrend";
    case Trend::Downtrend: return "downtrend";
    case Trend::Side: return "side";
  }
  return "?";
}

inline constexpr std::string_view to_string(Action a) {
  switch (a) {
    case Action::Buy: return "Buy";
    case Action::None: return "None";
    case Action::Sell: return "Sell";
  }
  return "?";
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (auto a : kActions)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

enum class PatternId : std::uint8_t {
  Hammer,
  InverseHammer,
  HangingMan,
  ShootingStar,
  BullishEngulfing,
  BearishEngulfing,
  BullishHarami,
  BearishHarami,
  PiercingLine,
  DarkCloudCover,
  MorningStar,
  EveningStar,
  ThreeWhiteSoldiers,
  ThreeBlackCrows,
  RisingThreeMethods,
  FallingThreeMethods,
};

inline constexpr std::size_t kPatternCount = 16;

/// Every pattern in rule-table order (earlier entries have higher priority).
inline constexpr std::array<PatternId, kPatternCount> kAllPatterns = {
    PatternId::Hammer,           PatternId::InverseHammer,      PatternId::HangingMan,
    PatternId::ShootingStar,     PatternId::BullishEngulfing,   PatternId::BearishEngulfing,
    PatternId::BullishHarami,    PatternId::BearishHarami,      PatternId::PiercingLine,
    PatternId::DarkCloudCover,   PatternId::MorningStar,        PatternId::EveningStar,
    PatternId::ThreeWhiteSoldiers, PatternId::ThreeBlackCrows,  PatternId::RisingThreeMethods,
    PatternId::FallingThreeMethods,
};

inline constexpr std::string_view to_string(PatternId p) {
  constexpr std::array<std::string_view, kPatternCount> kNames = {
      "Hammer",         "InverseHammer",    "HangingMan",         "ShootingStar",
      "BullishEngulfing", "BearishEngulfing", "BullishHarami",    "BearishHarami",
      "PiercingLine",   "DarkCloudCover",   "MorningStar",        "EveningStar",
      "ThreeWhiteSoldiers", "ThreeBlackCrows", "RisingThreeMethods", "FallingThreeMethods",
  };
  return kNames[static_cast<std::size_t>(p)];
}

/// Number of candles a rule inspects.
inline constexpr std::size_t window_length(PatternId p) {
  switch (p) {
    case PatternId::Hammer:
    case PatternId::InverseHammer:
    case PatternId::HangingMan:
    case PatternId::ShootingStar: return 1;
    case PatternId::BullishEngulfing:
    case PatternId::BearishEngulfing:
    case PatternId::BullishHarami:
    case PatternId::BearishHarami:
    case PatternId::PiercingLine:
    case PatternId::DarkCloudCover: return 2;
    case PatternId::MorningStar:
    case PatternId::EveningStar:
    case PatternId::ThreeWhiteSoldiers:
    case PatternId::ThreeBlackCrows: return 3;
    case PatternId::RisingThreeMethods:
    case PatternId::FallingThreeMethods: return 5;
  }
  return 0;
}

inline constexpr std::size_t kMaxPatternWindow = 5;

/// Small bitset over PatternId, iterable in table order.
class PatternSet {
 public:
  constexpr void insert(PatternId p) { bits_ |= bit(p); }
  [[nodiscard]] constexpr bool contains(PatternId p) const { return (bits_ & bit(p)) != 0; }
  [[nodiscard]] constexpr bool empty() const { return bits_ == 0; }
  [[nodiscard]] constexpr std::uint32_t bits() const { return bits_; }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(std::popcount(bits_)); }
  [[nodiscard]] std::vector<PatternId> to_vector() const {
    std::vector<PatternId> out;
    for (auto p : kAllPatterns)
      if (contains(p)) out.push_back(p);
    return out;
  }
  [[nodiscard]] std::optional<PatternId> first() const {
    for (auto p : kAllPatterns)
      if (contains(p)) return p;
    return std::nullopt;
  }
  friend constexpr bool operator==(PatternSet, PatternSet) = default;

 private:
  static constexpr std::uint32_t bit(PatternId p) { return 1u << static_cast<unsigned>(p); }
  std::uint32_t bits_ = 0;
};

// ---------------------------------------------------------------------------
// Candle primitives
// ---------------------------------------------------------------------------

inline bool is_bull(const Candle& c) { return c.close > c.open; }
inline bool is_bear(const Candle& c) { return c.open > c.close; }
inline double total_length(const Candle& c) { return c.high - c.low; }
inline double body_length(const Candle& c) { return std::abs(c.close - c.open); }
inline double upper_shadow(const Candle& c) { return c.high - std::max(c.open, c.close); }
inline double lower_shadow(const Candle& c) { return std::min(c.open, c.close) - c.low; }
inline double midpoint(const Candle& c) { return (c.close + c.open) / 2; }

inline bool is_length_significant(const Candle& c, double max_body, const PatternParams& p) {
  return body_length(c) >= p.csl * max_body;
}

/// "close ~ open": body at most doji_body_ratio of the total length.
inline bool is_doji(const Candle& c, const PatternParams& p) {
  return body_length(c) <= p.doji_body_ratio * total_length(c);
}

inline double gap_significance(const Candle& a, const Candle& b, const PatternParams& p) {
  return p.gsl * std::max(body_length(a), body_length(b));
}

// ---------------------------------------------------------------------------
// Candle representation
// ---------------------------------------------------------------------------

/// Shadow and body shares of the total length, plus direction.
struct CandleRep {
  double upper = 0;
  double lower = 0;
  double body = 0;
  Direction direction = Direction::Flat;

  /// +1 bullish, -1 bearish, 0 flat.
  [[nodiscard]] double direction_sign() const {
    return direction == Direction::Bullish ? 1.0 : direction == Direction::Bearish ? -1.0 : 0.0;
  }
};

inline CandleRep candle_rep(const Candle& c) {
  const double tl = total_length(c);
  if (!(tl > 0)) return {};
  const Direction dir = is_bull(c) ? Direction::Bullish : is_bear(c) ? Direction::Bearish : Direction::Flat;
  return {upper_shadow(c) / tl, lower_shadow(c) / tl, body_length(c) / tl, dir};
}

// ---------------------------------------------------------------------------
// Moving average and trend
// ---------------------------------------------------------------------------

/// Mean of the `w` closes ending at `t`. With `literal`, the closes t-w..t
/// (w+1 terms) are summed and divided by w.
inline double moving_average(std::span<const double> closes, std::size_t t, int w, bool literal = false) {
  if (w < 1) throw ConfigError("moving average window must be >= 1");
  const auto uw = static_cast<std::size_t>(w);
  const std::size_t first_needed = literal ? uw : uw - 1;
  if (t >= closes.size()) throw DataError("moving average index out of range");
  if (t < first_needed) throw DataError("insufficient history for moving average");
  const std::size_t begin = literal ? t - uw : t + 1 - uw;
  double sum = 0;
  for (std::size_t i = begin; i <= t; ++i) sum += closes[i];
  return sum / w;
}

inline double moving_average(const OhlcSeries& s, std::size_t t, int w, bool literal = false) {
  const auto closes = s.closes();
  return moving_average(closes, t, w, literal);
}

/// Uptrend if the moving average never fell over the last v+1 steps, Downtrend
/// if it never rose, otherwise Side. Ties resolve to Uptrend (tested first).
inline Trend market_trend(std::span<const double> closes, std::size_t t, const TrendParams& p) {
  if (!p.valid()) throw ConfigError("trend parameters require w >= 1 and v >= 1");
  if (t >= closes.size()) throw DataError("trend index out of range");
  if (t < p.warmup()) throw DataError("insufficient history for market trend");
  const auto v = static_cast<std::size_t>(p.v);
  // ma[k] = mu(t - k) for k = 0..v+1
  std::array<double, 64> small{};
  std::vector<double> big;
  double* ma = small.data();
  if (v + 2 > small.size()) {
    big.resize(v + 2);
    ma = big.data();
  }
  for (std::size_t k = 0; k <= v + 1; ++k) ma[k] = moving_average(closes, t - k, p.w, p.literal_ma);
  bool up = true, down = true;
  for (std::size_t i = 0; i <= v; ++i) {
    up = up && ma[i + 1] <= ma[i];
    down = down && ma[i + 1] >= ma[i];
  }
  if (up) return Trend::Uptrend;
  if (down) return Trend::Downtrend;
  return Trend::Side;
}

inline Trend market_trend(const OhlcSeries& s, std::size_t t, const TrendParams& p) {
  const auto closes = s.closes();
  return market_trend(closes, t, p);
}

/// Trend at every index; indices before warm-up are reported as Side.
inline std::vector<Trend> trend_series(std::span<const double> closes, const TrendParams& p) {
  std::vector<Trend> out(closes.size(), Trend::Side);
  for (std::size_t t = p.warmup(); t < closes.size(); ++t) out[t] = market_trend(closes, t, p);
  return out;
}

// ---------------------------------------------------------------------------
// Pattern rules
// ---------------------------------------------------------------------------

namespace detail {

inline bool hammer_body(const Candle& c, const PatternParams& p) {
  const double tl = total_length(c), bl = body_length(c);
  return p.lbhl * tl <= bl && bl <= p.ubhl * tl;
}

/// `w` is exactly the rule's window, oldest first (w[0] is P1).
inline bool rule_holds(PatternId id, std::span<const Candle> w, const PatternParams& p, double max_body) {
  auto ls = [&](const Candle& c) { return is_length_significant(c, max_body, p); };
  switch (id) {
    case PatternId::Hammer: {
      const auto& c = w[0];
      return is_bull(c) && c.high - c.close <= p.psh * total_length(c) && hammer_body(c, p);
    }
    case PatternId::InverseHammer: {
      const auto& c = w[0];
      return is_bull(c) && c.open - c.low <= p.psh * total_length(c) && hammer_body(c, p);
    }
    case PatternId::HangingMan: {
      const auto& c = w[0];
      return is_bear(c) && c.high - c.open <= p.psh * total_length(c) && hammer_body(c, p);
    }
    case PatternId::ShootingStar: {
      const auto& c = w[0];
      return is_bear(c) && c.close - c.low <= p.psh * total_length(c) && hammer_body(c, p);
    }
    case PatternId::BullishEngulfing: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p2) && p2.open <= p1.close && p1.close <= p2.close && p2.open <= p1.open &&
             p1.open <= p2.close;
    }
    case PatternId::BearishEngulfing: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p2) && p2.close <= p1.close && p1.close <= p2.open && p2.close <= p1.open &&
             p1.open <= p2.open;
    }
    case PatternId::BullishHarami: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p1) && is_bear(p1) && is_bull(p2) && p2.close <= p1.open &&
             p2.open - p1.close >= p.gsl * body_length(p1);
    }
    case PatternId::BearishHarami: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p1) && is_bull(p1) && is_bear(p2) && p2.close >= p1.open &&
             p1.close - p2.open >= p.gsl * body_length(p1);
    }
    case PatternId::PiercingLine: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p1) && ls(p2) && is_bear(p1) && is_bull(p2) &&
             gap_significance(p1, p2, p) <= p1.close - p2.open && p2.close >= midpoint(p1);
    }
    case PatternId::DarkCloudCover: {
      const auto &p1 = w[0], &p2 = w[1];
      return ls(p1) && ls(p2) && is_bull(p1) && is_bear(p2) &&
             gap_significance(p1, p2, p) <= p2.open - p1.close && p2.close <= midpoint(p1);
    }
    case PatternId::MorningStar: {
      const auto &p1 = w[0], &p2 = w[1], &p3 = w[2];
      return ls(p1) && ls(p3) && is_bear(p1) && is_doji(p2, p) && is_bull(p3) &&
             p2.close <= p3.open && p2.close <= p1.close;
    }
    case PatternId::EveningStar: {
      const auto &p1 = w[0], &p2 = w[1], &p3 = w[2];
      return ls(p1) && ls(p3) && is_bull(p1) && is_doji(p2, p) && is_bear(p3) &&
             p2.close >= p3.open && p2.close >= p1.close;
    }
    case PatternId::ThreeWhiteSoldiers:
      return std::all_of(w.begin(), w.end(), [&](const Candle& c) { return ls(c) && is_bull(c); });
    case PatternId::ThreeBlackCrows:
      return std::all_of(w.begin(), w.end(), [&](const Candle& c) { return ls(c) && is_bear(c); });
    case PatternId::RisingThreeMethods: {
      if (!std::all_of(w.begin(), w.end(), ls)) return false;
      if (!(is_bull(w[0]) && is_bull(w[4]) && is_bear(w[1]) && is_bear(w[2]) && is_bear(w[3]))) return false;
      const double max_open = std::max({w[1].open, w[2].open, w[3].open});
      const double min_close = std::min({w[1].close, w[2].close, w[3].close});
      return max_open <= w[4].high && min_close >= w[0].low;
    }
    case PatternId::FallingThreeMethods: {
      if (!std::all_of(w.begin(), w.end(), ls)) return false;
      if (!(is_bear(w[0]) && is_bear(w[4]) && is_bull(w[1]) && is_bull(w[2]) && is_bull(w[3]))) return false;
      const double max_close = std::max({w[1].close, w[2].close, w[3].close});
      const double min_open = std::min({w[1].open, w[2].open, w[3].open});
      return max_close <= w[4].high && min_open >= w[0].low;
    }
  }
  return false;
}

}  // namespace detail

/// Every pattern whose rule holds on the suffix of `window` of the rule's
/// length. Rules longer than the window are skipped. The last candle is the
/// current one.
inline PatternSet detect_patterns(std::span<const Candle> window, const PatternParams& params,
                                  double max_body) {
  PatternSet hits;
  for (auto id : kAllPatterns) {
    const auto len = window_length(id);
    if (len > window.size()) continue;
    if (detail::rule_holds(id, window.subspan(window.size() - len), params, max_body)) hits.insert(id);
  }
  return hits;
}

/// Trading signal of a detected pattern under the current trend.
inline constexpr Action signal(PatternId pattern, Trend trend) {
  switch (pattern) {
    case PatternId::Hammer:
    case PatternId::InverseHammer:
    case PatternId::BullishEngulfing:
    case PatternId::BullishHarami:
    case PatternId::PiercingLine:
    case PatternId::MorningStar:
    case PatternId::ThreeWhiteSoldiers:
      return trend == Trend::Downtrend ? Action::Buy : Action::None;
    case PatternId::HangingMan:
    case PatternId::ShootingStar:
    case PatternId::BearishEngulfing:
    case PatternId::BearishHarami:
    case PatternId::DarkCloudCover:
    case PatternId::EveningStar:
    case PatternId::ThreeBlackCrows:
      return trend == Trend::Uptrend ? Action::Sell : Action::None;
    case PatternId::RisingThreeMethods:
    case PatternId::FallingThreeMethods:
      return Action::None;
  }
  return Action::None;
}

/// Majority vote over the non-None signals of every hit; ties give None.
inline Action aggregate_signal(PatternSet hits, Trend trend) {
  int buys = 0, sells = 0;
  for (auto p : hits.to_vector()) {
    const auto a = signal(p, trend);
    buys += a == Action::Buy;
    sells += a == Action::Sell;
  }
  if (buys > sells) return Action::Buy;
  if (sells > buys) return Action::Sell;
  return Action::None;
}

}  // namespace candlerl
