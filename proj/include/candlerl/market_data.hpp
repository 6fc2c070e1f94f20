#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "candlerl/error.hpp"

namespace candlerl {

// ---------------------------------------------------------------------------
// Date
// ---------------------------------------------------------------------------

/// Calendar date. Ordering is chronological.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

  /// Accepts `YYYY-MM-DD` and `YYYY/MM/DD`.
  static std::optional<Date> parse(std::string_view text) {
    if (text.size() != 10) return std::nullopt;
    const char sep = text[4];
    if ((sep != '-' && sep != '/') || text[7] != sep) return std::nullopt;
    auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
      int v = 0;
      auto [p, ec] = std::from_chars(text.data() + pos, text.data() + pos + len, v);
      if (ec != std::errc{} || p != text.data() + pos + len) return std::nullopt;
      return v;
    };
    auto y = num(0, 4), m = num(5, 2), d = num(8, 2);
    if (!y || !m || !d) return std::nullopt;
    if (*m < 1 || *m > 12 || *d < 1 || *d > days_in_month(*y, *m)) return std::nullopt;
    return Date{*y, *m, *d};
  }

  [[nodiscard]] std::string iso() const {
    std::array<char, 11> buf{};
    auto put = [&](int pos, int width, int v) {
      for (int i = width - 1; i >= 0; --i) {
        buf[static_cast<std::size_t>(pos + i)] = static_cast<char>('0' + v % 10);
        v /= 10;
      }
    };
    put(0, 4, year);
    buf[4] = '-';
    put(5, 2, month);
    buf[7] = '-';
    put(8, 2, day);
    return std::string(buf.data(), 10);
  }

  static constexpr int days_in_month(int y, int m) {
    constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return m == 2 && leap ? 29 : kDays[m - 1];
  }
};

inline std::ostream& operator<<(std::ostream& os, const Date& d) { return os << d.iso(); }

// ---------------------------------------------------------------------------
// Candle / series
// ---------------------------------------------------------------------------

/// One daily OHLC bar.
struct Candle {
  Date date;
  double open = 0;
  double high = 0;
  double low = 0;
  double close = 0;
  std::optional<double> volume;

  /// low <= min(open, close), high >= max(open, close), every price > 0.
  [[nodiscard]] bool valid() const {
    return open > 0 && high > 0 && low > 0 && close > 0 && low <= high &&
           low <= std::min(open, close) && high >= std::max(open, close) &&
           (!volume || *volume >= 0);
  }

  friend bool operator==(const Candle&, const Candle&) = default;
};

/// A validated price history; candles are strictly increasing by date.
struct OhlcSeries {
  std::string symbol;
  std::vector<Candle> candles;

  [[nodiscard]] std::size_t size() const { return candles.size(); }
  [[nodiscard]] bool empty() const { return candles.empty(); }
  const Candle& operator[](std::size_t i) const { return candles[i]; }

  [[nodiscard]] std::vector<double> closes() const {
    std::vector<double> out;
    out.reserve(candles.size());
    for (const auto& c : candles) out.push_back(c.close);
    return out;
  }

  friend bool operator==(const OhlcSeries&, const OhlcSeries&) = default;
};

/// Train is [begin, split_point), test is [split_point, end].
struct SplitSpec {
  Date begin;
  Date split_point;
  Date end;

  [[nodiscard]] bool valid() const { return begin < split_point && split_point < end; }
};

struct CsvOptions {
  /// Rescale open/high/low proportionally and use Adj Close as the close.
  bool use_adj_close = false;
};

struct CsvStats {
  std::size_t rows_read = 0;
  std::size_t rows_dropped = 0;  // empty or "null" price fields
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline bool is_missing(std::string_view f) {
  return f.empty() || lower(f) == "null" || lower(f) == "nan";
}

inline std::optional<double> to_double(std::string_view f) {
  double v = 0;
  auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc{} || p != f.data() + f.size()) return std::nullopt;
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

}  // namespace detail

/// Parses Yahoo-Finance-style CSV (Date,Open,High,Low,Close[,Adj Close][,Volume]).
/// Rows with an empty or "null" price are dropped; rows breaking the OHLC
/// invariants cause a DataError that names every offending data row (1-based,
/// header excluded). Output is sorted by date.
inline OhlcSeries parse_csv(std::istream& in, std::string symbol, const CsvOptions& opts = {},
                            CsvStats* stats = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty input: missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM

  const auto header = detail::split_fields(line);
  auto find_col = [&](std::initializer_list<std::string_view> names) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto h = detail::lower(header[i]);
      for (auto n : names)
        if (h == n) return i;
    }
    return std::nullopt;
  };
  const auto c_date = find_col({"date"});
  const auto c_open = find_col({"open"});
  const auto c_high = find_col({"high"});
  const auto c_low = find_col({"low"});
  const auto c_close = find_col({"close"});
  const auto c_adj = find_col({"adj close", "adj_close", "adjclose", "adj. close", "adj. close*"});
  const auto c_vol = find_col({"volume"});
  for (auto [col, name] : {std::pair{c_date, "Date"}, {c_open, "Open"}, {c_high, "High"},
                           {c_low, "Low"}, {c_close, "Close"}}) {
    if (!col) throw DataError(std::string("missing required column: ") + name);
  }
  if (opts.use_adj_close && !c_adj) throw DataError("missing required column: Adj Close");

  CsvStats local;
  std::vector<Candle> candles;
  std::vector<std::size_t> invalid_rows;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    ++local.rows_read;
    const auto f = detail::split_fields(line);
    auto field = [&](std::optional<std::size_t> c) -> std::string_view {
      return *c < f.size() ? f[*c] : std::string_view{};
    };
    const auto date = Date::parse(field(c_date));
    if (!date)
      throw DataError("row " + std::to_string(row) + ": unparseable date '" +
                      std::string(field(c_date)) + "'");

    std::array<std::string_view, 4> px = {field(c_open), field(c_high), field(c_low), field(c_close)};
    if (std::any_of(px.begin(), px.end(), detail::is_missing) ||
        (opts.use_adj_close && detail::is_missing(field(c_adj)))) {
      ++local.rows_dropped;
      continue;
    }
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) {
      auto d = detail::to_double(px[i]);
      if (!d) throw DataError("row " + std::to_string(row) + ": unparseable price '" + std::string(px[i]) + "'");
      v[i] = *d;
    }
    Candle c{*date, v[0], v[1], v[2], v[3], std::nullopt};
    if (c_vol && !detail::is_missing(field(c_vol))) {
      auto vol = detail::to_double(field(c_vol));
      if (!vol) throw DataError("row " + std::to_string(row) + ": unparseable volume");
      c.volume = *vol;
    }
    if (opts.use_adj_close) {
      auto adj = detail::to_double(field(c_adj));
      if (!adj) throw DataError("row " + std::to_string(row) + ": unparseable Adj Close");
      const double k = *adj / c.close;
      c.open *= k;
      c.high *= k;
      c.low *= k;
      c.close = *adj;
    }
    if (!c.valid()) {
      invalid_rows.push_back(row);
      continue;
    }
    candles.push_back(c);
  }
  if (!invalid_rows.empty()) {
    std::ostringstream msg;
    msg << "OHLC invariant violated at row(s):";
    for (auto r : invalid_rows) msg << ' ' << r;
    throw DataError(msg.str());
  }
  if (candles.empty()) throw DataError("zero valid rows");

  std::stable_sort(candles.begin(), candles.end(),
                   [](const Candle& a, const Candle& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < candles.size(); ++i)
    if (candles[i].date == candles[i - 1].date)
      throw DataError("duplicate date " + candles[i].date.iso());

  if (stats) *stats = local;
  return OhlcSeries{std::move(symbol), std::move(candles)};
}

inline OhlcSeries parse_csv(std::string_view text, std::string symbol, const CsvOptions& opts = {},
                            CsvStats* stats = nullptr) {
  std::istringstream in{std::string(text)};
  return parse_csv(in, std::move(symbol), opts, stats);
}

/// Writes the same column layout parse_csv reads; Adj Close repeats Close.
inline void serialize_csv(const OhlcSeries& series, std::ostream& out) {
  out << "Date,Open,High,Low,Close,Adj Close,Volume\n";
  for (const auto& c : series.candles) {
    out << c.date.iso() << ',' << detail::format_double(c.open) << ',' << detail::format_double(c.high)
        << ',' << detail::format_double(c.low) << ',' << detail::format_double(c.close) << ','
        << detail::format_double(c.close) << ',';
    if (c.volume) out << detail::format_double(*c.volume);
    out << '\n';
  }
}

inline std::string serialize_csv(const OhlcSeries& series) {
  std::ostringstream out;
  serialize_csv(series, out);
  return out.str();
}

/// Splits into train [begin, split_point) and test [split_point, end].
inline std::pair<OhlcSeries, OhlcSeries> split(const OhlcSeries& series, const SplitSpec& spec) {
  if (series.empty()) throw DataError("cannot split an empty series");
  if (!spec.valid()) throw ConfigError("split requires begin < split_point < end");
  OhlcSeries train{series.symbol, {}};
  OhlcSeries test{series.symbol, {}};
  for (const auto& c : series.candles) {
    if (c.date < spec.begin || spec.end < c.date) continue;
    (c.date < spec.split_point ? train : test).candles.push_back(c);
  }
  if (train.empty()) throw DataError("split produced an empty train partition");
  if (test.empty()) throw DataError("split produced an empty test partition");
  return {std::move(train), std::move(test)};
}

/// Largest |close - open| in the series; the IsLS reference length.
inline double max_body_length(const OhlcSeries& series) {
  double m = 0;
  for (const auto& c : series.candles) m = std::max(m, std::abs(c.close - c.open));
  return m;
}

}  // namespace candlerl
