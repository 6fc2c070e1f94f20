#pragma once

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "candlerl/agents.hpp"
#include "candlerl/candle_analysis.hpp"
#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"

namespace candlerl {

using Rng = std::mt19937_64;

struct SarsaParams {
  int n = 5;             // reward lookahead and bootstrap distance
  double alpha = 0.1;    // learning rate
  double gamma = 0.9;    // per-step discount
  double lambda = 0.9;   // trace decay
  double epsilon = 0.1;  // exploration at the first episode
  double epsilon_end = 0.01;
  double tc = 0.0;  // transaction cost ratio used in the reward

  [[nodiscard]] bool valid() const {
    return n >= 1 && alpha > 0 && alpha <= 1 && gamma > 0 && gamma <= 1 && lambda >= 0 && lambda <= 1 &&
           epsilon >= 0 && epsilon <= 1 && epsilon_end >= 0 && epsilon_end <= 1 && tc >= 0 && tc < 1;
  }
};

/// Tabular state: first detected pattern in table order (0 = none) x trend.
struct StateId {
  int pattern_code = 0;  // 0 = no pattern, 1 + PatternId otherwise
  int trend_code = 0;    // Trend enumerator value

  [[nodiscard]] bool idle() const { return pattern_code == 0; }
  friend constexpr auto operator<=>(const StateId&, const StateId&) = default;
};

inline constexpr int kPatternCodes = static_cast<int>(kPatternCount) + 1;

inline StateId encode_state(PatternSet hits, Trend trend) {
  const auto first = hits.first();
  return {first ? static_cast<int>(*first) + 1 : 0, static_cast<int>(trend)};
}

inline StateId encode_state(const Observation& obs, const PatternParams& params) {
  return encode_state(detect_patterns(obs.candles, params, obs.max_body), obs.trend);
}

using ActionValues = std::array<double, 3>;  // indexed by action_index

/// Action values q(S, A) plus the eligibility trace z over the same keys.
struct QTable {
  std::map<StateId, ActionValues> values;
  std::map<StateId, ActionValues> traces;

  [[nodiscard]] double q(StateId s, Action a) const {
    auto it = values.find(s);
    return it == values.end() ? 0.0 : it->second[action_index(a)];
  }
  void reset_traces() { traces.clear(); }

  friend bool operator==(const QTable&, const QTable&) = default;
};

// ---------------------------------------------------------------------------
// Reward and action selection
// ---------------------------------------------------------------------------

/// Percentage gain of holding a long (Buy) or short (Sell) position from
/// close[t] to close[t+n], net of a transaction cost on both sides.
inline double n_step_reward(std::span<const double> closes, std::size_t t, int n, Action action, double tc) {
  if (n < 1) throw ConfigError("reward lookahead must be >= 1");
  if (t + static_cast<std::size_t>(n) >= closes.size()) throw DataError("reward horizon beyond series end");
  if (action == Action::None) return 0.0;
  const double p1 = closes[t];
  const double p2 = closes[t + static_cast<std::size_t>(n)];
  const double keep = (1 - tc) * (1 - tc);
  return action == Action::Buy ? (keep * p2 / p1 - 1) * 100 : (keep * p1 / p2 - 1) * 100;
}

inline double n_step_reward(const OhlcSeries& s, std::size_t t, int n, Action action, double tc) {
  const auto closes = s.closes();
  return n_step_reward(closes, t, n, action, tc);
}

/// Argmax with ties going to the earliest of Buy, None, Sell.
inline Action greedy(const ActionValues& q) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = i;
  return kActions[best];
}

inline Action epsilon_greedy(const ActionValues& q, double epsilon, Rng& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<std::size_t> pick(0, kActions.size() - 1);
    return kActions[pick(rng)];
  }
  return greedy(q);
}

/// Linear schedule from `start` at episode 0 to `end` at the last episode.
inline double linear_epsilon(double start, double end, std::size_t episode, std::size_t episodes) {
  if (episodes <= 1) return start;
  const double f = std::min(1.0, static_cast<double>(episode) / static_cast<double>(episodes - 1));
  return start + (end - start) * f;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct SarsaEpisodeLog {
  std::size_t episode = 0;
  double total_reward = 0;
  double epsilon = 0;
};

/// n-step SARSA(lambda) with accumulating traces over a pre-encoded state
/// sequence. Steps run over [first_step, size - n). Idle states always take
/// None. The bootstrap uses the greedy action of the state n steps ahead,
/// discounted by gamma^n.
inline QTable sarsa_train(std::span<const StateId> states, std::span<const double> closes,
                          std::size_t first_step, const SarsaParams& params, std::size_t episodes, Rng& rng,
                          std::vector<SarsaEpisodeLog>* log = nullptr) {
  if (!params.valid()) throw ConfigError("invalid SARSA parameters");
  if (states.size() != closes.size()) throw ConfigError("state and price sequences differ in length");
  const auto n = static_cast<std::size_t>(params.n);
  if (first_step + n >= closes.size()) throw DataError("series too short for n-step SARSA");

  QTable table;
  const double decay = params.gamma * params.lambda;
  const double bootstrap = std::pow(params.gamma, params.n);
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    table.reset_traces();
    const double eps = linear_epsilon(params.epsilon, params.epsilon_end, ep, episodes);
    double total = 0;
    for (std::size_t t = first_step; t + n < closes.size(); ++t) {
      const StateId s = states[t];
      auto& row = table.values[s];
      const Action a = s.idle() ? Action::None : epsilon_greedy(row, eps, rng);
      const double reward = n_step_reward(closes, t, params.n, a, params.tc);
      total += reward;

      const StateId s_next = states[t + n];
      double q_next = 0;
      if (auto it = table.values.find(s_next); it != table.values.end()) {
        const Action a_next = s_next.idle() ? Action::None : greedy(it->second);
        q_next = it->second[action_index(a_next)];
      }
      const double delta = reward + bootstrap * q_next - row[action_index(a)];

      for (auto& [key, z] : table.traces)
        for (auto& zi : z) zi *= decay;
      table.traces[s][action_index(a)] += 1.0;

      for (const auto& [key, z] : table.traces) {
        auto& q = table.values[key];
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += params.alpha * delta * z[i];
      }
    }
    if (log) log->push_back({ep, total, eps});
  }
  return table;
}

/// Encodes every step of `series` (max body taken from the series itself)
/// and trains on it.
inline QTable sarsa_train(const OhlcSeries& series, const SarsaParams& params, std::size_t episodes, Rng& rng,
                          const PatternParams& patterns = {}, const TrendParams& trend = {},
                          std::vector<SarsaEpisodeLog>* log = nullptr) {
  if (series.size() <= trend.warmup() + static_cast<std::size_t>(std::max(params.n, 0)))
    throw DataError("series too short for n-step SARSA");
  const double max_body = max_body_length(series);
  ObservationBuilder obs(series, trend, max_body, kMaxPatternWindow);
  std::vector<StateId> states(series.size());
  for (std::size_t t = trend.warmup(); t < series.size(); ++t) states[t] = encode_state(obs.at(t), patterns);
  const auto closes = series.closes();
  return sarsa_train(states, closes, trend.warmup(), params, episodes, rng, log);
}

/// Greedy action; idle and unseen states give None.
inline AgentDecision sarsa_act(const QTable& table, StateId state) {
  AgentDecision d;
  if (state.idle()) return d;
  auto it = table.values.find(state);
  if (it == table.values.end()) {
    d.diagnostics["unseen"] = 1;
    return d;
  }
  const auto& q = it->second;
  d.action = greedy(q);
  d.diagnostics["q_buy"] = q[0];
  d.diagnostics["q_none"] = q[1];
  d.diagnostics["q_sell"] = q[2];
  if (q[0] == 0 && q[1] == 0 && q[2] == 0) d.diagnostics["untrained"] = 1;
  return d;
}

class SarsaAgent final : public Agent {
 public:
  SarsaAgent(QTable table, PatternParams params) : table_(std::move(table)), params_(params) {}

  AgentDecision act(const Observation& obs) override {
    check_window(*this, obs);
    return sarsa_act(table_, encode_state(obs, params_));
  }
  [[nodiscard]] std::size_t window() const override { return kMaxPatternWindow; }
  [[nodiscard]] std::string name() const override { return "sarsa"; }
  [[nodiscard]] const QTable& table() const { return table_; }

 private:
  QTable table_;
  PatternParams params_;
};

// ---------------------------------------------------------------------------
// Serialization: pattern_code,trend_code,action,q_value
// ---------------------------------------------------------------------------

inline void write_qtable_csv(const QTable& table, std::ostream& out) {
  out << "pattern_code,trend_code,action,q_value\n";
  for (const auto& [s, q] : table.values)
    for (auto a : kActions)
      out << s.pattern_code << ',' << s.trend_code << ',' << to_string(a) << ','
          << detail::format_double(q[action_index(a)]) << '\n';
}

inline QTable read_qtable_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("Q-table: missing header");
  QTable table;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto f = detail::split_fields(line);
    auto fail = [&] { return DataError("Q-table: malformed row " + std::to_string(row)); };
    if (f.size() != 4) throw fail();
    const auto pc = detail::to_double(f[0]);
    const auto tcode = detail::to_double(f[1]);
    const auto a = parse_action(f[2]);
    const auto q = detail::to_double(f[3]);
    if (!pc || !tcode || !a || !q) throw fail();
    const StateId s{static_cast<int>(*pc), static_cast<int>(*tcode)};
    if (s.pattern_code < 0 || s.pattern_code >= kPatternCodes || s.trend_code < 0 || s.trend_code > 2)
      throw fail();
    table.values[s][action_index(*a)] = *q;
  }
  return table;
}

}  // namespace candlerl
