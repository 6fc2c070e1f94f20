#pragma once

#include <cstdint>
#include <vector>

#include "candlerl/sarsa.hpp"

namespace fixtures {

/// Two recurring states: pattern A in a downtrend on low days (close 100)
/// and pattern B in an uptrend on high days (close 110). Prices alternate
/// daily, so with an odd lookahead every A is followed n days later by a
/// high close and every B by a low one.
struct TwoStateMdp {
  candlerl::StateId a{1 + static_cast<int>(candlerl::PatternId::Hammer), static_cast<int>(candlerl::Trend::Downtrend)};
  candlerl::StateId b{1 + static_cast<int>(candlerl::PatternId::ShootingStar),
                      static_cast<int>(candlerl::Trend::Uptrend)};
  std::vector<candlerl::StateId> states;
  std::vector<double> closes;

  explicit TwoStateMdp(std::size_t length = 60) {
    for (std::size_t t = 0; t < length; ++t) {
      states.push_back(t % 2 == 0 ? a : b);
      closes.push_back(t % 2 == 0 ? 100.0 : 110.0);
    }
  }

  /// Transitions do not depend on the action, so the optimal action of a
  /// state is the one with the best reward summed over its visits.
  [[nodiscard]] candlerl::Action optimal(candlerl::StateId s, int n) const {
    candlerl::Action best = candlerl::Action::None;
    double best_total = -1e300;
    for (auto act : candlerl::kActions) {
      double total = 0;
      for (std::size_t t = 0; t + static_cast<std::size_t>(n) < closes.size(); ++t) {
        if (!(states[t] == s)) continue;
        const double p1 = closes[t], p2 = closes[t + static_cast<std::size_t>(n)];
        total += act == candlerl::Action::Buy ? (p2 / p1 - 1) * 100 : act == candlerl::Action::Sell ? (p1 / p2 - 1) * 100 : 0;
      }
      if (total > best_total) {
        best_total = total;
        best = act;
      }
    }
    return best;
  }

  /// Trains for `episodes` and reports whether the greedy policy is optimal
  /// in both states.
  [[nodiscard]] bool learns_optimal(std::uint64_t seed, std::size_t episodes = 200) const {
    candlerl::SarsaParams p;
    candlerl::Rng rng(seed);
    const auto table = candlerl::sarsa_train(states, closes, 0, p, episodes, rng);
    return candlerl::sarsa_act(table, a).action == optimal(a, p.n) &&
           candlerl::sarsa_act(table, b).action == optimal(b, p.n);
  }
};

}  // namespace fixtures
