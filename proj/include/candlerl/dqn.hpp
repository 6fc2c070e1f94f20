#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "candlerl/agents.hpp"
#include "candlerl/backtest.hpp"
#include "candlerl/candle_analysis.hpp"
#include "candlerl/error.hpp"
#include "candlerl/market_data.hpp"
#include "candlerl/nn/adam.hpp"
#include "candlerl/nn/checkpoint.hpp"
#include "candlerl/nn/layers.hpp"
#include "candlerl/sarsa.hpp"

namespace candlerl {

// ---------------------------------------------------------------------------
// Input modes and extractors
// ---------------------------------------------------------------------------

enum class InputMode { Pattern, Vanilla, CandleRep, Windowed };
enum class ExtractorKind { NoneDirect, MLP, CNN1D, CNN2D, GRU };

inline constexpr std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::Pattern: return "pattern";
    case InputMode::Vanilla: return "vanilla";
    case InputMode::CandleRep: return "candle-rep";
    case InputMode::Windowed: return "windowed";
  }
  return "?";
}

inline constexpr std::string_view to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::NoneDirect: return "none";
    case ExtractorKind::MLP: return "mlp";
    case ExtractorKind::CNN1D: return "cnn1d";
    case ExtractorKind::CNN2D: return "cnn2d";
    case ExtractorKind::GRU: return "gru";
  }
  return "?";
}

inline std::optional<InputMode> parse_input_mode(std::string_view s) {
  for (auto m : {InputMode::Pattern, InputMode::Vanilla, InputMode::CandleRep, InputMode::Windowed})
    if (to_string(m) == s) return m;
  if (s == "candlerep" || s == "candle_rep") return InputMode::CandleRep;
  return std::nullopt;
}

inline std::optional<ExtractorKind> parse_extractor(std::string_view s) {
  for (auto k : {ExtractorKind::NoneDirect, ExtractorKind::MLP, ExtractorKind::CNN1D, ExtractorKind::CNN2D,
                 ExtractorKind::GRU})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

/// CNN2D and GRU need the windowed input; CNN1D needs windowed or vanilla.
inline void validate_pairing(InputMode mode, ExtractorKind kind) {
  const bool ok = [&] {
    switch (kind) {
      case ExtractorKind::CNN2D:
      case ExtractorKind::GRU: return mode == InputMode::Windowed;
      case ExtractorKind::CNN1D: return mode == InputMode::Windowed || mode == InputMode::Vanilla;
      default: return true;
    }
  }();
  if (!ok)
    throw ConfigError("extractor '" + std::string(to_string(kind)) + "' cannot take input mode '" +
                      std::string(to_string(mode)) + "'");
}

inline constexpr std::size_t kWindowedSteps = 3;

inline constexpr std::size_t input_length(InputMode m) {
  switch (m) {
    case InputMode::Pattern: return kPatternCount + 3;
    case InputMode::Vanilla:
    case InputMode::CandleRep: return 4;
    case InputMode::Windowed: return kWindowedSteps * 4;
  }
  return 0;
}

/// Candles the encoder reads, ending at the current one.
inline constexpr std::size_t input_window(InputMode m) {
  switch (m) {
    case InputMode::Pattern: return kMaxPatternWindow;
    case InputMode::Windowed: return kWindowedSteps;
    default: return 1;
  }
}

/// (uptrend, downtrend, side) indicator.
inline std::array<double, 3> trend_one_hot(Trend t) {
  std::array<double, 3> v{};
  v[static_cast<std::size_t>(t)] = 1.0;
  return v;
}

/// Encodes the observation's current step:
///   Pattern   -> 16 pattern flags (table order) + trend one-hot
///   Vanilla   -> (open, high, low, close)
///   CandleRep -> (upper, lower, body, direction sign)
///   Windowed  -> OHLC rows of the last 3 candles, oldest first
inline nn::Tensor encode_observation(const Observation& obs, InputMode mode, const PatternParams& params) {
  if (obs.candles.size() < (mode == InputMode::Windowed ? kWindowedSteps : 1))
    throw DataError("insufficient history for input mode '" + std::string(to_string(mode)) + "'");
  std::vector<double> v;
  v.reserve(input_length(mode));
  const Candle& c = obs.current();
  switch (mode) {
    case InputMode::Pattern: {
      const auto hits = detect_patterns(obs.candles, params, obs.max_body);
      for (auto p : kAllPatterns) v.push_back(hits.contains(p) ? 1.0 : 0.0);
      for (double x : trend_one_hot(obs.trend)) v.push_back(x);
      break;
    }
    case InputMode::Vanilla: v = {c.open, c.high, c.low, c.close}; break;
    case InputMode::CandleRep: {
      const auto rep = candle_rep(c);
      v = {rep.upper, rep.lower, rep.body, rep.direction_sign()};
      break;
    }
    case InputMode::Windowed:
      for (const auto& k : obs.candles.subspan(obs.candles.size() - kWindowedSteps)) {
        v.push_back(k.open);
        v.push_back(k.high);
        v.push_back(k.low);
        v.push_back(k.close);
      }
      break;
  }
  const std::size_t len = v.size();
  return nn::Tensor({len}, std::move(v));
}

/// Network input: the encoded observation followed by the trend one-hot.
inline nn::Tensor encode_state(const Observation& obs, InputMode mode, const PatternParams& params) {
  const auto x = encode_observation(obs, mode, params);
  std::vector<double> v(x.values());
  for (double t : trend_one_hot(obs.trend)) v.push_back(t);
  const std::size_t len = v.size();
  return nn::Tensor({len}, std::move(v));
}

/// First index at which a state can be encoded.
inline std::size_t first_encodable(InputMode mode, const TrendParams& trend) {
  return std::max(trend.warmup(), input_window(mode) - 1);
}

inline nn::Tensor encode_input(const OhlcSeries& series, std::size_t t, InputMode mode, const PatternParams& params,
                               const TrendParams& trend, double max_body) {
  if (t >= series.size()) throw DataError("encode index out of range");
  const bool needs_trend = mode == InputMode::Pattern;
  if (t + 1 < input_window(mode) || (needs_trend && t < trend.warmup()))
    throw DataError("insufficient history for input mode '" + std::string(to_string(mode)) + "'");
  const auto closes = series.closes();
  Observation obs;
  obs.t = t;
  const std::size_t len = std::min(input_window(mode), t + 1);
  obs.candles = std::span<const Candle>(series.candles).subspan(t + 1 - len, len);
  obs.trend = t >= trend.warmup() ? market_trend(closes, t, trend) : Trend::Side;
  obs.max_body = max_body;
  return encode_observation(obs, mode, params);
}

// ---------------------------------------------------------------------------
// Q network
// ---------------------------------------------------------------------------

struct QNetworkConfig {
  InputMode mode = InputMode::Vanilla;
  ExtractorKind kind = ExtractorKind::MLP;
  bool softmax_head = false;
  std::size_t mlp_width = 128;
  std::size_t conv_channels = 16;
  std::size_t conv1d_kernel = 3;
  std::size_t conv2d_kernel = 2;
  std::size_t gru_hidden = 32;
};

/// Extractor -> concat(trend one-hot) -> Dense(128) BN ReLU Dense(256) BN ReLU
/// Dense(3) [-> Softmax]. Input rows are encode_state vectors.
class QNetwork {
 public:
  static constexpr std::size_t kLatent1 = 128;
  static constexpr std::size_t kLatent2 = 256;
  static constexpr std::size_t kOutputs = 3;

  QNetwork(const QNetworkConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    validate_pairing(cfg.mode, cfg.kind);
    const std::size_t in = input_length(cfg.mode);
    feature_dim_ = build_extractor(in, rng);
    head_.emplace<nn::Dense>(feature_dim_ + 3, kLatent1, rng);
    head_.emplace<nn::BatchNorm>(kLatent1);
    head_.emplace<nn::ReLU>();
    head_.emplace<nn::Dense>(kLatent1, kLatent2, rng);
    head_.emplace<nn::BatchNorm>(kLatent2);
    head_.emplace<nn::ReLU>();
    head_.emplace<nn::Dense>(kLatent2, kOutputs, rng);
    if (cfg.softmax_head) head_.emplace<nn::Softmax>();
  }

  [[nodiscard]] const QNetworkConfig& config() const { return cfg_; }
  [[nodiscard]] std::size_t state_length() const { return input_length(cfg_.mode) + 3; }

  /// [B, state_length] -> [B, 3]
  nn::Tensor forward(const nn::Tensor& states, nn::Mode mode) {
    if (states.rank() != 2 || states.dim(1) != state_length())
      throw ComputeError("q-network: expected [B," + std::to_string(state_length()) + "], got " +
                         nn::shape_str(states.shape()));
    const std::size_t in = input_length(cfg_.mode);
    const nn::Tensor features = extractor_.forward(nn::take_features(states, 0, in), mode);
    const nn::Tensor trend = nn::take_features(states, in, 3);
    return head_.forward(nn::concat_features(features.reshaped({states.dim(0), feature_dim_}), trend), mode);
  }

  /// Returns the gradient with respect to the state rows.
  nn::Tensor backward(const nn::Tensor& grad_out) {
    const nn::Tensor g = head_.backward(grad_out);
    const std::size_t batch = g.dim(0), in = input_length(cfg_.mode);
    const nn::Tensor g_feat = nn::take_features(g, 0, feature_dim_);
    const nn::Tensor g_trend = nn::take_features(g, feature_dim_, 3);
    nn::Tensor g_in = extractor_.empty() ? g_feat : extractor_.backward(g_feat);
    return nn::concat_features(g_in.reshaped({batch, in}), g_trend);
  }

  std::vector<nn::Parameter*> parameters() {
    auto out = extractor_.parameters();
    for (auto* p : head_.parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    extractor_.zero_grad();
    head_.zero_grad();
  }

  /// Parameters and running statistics, in a fixed order.
  std::vector<std::pair<std::string, nn::Tensor*>> state() {
    auto out = nn::named_state(extractor_, "extractor.");
    for (auto& e : nn::named_state(head_, "head.")) out.push_back(e);
    return out;
  }

  [[nodiscard]] std::vector<nn::NamedTensor> weights() const {
    auto& self = const_cast<QNetwork&>(*this);
    return nn::snapshot(self.state());
  }

  void load_weights(const std::vector<nn::NamedTensor>& stored) { nn::load_state(stored, state()); }

  nn::Sequential& extractor() { return extractor_; }
  nn::Sequential& head() { return head_; }

 private:
  std::size_t build_extractor(std::size_t in, std::mt19937_64& rng) {
    const std::size_t ch = cfg_.conv_channels;
    switch (cfg_.kind) {
      case ExtractorKind::NoneDirect: return in;
      case ExtractorKind::MLP:
        extractor_.emplace<nn::Dense>(in, cfg_.mlp_width, rng);
        extractor_.emplace<nn::ReLU>();
        extractor_.emplace<nn::Dense>(cfg_.mlp_width, cfg_.mlp_width, rng);
        extractor_.emplace<nn::ReLU>();
        return cfg_.mlp_width;
      case ExtractorKind::CNN1D: {
        // Windowed: time 3 x channels OHLC. Vanilla: the 4 prices as a 1-channel sequence.
        const std::size_t len = cfg_.mode == InputMode::Windowed ? kWindowedSteps : 4;
        const std::size_t channels = cfg_.mode == InputMode::Windowed ? 4 : 1;
        const std::size_t k = std::min(cfg_.conv1d_kernel, len);
        extractor_.emplace<nn::Reshape>(nn::Shape{len, channels});
        extractor_.emplace<nn::Conv1D>(channels, ch, k, rng);
        extractor_.emplace<nn::ReLU>();
        extractor_.emplace<nn::Reshape>();
        return (len - k + 1) * ch;
      }
      case ExtractorKind::CNN2D: {
        const std::size_t k = cfg_.conv2d_kernel;
        extractor_.emplace<nn::Reshape>(nn::Shape{kWindowedSteps, 4, 1});
        extractor_.emplace<nn::Conv2D>(1, ch, k, k, rng);
        extractor_.emplace<nn::ReLU>();
        extractor_.emplace<nn::Reshape>();
        return (kWindowedSteps - k + 1) * (4 - k + 1) * ch;
      }
      case ExtractorKind::GRU:
        extractor_.emplace<nn::Reshape>(nn::Shape{kWindowedSteps, 4});
        extractor_.emplace<nn::GRU>(4, cfg_.gru_hidden, rng);
        return cfg_.gru_hidden;
    }
    throw ConfigError("unknown extractor kind");
  }

  QNetworkConfig cfg_;
  nn::Sequential extractor_;
  nn::Sequential head_;
  std::size_t feature_dim_ = 0;
};

/// Greedy action over the network outputs (ties: Buy, None, Sell).
inline AgentDecision dqn_act(QNetwork& net, const nn::Tensor& state) {
  const nn::Tensor batch = state.rank() == 1 ? state.reshaped({1, state.size()}) : state;
  if (batch.dim(0) != 1) throw ComputeError("dqn_act takes a single state");
  const nn::Tensor q = net.forward(batch, nn::Mode::Eval);
  const ActionValues qv{q[0], q[1], q[2]};
  AgentDecision d{greedy(qv), {}};
  d.diagnostics["q_buy"] = qv[0];
  d.diagnostics["q_none"] = qv[1];
  d.diagnostics["q_sell"] = qv[2];
  return d;
}

// ---------------------------------------------------------------------------
// Replay memory and losses
// ---------------------------------------------------------------------------

struct Transition {
  nn::Tensor state;
  Action action = Action::None;
  double reward = 0;
  nn::Tensor next_state;
  bool terminal = false;
};

/// Bounded store; once full, a uniformly chosen item is replaced.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
  }

  /// Returns the slot written.
  std::size_t push(Transition tr, std::mt19937_64& rng) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(tr));
      return items_.size() - 1;
    }
    std::uniform_int_distribution<std::size_t> pick(0, capacity_ - 1);
    const std::size_t slot = pick(rng);
    items_[slot] = std::move(tr);
    return slot;
  }

  /// `count` distinct items, uniformly without replacement.
  [[nodiscard]] std::vector<const Transition*> sample(std::size_t count, std::mt19937_64& rng) const {
    if (count > items_.size()) throw ComputeError("replay sample larger than memory");
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<const Transition*> out;
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(&items_[idx[i]]);
    }
    return out;
  }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] const std::vector<Transition>& items() const { return items_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> items_;
};

/// y_j = r_j for terminal transitions, else r_j + gamma * max_a Q_target(s'_j, a).
inline nn::Tensor td_targets(std::span<const Transition* const> batch, QNetwork& target_net, double gamma) {
  if (batch.empty()) throw ComputeError("td_targets on an empty batch");
  std::vector<nn::Tensor> next;
  for (const auto* tr : batch) next.push_back(tr->next_state);
  const nn::Tensor q = target_net.forward(nn::stack(next), nn::Mode::Eval);
  nn::Tensor y({batch.size()});
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double best = std::max({q[j * 3], q[j * 3 + 1], q[j * 3 + 2]});
    y[j] = batch[j]->terminal ? batch[j]->reward : batch[j]->reward + gamma * best;
  }
  return y;
}

/// Mean over the batch of (y_j - Q(s_j)[a_j])^2. Leaves the gradient of that
/// loss in the online network's parameters (zeroed first). Batches of one run
/// in Eval mode since batch normalization needs two samples to train.
inline double dqn_loss(QNetwork& online, std::span<const Transition* const> batch, const nn::Tensor& targets) {
  if (batch.empty()) throw ComputeError("dqn_loss on an empty batch");
  if (targets.size() != batch.size()) throw ComputeError("dqn_loss: target count differs from batch size");
  std::vector<nn::Tensor> states;
  for (const auto* tr : batch) states.push_back(tr->state);
  const std::size_t n = batch.size();
  const nn::Mode mode = n >= 2 ? nn::Mode::Train : nn::Mode::Eval;
  online.zero_grad();
  const nn::Tensor q = online.forward(nn::stack(states), mode);
  nn::Tensor grad(q.shape());
  double loss = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = j * 3 + action_index(batch[j]->action);
    const double diff = q[k] - targets[j];
    loss += diff * diff;
    grad[k] = 2 * diff / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw ComputeError("dqn_loss: non-finite loss");
  online.backward(grad);
  return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct DqnParams {
  double gamma = 0.9;
  int reward_n = 5;
  std::size_t replay_capacity = 20;
  std::size_t batch_size = 10;
  std::size_t target_sync_steps = 0;  // 0: one episode's worth of gradient steps
  std::size_t episodes = 30;
  double epsilon_start = 0.9;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_episodes = 10;
  double tc = 0;
  double lr = 1e-4;

  [[nodiscard]] bool valid() const {
    return gamma > 0 && gamma <= 1 && reward_n >= 1 && replay_capacity >= 1 && batch_size >= 1 &&
           batch_size <= replay_capacity && episodes >= 1 && epsilon_end <= epsilon_start && epsilon_start <= 1 &&
           epsilon_end >= 0 && tc >= 0 && tc < 1 && lr > 0;
  }
};

struct DqnEpisodeLog {
  std::size_t episode = 0;
  double mean_loss = 0;
  double train_total_return = 0;
  double epsilon = 0;
};

struct DqnTrainResult {
  QNetwork net;
  std::vector<DqnEpisodeLog> log;
  double max_body = 0;
};

/// Optional observer called after every gradient step.
struct DqnTrainHooks {
  std::function<void(std::size_t step, QNetwork& online, QNetwork& target, bool synced)> after_step;
};

/// Batched greedy actions for pre-encoded states.
inline std::vector<Action> greedy_actions(QNetwork& net, std::span<const nn::Tensor> states) {
  const nn::Tensor q = net.forward(nn::stack(states), nn::Mode::Eval);
  std::vector<Action> out;
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(greedy({q[i * 3], q[i * 3 + 1], q[i * 3 + 2]}));
  return out;
}

/// Long-only total return of a fixed action sequence (next-day fills, no cost).
inline double replay_total_return(std::span<const double> closes, std::size_t first, std::span<const Action> actions) {
  double cash = 1, shares = 0;
  Action pending = Action::None;
  for (std::size_t t = first; t < closes.size(); ++t) {
    const Action now = pending;
    pending = t - first < actions.size() ? actions[t - first] : Action::None;
    if (now == Action::Buy && shares == 0) {
      shares = cash / closes[t];
      cash = 0;
    } else if (now == Action::Sell && shares > 0) {
      cash = shares * closes[t];
      shares = 0;
    }
  }
  return cash + shares * closes.back() - 1;
}

/// Deep Q-learning over one training series. Each episode walks t across the
/// series, acting epsilon-greedily from the online network, scoring the action
/// with the n-step reward, storing (s_t, a_t, r_t, s_{t+1}) and, once the
/// memory holds a batch, taking one Adam step on the TD loss against the
/// frozen target network. The target copies the online weights every
/// `target_sync_steps` gradient steps.
inline DqnTrainResult dqn_train(const OhlcSeries& series, const QNetworkConfig& net_cfg, const DqnParams& params,
                                std::mt19937_64& rng, const PatternParams& patterns = {},
                                const TrendParams& trend = {}, const DqnTrainHooks& hooks = {}) {
  if (!params.valid()) throw ConfigError("invalid DQN parameters");
  validate_pairing(net_cfg.mode, net_cfg.kind);
  const auto n = static_cast<std::size_t>(params.reward_n);
  const std::size_t first = first_encodable(net_cfg.mode, trend);
  if (series.size() < first + n + 2) throw DataError("series too short for DQN training");
  const std::size_t last = series.size() - 1 - n;  // last step with an n-step reward

  const double max_body = max_body_length(series);
  const auto closes = series.closes();
  ObservationBuilder obs(series, trend, max_body, input_window(net_cfg.mode));
  std::vector<nn::Tensor> states;
  for (std::size_t t = first; t <= last + 1; ++t) states.push_back(encode_state(obs.at(t), net_cfg.mode, patterns));
  const std::size_t steps_per_episode = last - first + 1;
  const std::size_t sync_every = params.target_sync_steps ? params.target_sync_steps : steps_per_episode;

  DqnTrainResult result{QNetwork(net_cfg, rng), {}, max_body};
  QNetwork& online = result.net;
  QNetwork target = online;
  ReplayMemory memory(params.replay_capacity);
  nn::AdamState adam;
  adam.lr = params.lr;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> random_action(0, kActions.size() - 1);
  std::size_t grad_steps = 0;

  for (std::size_t ep = 0; ep < params.episodes; ++ep) {
    const double eps = params.epsilon_decay_episodes == 0
                           ? params.epsilon_end
                           : linear_epsilon(params.epsilon_start, params.epsilon_end,
                                            std::min(ep, params.epsilon_decay_episodes),
                                            params.epsilon_decay_episodes + 1);
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t t = first; t <= last; ++t) {
      const nn::Tensor& s = states[t - first];
      Action a;
      if (coin(rng) < eps)
        a = kActions[random_action(rng)];
      else
        a = dqn_act(online, s).action;
      const double r = n_step_reward(closes, t, params.reward_n, a, params.tc);
      memory.push(Transition{s, a, r, states[t + 1 - first], t == last}, rng);

      if (memory.size() < params.batch_size) continue;
      const auto batch = memory.sample(params.batch_size, rng);
      const nn::Tensor y = td_targets(batch, target, params.gamma);
      loss_sum += dqn_loss(online, batch, y);
      ++loss_count;
      auto ps = online.parameters();
      nn::adam_step(ps, adam);
      ++grad_steps;
      const bool sync = grad_steps % sync_every == 0;
      if (sync) target = online;
      if (hooks.after_step) hooks.after_step(grad_steps, online, target, sync);
    }
    const auto greedy_seq = greedy_actions(online, std::span<const nn::Tensor>(states).first(steps_per_episode));
    result.log.push_back({ep, loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0,
                          replay_total_return(closes, first, greedy_seq), eps});
  }
  return result;
}

/// Greedy DQN policy as a backtestable agent.
class DqnAgent final : public Agent {
 public:
  DqnAgent(QNetwork net, PatternParams params) : net_(std::move(net)), params_(params) {}

  AgentDecision act(const Observation& obs) override {
    check_window(*this, obs);
    return dqn_act(net_, encode_state(obs, net_.config().mode, params_));
  }
  [[nodiscard]] std::size_t window() const override { return input_window(net_.config().mode); }
  [[nodiscard]] std::string name() const override { return "dqn"; }
  QNetwork& network() { return net_; }

 private:
  QNetwork net_;
  PatternParams params_;
};

}  // namespace candlerl
