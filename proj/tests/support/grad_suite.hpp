#pragma once

#include <random>
#include <string>
#include <vector>

#include "candlerl/dqn.hpp"
#include "candlerl/nn/grad_check.hpp"

namespace fixtures {

namespace nn = candlerl::nn;

struct GradCase {
  std::string name;
  nn::GradCheckReport report;
};

inline nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  nn::Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Values bounded away from zero, so ReLU kinks stay outside the difference step.
inline nn::Tensor off_zero_tensor(nn::Shape shape, std::mt19937_64& rng) {
  nn::Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.0);
  std::bernoulli_distribution flip(0.5);
  for (auto& v : t.data())
    if (flip(rng)) v = -v;
  return t;
}

/// Gradient of mse(softmax(x), target) with respect to x.
inline nn::GradCheckReport softmax_mse_check(double tolerance, std::mt19937_64& rng) {
  nn::Softmax sm;
  nn::Tensor x = random_tensor({4, 3}, rng, -2, 2);
  const nn::Tensor target = random_tensor({4, 3}, rng, 0, 1);
  auto loss = [&] { return nn::mse_loss(sm.forward(x, nn::Mode::Train), target).loss; };
  const auto lg = nn::mse_loss(sm.forward(x, nn::Mode::Train), target);
  const nn::Tensor dx = sm.backward(lg.grad);
  std::vector<nn::GradCoordinate> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"x[" + std::to_string(i) + "]", &x[i], dx[i]});
  return nn::check_coordinates(loss, std::move(coords), tolerance);
}

/// Every layer kind on its own and in the small stacks the extractors use.
inline std::vector<GradCase> layer_grad_cases(double tolerance) {
  std::mt19937_64 rng(20240611);
  std::vector<GradCase> out;
  auto run = [&](const std::string& name, nn::Sequential net, const nn::Tensor& x, nn::Mode mode = nn::Mode::Train) {
    out.push_back({name, nn::grad_check(net, x, tolerance, mode)});
  };
  {
    nn::Sequential s;
    s.emplace<nn::Dense>(4, 3, rng);
    run("dense 4->3", s, random_tensor({5, 4}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Dense>(4, 3, rng);
    s.emplace<nn::Softmax>();
    run("dense 4->3 + softmax", s, random_tensor({5, 4}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Softmax>();
    run("softmax", s, random_tensor({3, 5}, rng, -3, 3));
  }
  {
    nn::Sequential s;
    s.emplace<nn::ReLU>();
    run("relu", s, off_zero_tensor({4, 6}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::BatchNorm>(3);
    run("batchnorm train", s, random_tensor({6, 3}, rng));
  }
  {
    nn::Sequential s;
    auto& bn = s.emplace<nn::BatchNorm>(3);
    bn.forward(random_tensor({8, 3}, rng, -2, 3), nn::Mode::Train);
    run("batchnorm eval", s, random_tensor({6, 3}, rng), nn::Mode::Eval);
  }
  {
    nn::Sequential s;
    s.emplace<nn::Conv1D>(4, 5, 3, rng);
    run("conv1d 4->5 k3", s, random_tensor({2, 5, 4}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Conv2D>(1, 3, 2, 2, rng);
    run("conv2d 1->3 2x2 on 3x4", s, random_tensor({2, 3, 4, 1}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Conv2D>(2, 3, 2, 3, rng);
    run("conv2d 2->3 2x3", s, random_tensor({2, 3, 4, 2}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::GRU>(4, 8, rng);
    run("gru 4->8 over 3 steps", s, random_tensor({2, 3, 4}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Reshape>(nn::Shape{3, 4});
    s.emplace<nn::GRU>(4, 5, rng);
    s.emplace<nn::Dense>(5, 2, rng);
    run("reshape + gru + dense", s, random_tensor({3, 12}, rng));
  }
  {
    nn::Sequential s;
    s.emplace<nn::Dense>(6, 8, rng);
    s.emplace<nn::BatchNorm>(8);
    s.emplace<nn::ReLU>();
    s.emplace<nn::Dense>(8, 3, rng);
    run("dense + batchnorm + relu + dense", s, random_tensor({5, 6}, rng));
  }
  out.push_back({"softmax + mse", softmax_mse_check(tolerance, rng)});
  return out;
}

struct NetworkVariant {
  candlerl::InputMode mode;
  candlerl::ExtractorKind kind;
  bool softmax = false;
};

/// Every extractor with each input mode it accepts, plus softmax heads.
inline std::vector<NetworkVariant> network_variants() {
  using candlerl::ExtractorKind;
  using candlerl::InputMode;
  std::vector<NetworkVariant> out;
  for (auto m : {InputMode::Pattern, InputMode::Vanilla, InputMode::CandleRep, InputMode::Windowed}) {
    out.push_back({m, ExtractorKind::MLP});
    out.push_back({m, ExtractorKind::NoneDirect});
  }
  out.push_back({InputMode::Vanilla, ExtractorKind::CNN1D});
  out.push_back({InputMode::Windowed, ExtractorKind::CNN1D});
  out.push_back({InputMode::Windowed, ExtractorKind::CNN2D});
  out.push_back({InputMode::Windowed, ExtractorKind::GRU});
  out.push_back({InputMode::Vanilla, ExtractorKind::MLP, true});
  out.push_back({InputMode::Windowed, ExtractorKind::GRU, true});
  return out;
}

inline std::string variant_name(const NetworkVariant& v) {
  return std::string(candlerl::to_string(v.kind)) + "/" + std::string(candlerl::to_string(v.mode)) +
         (v.softmax ? "/softmax" : "");
}

/// Full network check in Train mode on a batch of 4 random states. Every
/// coordinate of tensors up to `full_limit` elements is checked; larger
/// tensors contribute a random sample of `sample` coordinates.
inline nn::GradCheckReport network_grad_check(const NetworkVariant& v, double tolerance, std::uint64_t seed = 5,
                                              std::size_t full_limit = 2048, std::size_t sample = 512) {
  std::mt19937_64 rng(seed);
  candlerl::QNetworkConfig cfg;
  cfg.mode = v.mode;
  cfg.kind = v.kind;
  cfg.softmax_head = v.softmax;
  candlerl::QNetwork net(cfg, rng);
  nn::Tensor x = random_tensor({4, net.state_length()}, rng);
  const nn::Tensor proj = random_tensor({4, 3}, rng);
  auto loss = [&] {
    const nn::Tensor y = net.forward(x, nn::Mode::Train);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };
  net.zero_grad();
  net.forward(x, nn::Mode::Train);
  const nn::Tensor dx = net.backward(proj);

  std::vector<nn::GradCoordinate> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"state[" + std::to_string(i) + "]", &x[i], dx[i]});
  std::size_t k = 0;
  for (auto* p : net.parameters()) {
    std::vector<std::size_t> idx(p->value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > full_limit) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(sample);
    }
    for (auto i : idx)
      coords.push_back({"param" + std::to_string(k) + "." + p->name + "[" + std::to_string(i) + "]", &p->value[i],
                        p->grad[i]});
    ++k;
  }
  return nn::check_coordinates(loss, std::move(coords), tolerance);
}

}  // namespace fixtures
