#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "candlerl/nn/layers.hpp"

namespace candlerl::nn {

struct GradCheckReport {
  double max_relative_error = 0;
  std::string worst;  // coordinate with the largest error
  std::size_t coordinates = 0;
  bool passed = true;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// dividing rounding noise by rounding noise.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// One coordinate that can be perturbed, with its analytic derivative.
struct GradCoordinate {
  std::string label;
  double* value;
  double analytic;
};

/// Compares each coordinate's analytic derivative of `loss` to a central
/// difference with step `eps`. The relative-error floor is 1e-6 times the
/// largest analytic derivative in the check (at least 1e-6), so coordinates
/// whose true derivative is zero are judged against the gradient's scale.
inline GradCheckReport check_coordinates(const std::function<double()>& loss, std::vector<GradCoordinate> coords,
                                         double tolerance, double eps = 1e-5) {
  GradCheckReport r;
  double scale = 1;
  for (const auto& c : coords) scale = std::max(scale, std::abs(c.analytic));
  const double floor = 1e-6 * scale;
  for (auto& c : coords) {
    const double saved = *c.value;
    *c.value = saved + eps;
    const double up = loss();
    *c.value = saved - eps;
    const double down = loss();
    *c.value = saved;
    const double err = relative_error(c.analytic, (up - down) / (2 * eps), floor);
    ++r.coordinates;
    if (r.worst.empty() || err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst = c.label;
    }
  }
  r.passed = r.max_relative_error < tolerance;
  return r;
}

/// Gradient check of a layer stack under the scalar loss sum(out * proj),
/// with a fixed random projection `proj`. Covers every parameter and the input.
inline GradCheckReport grad_check(Sequential& net, const Tensor& input, double tolerance, Mode mode = Mode::Train,
                                  std::uint64_t seed = 7) {
  Tensor x = input;
  const Tensor probe = net.forward(x, mode);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor proj(probe.shape());
  for (auto& p : proj.data()) p = u(rng);

  auto loss = [&] {
    const Tensor y = net.forward(x, mode);
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * proj[i];
    return s;
  };

  net.zero_grad();
  net.forward(x, mode);
  const Tensor dx = net.backward(proj);

  std::vector<GradCoordinate> coords;
  for (std::size_t i = 0; i < x.size(); ++i) coords.push_back({"input[" + std::to_string(i) + "]", &x[i], dx[i]});
  std::size_t k = 0;
  for (auto* p : net.parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i)
      coords.push_back({"param" + std::to_string(k) + "." + p->name + "[" + std::to_string(i) + "]", &p->value[i],
                        p->grad[i]});
    ++k;
  }
  return check_coordinates(loss, std::move(coords), tolerance);
}

}  // namespace candlerl::nn
