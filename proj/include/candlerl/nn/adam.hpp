#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "candlerl/error.hpp"
#include "candlerl/nn/layers.hpp"

namespace candlerl::nn {

/// Adam moments for a fixed list of parameters.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

/// One bias-corrected Adam update of `params` from their accumulated grads.
/// Throws on non-finite gradients before touching any parameter.
inline void adam_step(std::span<Parameter* const> params, AdamState& s) {
  for (const auto* p : params)
    if (!p->grad.all_finite()) throw ComputeError("adam: non-finite gradient in '" + p->name + "'");
  if (s.m.empty()) {
    for (const auto* p : params) {
      s.m.emplace_back(p->value.shape());
      s.v.emplace_back(p->value.shape());
    }
  }
  if (s.m.size() != params.size()) throw ComputeError("adam: parameter list changed between steps");
  ++s.step;
  const double c1 = 1 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = s.m[k];
    auto& v = s.v[k];
    if (m.shape() != p.value.shape()) throw ComputeError("adam: moment shape mismatch for '" + p.name + "'");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = s.beta1 * m[i] + (1 - s.beta1) * g;
      v[i] = s.beta2 * v[i] + (1 - s.beta2) * g * g;
      p.value[i] -= s.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + s.eps_hat);
    }
  }
}

}  // namespace candlerl::nn
