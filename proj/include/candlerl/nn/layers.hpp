#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "candlerl/error.hpp"
#include "candlerl/nn/tensor.hpp"

namespace candlerl::nn {

enum class Mode { Train, Eval };

enum class LayerKind { Dense, BatchNorm, Conv1D, Conv2D, GRU, Softmax, ReLU, Reshape };

inline constexpr std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Conv1D: return "conv1d";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::GRU: return "gru";
    case LayerKind::Softmax: return "softmax";
    case LayerKind::ReLU: return "relu";
    case LayerKind::Reshape: return "reshape";
  }
  return "?";
}

/// Trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

/// A layer caches what its last forward needs; backward consumes that cache,
/// accumulates parameter gradients and returns the input gradient.
class Layer {
 public:
  virtual ~Layer() = default;

  [[nodiscard]] virtual LayerKind kind() const = 0;
  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  [[nodiscard]] virtual std::unique_ptr<Layer> clone() const = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Non-trainable state that belongs in a checkpoint (running statistics).
  virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(0.0);
  }
};

namespace detail {

inline void init_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : t.data()) x = u(rng);
}

inline void require_cache(bool has, const char* layer) {
  if (!has) throw ComputeError(std::string(layer) + ": backward called without a matching forward");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// ---------------------------------------------------------------------------

/// y = W x + b on [B, in] -> [B, out].
class Dense final : public Layer {
 public:
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : in_(in), out_(out), w_("weight", Tensor({out, in})), b_("bias", Tensor({out})) {
    if (in == 0 || out == 0) throw ComputeError("dense: dimensions must be positive");
    detail::init_uniform(w_.value, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
  }

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Dense; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }
  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ComputeError("dense: expected [B," + std::to_string(in_) + "], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0);
    Tensor y({batch, out_});
    const auto& w = w_.value;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < out_; ++o) {
        double acc = b_.value[o];
        for (std::size_t i = 0; i < in_; ++i) acc += w[o * in_ + i] * x[b * in_ + i];
        y[b * out_ + o] = acc;
      }
    input_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(input_.has_value(), "dense");
    const auto& x = *input_;
    const std::size_t batch = x.dim(0);
    require_shape(g, {batch, out_}, "dense backward");
    Tensor dx({batch, in_});
    const auto& w = w_.value;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < out_; ++o) {
        const double go = g[b * out_ + o];
        if (go == 0.0) continue;
        b_.grad[o] += go;
        for (std::size_t i = 0; i < in_; ++i) {
          w_.grad[o * in_ + i] += go * x[b * in_ + i];
          dx[b * in_ + i] += go * w[o * in_ + i];
        }
      }
    return dx;
  }

 private:
  std::size_t in_, out_;
  Parameter w_, b_;
  std::optional<Tensor> input_;
};

// ---------------------------------------------------------------------------

class ReLU final : public Layer {
 public:
  [[nodiscard]] LayerKind kind() const override { return LayerKind::ReLU; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

  Tensor forward(const Tensor& x, Mode) override {
    Tensor y = x;
    for (auto& v : y.data()) v = v > 0 ? v : 0.0;
    input_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(input_.has_value(), "relu");
    require_shape(g, input_->shape(), "relu backward");
    Tensor dx = g;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!((*input_)[i] > 0)) dx[i] = 0.0;
    return dx;
  }

 private:
  std::optional<Tensor> input_;
};

// ---------------------------------------------------------------------------

/// Per-feature normalization on [B, F]. Train mode uses batch statistics and
/// updates the running estimates; Eval mode uses the running estimates.
class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(std::size_t features, double momentum = 0.1, double eps = 1e-5)
      : f_(features),
        momentum_(momentum),
        eps_(eps),
        gamma_("gamma", Tensor({features}, 1.0)),
        beta_("beta", Tensor({features}, 0.0)),
        running_mean_({features}, 0.0),
        running_var_({features}, 1.0) {
    if (features == 0) throw ComputeError("batchnorm: features must be positive");
  }

  [[nodiscard]] LayerKind kind() const override { return LayerKind::BatchNorm; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
  std::vector<Parameter*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<std::pair<std::string, Tensor*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }
  [[nodiscard]] const Tensor& running_mean() const { return running_mean_; }
  [[nodiscard]] const Tensor& running_var() const { return running_var_; }

  Tensor forward(const Tensor& x, Mode mode) override {
    if (x.rank() != 2 || x.dim(1) != f_)
      throw ComputeError("batchnorm: expected [B," + std::to_string(f_) + "], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0);
    Cache c;
    c.train = mode == Mode::Train;
    c.xhat = Tensor(x.shape());
    c.inv_std = Tensor({f_});
    Tensor y(x.shape());
    if (c.train) {
      if (batch < 2) throw ComputeError("batchnorm: Train mode needs a batch of at least 2");
      for (std::size_t j = 0; j < f_; ++j) {
        double mean = 0;
        for (std::size_t b = 0; b < batch; ++b) mean += x[b * f_ + j];
        mean /= static_cast<double>(batch);
        double ss = 0;
        for (std::size_t b = 0; b < batch; ++b) {
          const double d = x[b * f_ + j] - mean;
          ss += d * d;
        }
        const double var = ss / static_cast<double>(batch);
        const double inv = 1.0 / std::sqrt(var + eps_);
        c.inv_std[j] = inv;
        for (std::size_t b = 0; b < batch; ++b) c.xhat[b * f_ + j] = (x[b * f_ + j] - mean) * inv;
        running_mean_[j] = (1 - momentum_) * running_mean_[j] + momentum_ * mean;
        running_var_[j] = (1 - momentum_) * running_var_[j] + momentum_ * ss / static_cast<double>(batch - 1);
      }
    } else {
      for (std::size_t j = 0; j < f_; ++j) {
        const double inv = 1.0 / std::sqrt(running_var_[j] + eps_);
        c.inv_std[j] = inv;
        for (std::size_t b = 0; b < batch; ++b) c.xhat[b * f_ + j] = (x[b * f_ + j] - running_mean_[j]) * inv;
      }
    }
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < f_; ++j) y[b * f_ + j] = gamma_.value[j] * c.xhat[b * f_ + j] + beta_.value[j];
    cache_ = std::move(c);
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(cache_.has_value(), "batchnorm");
    const auto& c = *cache_;
    require_shape(g, c.xhat.shape(), "batchnorm backward");
    const std::size_t batch = g.dim(0);
    const double nb = static_cast<double>(batch);
    Tensor dx(g.shape());
    for (std::size_t j = 0; j < f_; ++j) {
      double sum_g = 0, sum_gx = 0;
      for (std::size_t b = 0; b < batch; ++b) {
        sum_g += g[b * f_ + j];
        sum_gx += g[b * f_ + j] * c.xhat[b * f_ + j];
      }
      gamma_.grad[j] += sum_gx;
      beta_.grad[j] += sum_g;
      const double scale = gamma_.value[j] * c.inv_std[j];
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t k = b * f_ + j;
        dx[k] = c.train ? scale * (g[k] - sum_g / nb - c.xhat[k] * sum_gx / nb) : scale * g[k];
      }
    }
    return dx;
  }

 private:
  struct Cache {
    bool train = false;
    Tensor xhat;
    Tensor inv_std;
  };
  std::size_t f_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------

/// Valid, stride-1 cross-correlation along time. Input [B, L, C] (time-major,
/// channels last), output [B, L - k + 1, K].
class Conv1D final : public Layer {
 public:
  Conv1D(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::mt19937_64& rng)
      : c_(in_channels),
        k_(out_channels),
        kw_(kernel),
        w_("weight", Tensor({out_channels, kernel, in_channels})),
        b_("bias", Tensor({out_channels})) {
    if (c_ == 0 || k_ == 0 || kw_ == 0) throw ComputeError("conv1d: dimensions must be positive");
    detail::init_uniform(w_.value, std::sqrt(6.0 / static_cast<double>(kw_ * c_ + kw_ * k_)), rng);
  }

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Conv1D; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1D>(*this); }
  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3 || x.dim(2) != c_ || x.dim(1) < kw_)
      throw ComputeError("conv1d: expected [B,L>=" + std::to_string(kw_) + "," + std::to_string(c_) + "], got " +
                         shape_str(x.shape()));
    const std::size_t batch = x.dim(0), len = x.dim(1), out_len = len - kw_ + 1;
    Tensor y({batch, out_len, k_});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < out_len; ++i)
        for (std::size_t o = 0; o < k_; ++o) {
          double acc = b_.value[o];
          for (std::size_t j = 0; j < kw_; ++j)
            for (std::size_t c = 0; c < c_; ++c)
              acc += w_.value[(o * kw_ + j) * c_ + c] * x[(b * len + i + j) * c_ + c];
          y[(b * out_len + i) * k_ + o] = acc;
        }
    input_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(input_.has_value(), "conv1d");
    const auto& x = *input_;
    const std::size_t batch = x.dim(0), len = x.dim(1), out_len = len - kw_ + 1;
    require_shape(g, {batch, out_len, k_}, "conv1d backward");
    Tensor dx(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < out_len; ++i)
        for (std::size_t o = 0; o < k_; ++o) {
          const double go = g[(b * out_len + i) * k_ + o];
          b_.grad[o] += go;
          for (std::size_t j = 0; j < kw_; ++j)
            for (std::size_t c = 0; c < c_; ++c) {
              const std::size_t wi = (o * kw_ + j) * c_ + c, xi = (b * len + i + j) * c_ + c;
              w_.grad[wi] += go * x[xi];
              dx[xi] += go * w_.value[wi];
            }
        }
    return dx;
  }

 private:
  std::size_t c_, k_, kw_;
  Parameter w_, b_;
  std::optional<Tensor> input_;
};

// ---------------------------------------------------------------------------

/// Valid, stride-1 cross-correlation over the (time, feature) plane. Input
/// [B, H, W, C], output [B, H - kh + 1, W - kw + 1, K].
class Conv2D final : public Layer {
 public:
  Conv2D(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw, std::mt19937_64& rng)
      : c_(in_channels),
        k_(out_channels),
        kh_(kh),
        kw_(kw),
        w_("weight", Tensor({out_channels, kh, kw, in_channels})),
        b_("bias", Tensor({out_channels})) {
    if (c_ == 0 || k_ == 0 || kh_ == 0 || kw_ == 0) throw ComputeError("conv2d: dimensions must be positive");
    const double fan = static_cast<double>(kh_ * kw_);
    detail::init_uniform(w_.value, std::sqrt(6.0 / (fan * static_cast<double>(c_ + k_))), rng);
  }

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Conv2D; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2D>(*this); }
  std::vector<Parameter*> parameters() override { return {&w_, &b_}; }
  Parameter& weight() { return w_; }
  Parameter& bias() { return b_; }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 4 || x.dim(3) != c_ || x.dim(1) < kh_ || x.dim(2) < kw_)
      throw ComputeError("conv2d: incompatible input " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;
    Tensor y({batch, oh, ow, k_});
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s)
          for (std::size_t o = 0; o < k_; ++o) {
            double acc = b_.value[o];
            for (std::size_t i = 0; i < kh_; ++i)
              for (std::size_t j = 0; j < kw_; ++j)
                for (std::size_t c = 0; c < c_; ++c)
                  acc += w_.value[((o * kh_ + i) * kw_ + j) * c_ + c] * x[((b * h + r + i) * w + s + j) * c_ + c];
            y[((b * oh + r) * ow + s) * k_ + o] = acc;
          }
    input_ = x;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(input_.has_value(), "conv2d");
    const auto& x = *input_;
    const std::size_t batch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;
    require_shape(g, {batch, oh, ow, k_}, "conv2d backward");
    Tensor dx(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t s = 0; s < ow; ++s)
          for (std::size_t o = 0; o < k_; ++o) {
            const double go = g[((b * oh + r) * ow + s) * k_ + o];
            b_.grad[o] += go;
            for (std::size_t i = 0; i < kh_; ++i)
              for (std::size_t j = 0; j < kw_; ++j)
                for (std::size_t c = 0; c < c_; ++c) {
                  const std::size_t wi = ((o * kh_ + i) * kw_ + j) * c_ + c;
                  const std::size_t xi = ((b * h + r + i) * w + s + j) * c_ + c;
                  w_.grad[wi] += go * x[xi];
                  dx[xi] += go * w_.value[wi];
                }
          }
    return dx;
  }

 private:
  std::size_t c_, k_, kh_, kw_;
  Parameter w_, b_;
  std::optional<Tensor> input_;
};

// ---------------------------------------------------------------------------

/// Gated recurrent unit over [B, T, F]; returns the final hidden state [B, H].
/// Gates (rows of the stacked weights, in order): reset r, update z, candidate n.
///   r = sig(Wx_r x + bx_r + Wh_r h + bh_r)
///   z = sig(Wx_z x + bx_z + Wh_z h + bh_z)
///   n = tanh(Wx_n x + bx_n + r * (Wh_n h + bh_n))
///   h' = (1 - z) * n + z * h,   h_0 = 0
class GRU final : public Layer {
 public:
  GRU(std::size_t input_size, std::size_t hidden, std::mt19937_64& rng)
      : f_(input_size),
        h_(hidden),
        wx_("weight_x", Tensor({3 * hidden, input_size})),
        wh_("weight_h", Tensor({3 * hidden, hidden})),
        bx_("bias_x", Tensor({3 * hidden})),
        bh_("bias_h", Tensor({3 * hidden})) {
    if (f_ == 0 || h_ == 0) throw ComputeError("gru: dimensions must be positive");
    const double bound = std::sqrt(1.0 / static_cast<double>(hidden));
    detail::init_uniform(wx_.value, bound, rng);
    detail::init_uniform(wh_.value, bound, rng);
  }

  [[nodiscard]] LayerKind kind() const override { return LayerKind::GRU; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<GRU>(*this); }
  std::vector<Parameter*> parameters() override { return {&wx_, &wh_, &bx_, &bh_}; }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 3 || x.dim(2) != f_ || x.dim(1) == 0)
      throw ComputeError("gru: expected [B,T," + std::to_string(f_) + "], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), steps = x.dim(1), H = h_;
    Cache c;
    c.x = x;
    c.h.assign(steps + 1, Tensor({batch, H}));
    c.r.assign(steps, Tensor({batch, H}));
    c.z.assign(steps, Tensor({batch, H}));
    c.n.assign(steps, Tensor({batch, H}));
    c.ah_n.assign(steps, Tensor({batch, H}));
    std::vector<double> ax(3 * H), ah(3 * H);
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t b = 0; b < batch; ++b) {
        const double* xt = x.data().data() + (b * steps + t) * f_;
        const double* hp = c.h[t].data().data() + b * H;
        for (std::size_t g = 0; g < 3 * H; ++g) {
          double sx = bx_.value[g], sh = bh_.value[g];
          for (std::size_t i = 0; i < f_; ++i) sx += wx_.value[g * f_ + i] * xt[i];
          for (std::size_t i = 0; i < H; ++i) sh += wh_.value[g * H + i] * hp[i];
          ax[g] = sx;
          ah[g] = sh;
        }
        for (std::size_t j = 0; j < H; ++j) {
          const double r = detail::sigmoid(ax[j] + ah[j]);
          const double z = detail::sigmoid(ax[H + j] + ah[H + j]);
          const double n = std::tanh(ax[2 * H + j] + r * ah[2 * H + j]);
          c.r[t][b * H + j] = r;
          c.z[t][b * H + j] = z;
          c.n[t][b * H + j] = n;
          c.ah_n[t][b * H + j] = ah[2 * H + j];
          c.h[t + 1][b * H + j] = (1 - z) * n + z * hp[j];
        }
      }
    Tensor out = c.h.back();
    cache_ = std::move(c);
    return out;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(cache_.has_value(), "gru");
    const auto& c = *cache_;
    const std::size_t batch = c.x.dim(0), steps = c.x.dim(1), H = h_;
    require_shape(g, {batch, H}, "gru backward");
    Tensor dx(c.x.shape());
    Tensor dh = g;
    std::vector<double> da_x(3 * H), da_h(3 * H);
    for (std::size_t t = steps; t-- > 0;) {
      Tensor dh_prev({batch, H});
      for (std::size_t b = 0; b < batch; ++b) {
        const double* hp = c.h[t].data().data() + b * H;
        for (std::size_t j = 0; j < H; ++j) {
          const std::size_t k = b * H + j;
          const double r = c.r[t][k], z = c.z[t][k], n = c.n[t][k];
          const double d = dh[k];
          const double dn = d * (1 - z);
          const double dz = d * (hp[j] - n);
          dh_prev[k] += d * z;
          const double dan = dn * (1 - n * n);
          const double dr = dan * c.ah_n[t][k];
          da_x[j] = dr * r * (1 - r);
          da_h[j] = da_x[j];
          da_x[H + j] = dz * z * (1 - z);
          da_h[H + j] = da_x[H + j];
          da_x[2 * H + j] = dan;
          da_h[2 * H + j] = dan * r;
        }
        const double* xt = c.x.data().data() + (b * steps + t) * f_;
        double* dxt = dx.data().data() + (b * steps + t) * f_;
        for (std::size_t gi = 0; gi < 3 * H; ++gi) {
          bx_.grad[gi] += da_x[gi];
          bh_.grad[gi] += da_h[gi];
          for (std::size_t i = 0; i < f_; ++i) {
            wx_.grad[gi * f_ + i] += da_x[gi] * xt[i];
            dxt[i] += da_x[gi] * wx_.value[gi * f_ + i];
          }
          for (std::size_t i = 0; i < H; ++i) {
            wh_.grad[gi * H + i] += da_h[gi] * hp[i];
            dh_prev[b * H + i] += da_h[gi] * wh_.value[gi * H + i];
          }
        }
      }
      dh = std::move(dh_prev);
    }
    return dx;
  }

 private:
  struct Cache {
    Tensor x;
    std::vector<Tensor> h, r, z, n, ah_n;
  };
  std::size_t f_, h_;
  Parameter wx_, wh_, bx_, bh_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------

/// Row-wise softmax on [B, K] with max subtraction.
class Softmax final : public Layer {
 public:
  [[nodiscard]] LayerKind kind() const override { return LayerKind::Softmax; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() != 2) throw ComputeError("softmax: expected [B,K], got " + shape_str(x.shape()));
    const std::size_t batch = x.dim(0), k = x.dim(1);
    Tensor y(x.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      double m = x[b * k];
      for (std::size_t i = 1; i < k; ++i) m = std::max(m, x[b * k + i]);
      double sum = 0;
      for (std::size_t i = 0; i < k; ++i) sum += (y[b * k + i] = std::exp(x[b * k + i] - m));
      for (std::size_t i = 0; i < k; ++i) y[b * k + i] /= sum;
    }
    output_ = y;
    return y;
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(output_.has_value(), "softmax");
    const auto& y = *output_;
    require_shape(g, y.shape(), "softmax backward");
    const std::size_t batch = y.dim(0), k = y.dim(1);
    Tensor dx(y.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      double dot = 0;
      for (std::size_t i = 0; i < k; ++i) dot += g[b * k + i] * y[b * k + i];
      for (std::size_t i = 0; i < k; ++i) dx[b * k + i] = y[b * k + i] * (g[b * k + i] - dot);
    }
    return dx;
  }

 private:
  std::optional<Tensor> output_;
};

// ---------------------------------------------------------------------------

/// Reshapes each sample; an empty target shape flattens to [B, n].
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape sample_shape = {}) : sample_(std::move(sample_shape)) {}

  [[nodiscard]] LayerKind kind() const override { return LayerKind::Reshape; }
  [[nodiscard]] std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }

  Tensor forward(const Tensor& x, Mode) override {
    if (x.rank() < 1) throw ComputeError("reshape: input needs a batch axis");
    in_shape_ = x.shape();
    const std::size_t batch = x.dim(0);
    Shape s{batch};
    if (sample_.empty())
      s.push_back(x.size() / std::max<std::size_t>(batch, 1));
    else
      s.insert(s.end(), sample_.begin(), sample_.end());
    return x.reshaped(std::move(s));
  }

  Tensor backward(const Tensor& g) override {
    detail::require_cache(in_shape_.has_value(), "reshape");
    return g.reshaped(*in_shape_);
  }

 private:
  Shape sample_;
  std::optional<Shape> in_shape_;
};

// ---------------------------------------------------------------------------

/// Ordered layer stack with value semantics (copies are deep).
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& o) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  Sequential& operator=(const Sequential& o) {
    if (this != &o) {
      Sequential tmp(o);
      layers_ = std::move(tmp.layers_);
    }
    return *this;
  }
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto p = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *p;
    layers_.push_back(std::move(p));
    return ref;
  }
  void push_back(std::unique_ptr<Layer> l) { layers_.push_back(std::move(l)); }

  Tensor forward(const Tensor& x, Mode mode) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
  }

  Tensor backward(const Tensor& g) {
    Tensor d = g;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
    return d;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
      for (auto* p : l->parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto& l : layers_) l->zero_grad();
  }

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  [[nodiscard]] bool empty() const { return layers_.empty(); }
  Layer& operator[](std::size_t i) { return *layers_[i]; }
  const Layer& operator[](std::size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// ---------------------------------------------------------------------------

struct LossGrad {
  double loss = 0;
  Tensor grad;  // d loss / d prediction
};

/// Mean squared error over every element.
inline LossGrad mse_loss(const Tensor& pred, const Tensor& target) {
  require_shape(target, pred.shape(), "mse target");
  if (pred.size() == 0) throw ComputeError("mse of an empty tensor");
  LossGrad out{0.0, Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    out.loss += d * d / n;
    out.grad[i] = 2 * d / n;
  }
  return out;
}

}  // namespace candlerl::nn
