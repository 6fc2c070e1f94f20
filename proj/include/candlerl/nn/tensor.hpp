#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "candlerl/error.hpp"

namespace candlerl::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw ComputeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
  }

  static Tensor vector(std::initializer_list<double> v) { return Tensor({v.size()}, std::vector<double>(v)); }

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape_.at(i); }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape with equal element count.
  [[nodiscard]] Tensor reshaped(Shape s) const {
    if (numel(s) != data_.size())
      throw ComputeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  [[nodiscard]] bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw ComputeError(std::string(what) + ": expected shape " + shape_str(expected) + ", got " +
                       shape_str(t.shape()));
}

/// Concatenates two [B, *] tensors along the feature axis, giving [B, n1 + n2].
inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  if (a.rank() < 1 || b.rank() < 1 || a.dim(0) != b.dim(0)) throw ComputeError("concat: batch mismatch");
  const std::size_t batch = a.dim(0), na = a.size() / batch, nb = b.size() / batch;
  Tensor out({batch, na + nb});
  for (std::size_t i = 0; i < batch; ++i) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(i * na), na,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * (na + nb)));
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(i * nb), nb,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * (na + nb) + na));
  }
  return out;
}

/// Features [offset, offset + count) of each row of a [B, *] tensor.
inline Tensor take_features(const Tensor& x, std::size_t offset, std::size_t count) {
  const std::size_t batch = x.dim(0), n = x.size() / batch;
  if (offset + count > n) throw ComputeError("take_features out of range");
  Tensor out({batch, count});
  for (std::size_t i = 0; i < batch; ++i)
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(i * n + offset), count,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * count));
  return out;
}

/// Stacks equally shaped samples into a [B, ...] batch.
inline Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) throw ComputeError("stack of zero tensors");
  Shape s{samples.size()};
  for (auto d : samples.front().shape()) s.push_back(d);
  Tensor out(s);
  const std::size_t n = samples.front().size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].shape() != samples.front().shape()) throw ComputeError("stack: shape mismatch");
    std::copy(samples[i].data().begin(), samples[i].data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return out;
}

}  // namespace candlerl::nn
