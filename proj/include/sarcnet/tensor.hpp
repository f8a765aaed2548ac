#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sarcnet/errors.hpp"

namespace sarcnet {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major array with an explicit shape. Scalar is float for training
/// and double for gradient checks.
template <class Scalar>
class Tensor {
 public:
  using value_type = Scalar;

  Tensor() = default;

  explicit Tensor(Shape shape, Scalar fill = Scalar{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto extent : shape_)
      if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }

  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                           shape_string(shape_));
  }

  static Tensor vector(std::initializer_list<Scalar> values) {
    return Tensor({values.size()}, std::vector<Scalar>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<Scalar> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Scalar> data() noexcept { return data_; }
  std::span<const Scalar> data() const noexcept { return data_; }
  std::vector<Scalar>& storage() noexcept { return data_; }
  const std::vector<Scalar>& storage() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  const Scalar& operator[](std::size_t i) const { return data_[i]; }

  Scalar& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const Scalar& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<Scalar> row(std::size_t r) {
    const std::size_t width = size() / shape_[0];
    return {data_.data() + r * width, width};
  }
  std::span<const Scalar> row(std::size_t r) const {
    const std::size_t width = size() / shape_[0];
    return {data_.data() + r * width, width};
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  template <class Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    std::transform(data_.begin(), data_.end(), out.storage().begin(),
                   [](Scalar v) { return static_cast<Other>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

/// Trainable tensor with its gradient and the two AdaDelta accumulators.
template <class Scalar>
struct Parameter {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  Tensor<Scalar> accum_sq_grad;
  Tensor<Scalar> accum_sq_delta;

  Parameter() = default;
  explicit Parameter(Tensor<Scalar> v)
      : value(std::move(v)), grad(value.shape()), accum_sq_grad(value.shape()), accum_sq_delta(value.shape()) {}

  const Shape& shape() const noexcept { return value.shape(); }
  void zero_grad() { grad.fill(Scalar{0}); }
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace detail

template <class Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<Scalar> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar aip = a.at(i, p);
      if (aip == Scalar{0}) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  return out;
}

/// Gradients of matmul given dL/d(out): returns (dL/da, dL/db).
template <class Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> matmul_backward(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                                                          const Tensor<Scalar>& grad_out) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  detail::require(grad_out.rank() == 2 && grad_out.dim(0) == m && grad_out.dim(1) == n,
                  "matmul_backward: grad shape " + shape_string(grad_out.shape()));
  Tensor<Scalar> ga(a.shape()), gb(b.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      Scalar acc{0};
      for (std::size_t j = 0; j < n; ++j) {
        acc += grad_out.at(i, j) * b.at(p, j);
        gb.at(p, j) += a.at(i, p) * grad_out.at(i, j);
      }
      ga.at(i, p) = acc;
    }
  return {std::move(ga), std::move(gb)};
}

/// Numerically stable softmax over a flat vector (max subtracted first).
/// Entries equal to -infinity are treated as masked and get exactly zero.
template <class Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& scores) {
  if (scores.size() == 0) throw DomainError("softmax of an empty vector");
  const auto s = scores.data();
  for (auto v : s)
    if (std::isnan(v) || v == std::numeric_limits<Scalar>::infinity())
      throw NumericError("softmax: non-finite score");
  const Scalar peak = *std::max_element(s.begin(), s.end());
  if (!std::isfinite(peak)) throw DomainError("softmax: every score is masked");
  Tensor<Scalar> out(scores.shape());
  Scalar total{0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = s[i] == -std::numeric_limits<Scalar>::infinity() ? Scalar{0} : std::exp(s[i] - peak);
    total += out[i];
  }
  for (auto& v : out.data()) v /= total;
  return out;
}

/// Vector-Jacobian product of softmax: dL/ds = p * (g - <g, p>).
template <class Scalar>
Tensor<Scalar> softmax_backward(const Tensor<Scalar>& probs, const Tensor<Scalar>& grad_out) {
  detail::require(probs.size() == grad_out.size(), "softmax_backward: size mismatch");
  Scalar dot{0};
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_out[i];
  Tensor<Scalar> out(probs.shape());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (grad_out[i] - dot);
  return out;
}

/// Valid (unpadded) 1-D convolution of a [L x D] sequence with [F x w x D]
/// filters. Output is [(L - w + 1) x F].
template <class Scalar>
Tensor<Scalar> conv1d_valid(const Tensor<Scalar>& seq, const Tensor<Scalar>& filters, const Tensor<Scalar>& bias) {
  detail::require(seq.rank() == 2 && filters.rank() == 3 && bias.rank() == 1,
                  "conv1d_valid: expected seq [LxD], filters [FxwxD], bias [F]");
  const std::size_t len = seq.dim(0), depth = seq.dim(1);
  const std::size_t nf = filters.dim(0), width = filters.dim(1);
  detail::require(filters.dim(2) == depth && bias.dim(0) == nf,
                  "conv1d_valid shape mismatch: seq " + shape_string(seq.shape()) + ", filters " +
                      shape_string(filters.shape()) + ", bias " + shape_string(bias.shape()));
  if (len < width)
    throw DomainError("conv1d_valid: sequence of length " + std::to_string(len) + " is shorter than filter width " +
                      std::to_string(width));
  const std::size_t steps = len - width + 1;
  const std::size_t window = width * depth;
  Tensor<Scalar> out({steps, nf});
  const auto x = seq.data();
  const auto k = filters.data();
  for (std::size_t t = 0; t < steps; ++t) {
    // A window of w consecutive rows is contiguous in row-major storage.
    const Scalar* win = x.data() + t * depth;
    for (std::size_t f = 0; f < nf; ++f) {
      const Scalar* kf = k.data() + f * window;
      Scalar acc = bias[f];
      for (std::size_t i = 0; i < window; ++i) acc += win[i] * kf[i];
      out.at(t, f) = acc;
    }
  }
  return out;
}

template <class Scalar>
struct Conv1dGrads {
  Tensor<Scalar> seq;
  Tensor<Scalar> filters;
  Tensor<Scalar> bias;
};

template <class Scalar>
Conv1dGrads<Scalar> conv1d_valid_backward(const Tensor<Scalar>& seq, const Tensor<Scalar>& filters,
                                          const Tensor<Scalar>& grad_out) {
  const std::size_t depth = seq.dim(1);
  const std::size_t nf = filters.dim(0), width = filters.dim(1);
  const std::size_t steps = grad_out.dim(0);
  detail::require(steps + width - 1 == seq.dim(0) && grad_out.dim(1) == nf, "conv1d_valid_backward: shape mismatch");
  const std::size_t window = width * depth;
  Conv1dGrads<Scalar> g{Tensor<Scalar>(seq.shape()), Tensor<Scalar>(filters.shape()), Tensor<Scalar>({nf})};
  const auto x = seq.data();
  const auto k = filters.data();
  auto gx = g.seq.data();
  auto gk = g.filters.data();
  for (std::size_t t = 0; t < steps; ++t) {
    const Scalar* win = x.data() + t * depth;
    Scalar* gwin = gx.data() + t * depth;
    for (std::size_t f = 0; f < nf; ++f) {
      const Scalar go = grad_out.at(t, f);
      if (go == Scalar{0}) continue;
      g.bias[f] += go;
      const Scalar* kf = k.data() + f * window;
      Scalar* gkf = gk.data() + f * window;
      for (std::size_t i = 0; i < window; ++i) {
        gkf[i] += go * win[i];
        gwin[i] += go * kf[i];
      }
    }
  }
  return g;
}

template <class Scalar>
struct Pooled {
  Tensor<Scalar> values;
  std::vector<std::size_t> argmax;
};

/// Per-column maximum over rows of a [T x F] feature map; ties go to the
/// smallest row index.
template <class Scalar>
Pooled<Scalar> max_over_time(const Tensor<Scalar>& featmap) {
  if (featmap.rank() != 2) throw DimensionError("max_over_time expects a matrix, got " + shape_string(featmap.shape()));
  const std::size_t steps = featmap.dim(0), nf = featmap.dim(1);
  Pooled<Scalar> out{Tensor<Scalar>({nf}), std::vector<std::size_t>(nf, 0)};
  for (std::size_t f = 0; f < nf; ++f) {
    Scalar best = featmap.at(0, f);
    std::size_t where = 0;
    for (std::size_t t = 1; t < steps; ++t)
      if (featmap.at(t, f) > best) {
        best = featmap.at(t, f);
        where = t;
      }
    out.values[f] = best;
    out.argmax[f] = where;
  }
  return out;
}

template <class Scalar>
Tensor<Scalar> max_over_time_backward(const Shape& featmap_shape, std::span<const std::size_t> argmax,
                                      const Tensor<Scalar>& grad_out) {
  Tensor<Scalar> g(featmap_shape);
  for (std::size_t f = 0; f < argmax.size(); ++f) g.at(argmax[f], f) = grad_out[f];
  return g;
}

/// Central-difference gradient of a scalar function, evaluated in double
/// precision regardless of how f computes internally.
template <class Fn>
Tensor<double> finite_diff_grad(Fn&& f, const Tensor<double>& x, double eps) {
  if (!(eps > 0)) throw DomainError("finite_diff_grad: eps must be positive");
  Tensor<double> probe = x;
  Tensor<double> grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = static_cast<double>(f(std::as_const(probe)));
    probe[i] = orig - eps;
    const double down = static_cast<double>(f(std::as_const(probe)));
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

/// max |a - b| / max(|a|, |b|, floor). The floor stops coordinates whose true
/// gradient is ~0 from turning finite-difference roundoff into a large ratio.
inline double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-3) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: size mismatch");
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({floor, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace sarcnet
