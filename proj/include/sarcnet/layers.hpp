#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sarcnet/errors.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/tensor.hpp"

namespace sarcnet {

using TokenId = std::int32_t;

template <class Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar{1} / (Scalar{1} + std::exp(-x));
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <class Scalar>
Tensor<Scalar> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor<Scalar> t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.data()) v = static_cast<Scalar>(rng.uniform(-limit, limit));
  return t;
}

// ---------------------------------------------------------------- embedding

template <class Scalar>
Tensor<Scalar> embed(std::span<const TokenId> ids, const Tensor<Scalar>& table) {
  if (table.rank() != 2) throw DimensionError("embedding table must be a matrix");
  if (ids.empty()) throw DomainError("embed: empty token list");
  const std::size_t vocab = table.dim(0), depth = table.dim(1);
  Tensor<Scalar> out({ids.size(), depth});
  for (std::size_t n = 0; n < ids.size(); ++n) {
    if (ids[n] < 0 || static_cast<std::size_t>(ids[n]) >= vocab)
      throw IndexError("token id " + std::to_string(ids[n]) + " at position " + std::to_string(n) +
                       " outside vocabulary of size " + std::to_string(vocab));
    const auto src = table.row(static_cast<std::size_t>(ids[n]));
    std::copy(src.begin(), src.end(), out.row(n).begin());
  }
  return out;
}

// Scatter-add rows of grad_out into the gathered rows of table_grad.
template <class Scalar>
void embed_backward(std::span<const TokenId> ids, const Tensor<Scalar>& grad_out, Tensor<Scalar>& table_grad) {
  for (std::size_t n = 0; n < ids.size(); ++n) {
    auto dst = table_grad.row(static_cast<std::size_t>(ids[n]));
    const auto src = grad_out.row(n);
    for (std::size_t d = 0; d < dst.size(); ++d) dst[d] += src[d];
  }
}

// --------------------------------------------------------------------- LSTM

/// Weights of one LSTM cell. Gate blocks are stacked row-wise in the order
/// input, forget, candidate, output; each block has H rows.
template <class Scalar>
struct LstmCellParams {
  Tensor<Scalar> input_w;      // [4H x D]
  Tensor<Scalar> recurrent_w;  // [4H x H]
  Tensor<Scalar> bias;         // [4H]

  std::size_t hidden() const { return bias.dim(0) / 4; }
  std::size_t input_dim() const { return input_w.dim(1); }

  static LstmCellParams zeros(std::size_t hidden, std::size_t input_dim) {
    return {Tensor<Scalar>({4 * hidden, input_dim}), Tensor<Scalar>({4 * hidden, hidden}),
            Tensor<Scalar>({4 * hidden})};
  }

  // Forget-gate bias starts at 1.
  static LstmCellParams init(std::size_t hidden, std::size_t input_dim, Rng& rng) {
    LstmCellParams p{glorot_uniform<Scalar>({4 * hidden, input_dim}, input_dim, hidden, rng),
                     glorot_uniform<Scalar>({4 * hidden, hidden}, hidden, hidden, rng), Tensor<Scalar>({4 * hidden})};
    for (std::size_t k = hidden; k < 2 * hidden; ++k) p.bias[k] = Scalar{1};
    return p;
  }

  void validate() const {
    const std::size_t h = hidden();
    if (bias.rank() != 1 || bias.dim(0) % 4 != 0 || input_w.rank() != 2 || input_w.dim(0) != 4 * h ||
        recurrent_w.rank() != 2 || recurrent_w.dim(0) != 4 * h || recurrent_w.dim(1) != h)
      throw DimensionError("inconsistent LSTM cell shapes: input " + shape_string(input_w.shape()) + ", recurrent " +
                           shape_string(recurrent_w.shape()) + ", bias " + shape_string(bias.shape()));
  }
};

template <class Scalar>
struct LstmState {
  Tensor<Scalar> h;
  Tensor<Scalar> c;
};

/// Everything the backward pass of one cell step needs.
template <class Scalar>
struct LstmStepCache {
  std::vector<Scalar> x, h_prev, c_prev;
  std::vector<Scalar> gates;  // activated i, f, g, o stacked [4H]
  std::vector<Scalar> c, tanh_c;
};

namespace detail {

template <class Scalar>
void lstm_step_raw(std::span<const Scalar> x, std::span<const Scalar> h_prev, std::span<const Scalar> c_prev,
                   const LstmCellParams<Scalar>& p, LstmStepCache<Scalar>& cache, std::span<Scalar> h_out) {
  const std::size_t hn = p.hidden(), dn = p.input_dim();
  cache.x.assign(x.begin(), x.end());
  cache.h_prev.assign(h_prev.begin(), h_prev.end());
  cache.c_prev.assign(c_prev.begin(), c_prev.end());
  cache.gates.assign(4 * hn, Scalar{0});
  cache.c.assign(hn, Scalar{0});
  cache.tanh_c.assign(hn, Scalar{0});
  const Scalar* wx = p.input_w.data().data();
  const Scalar* wh = p.recurrent_w.data().data();
  for (std::size_t r = 0; r < 4 * hn; ++r) {
    Scalar z = p.bias[r];
    const Scalar* wxr = wx + r * dn;
    for (std::size_t d = 0; d < dn; ++d) z += wxr[d] * x[d];
    const Scalar* whr = wh + r * hn;
    for (std::size_t k = 0; k < hn; ++k) z += whr[k] * cache.h_prev[k];
    cache.gates[r] = (r >= 2 * hn && r < 3 * hn) ? std::tanh(z) : sigmoid(z);
  }
  for (std::size_t k = 0; k < hn; ++k) {
    const Scalar i = cache.gates[k], f = cache.gates[hn + k], g = cache.gates[2 * hn + k], o = cache.gates[3 * hn + k];
    cache.c[k] = f * cache.c_prev[k] + i * g;
    cache.tanh_c[k] = std::tanh(cache.c[k]);
    h_out[k] = o * cache.tanh_c[k];
  }
}

// Backward through one step. dh/dc are gradients w.r.t. this step's outputs;
// accumulates into grads and writes dx, dh_prev, dc_prev.
template <class Scalar>
void lstm_step_backward_raw(const LstmStepCache<Scalar>& cache, const LstmCellParams<Scalar>& p,
                            std::span<const Scalar> dh, std::span<const Scalar> dc, LstmCellParams<Scalar>& grads,
                            std::span<Scalar> dx, std::span<Scalar> dh_prev, std::span<Scalar> dc_prev) {
  const std::size_t hn = p.hidden(), dn = p.input_dim();
  std::vector<Scalar> dz(4 * hn);
  for (std::size_t k = 0; k < hn; ++k) {
    const Scalar i = cache.gates[k], f = cache.gates[hn + k], g = cache.gates[2 * hn + k], o = cache.gates[3 * hn + k];
    const Scalar tc = cache.tanh_c[k];
    const Scalar dct = dc[k] + dh[k] * o * (Scalar{1} - tc * tc);
    dz[k] = dct * g * i * (Scalar{1} - i);
    dz[hn + k] = dct * cache.c_prev[k] * f * (Scalar{1} - f);
    dz[2 * hn + k] = dct * i * (Scalar{1} - g * g);
    dz[3 * hn + k] = dh[k] * tc * o * (Scalar{1} - o);
    dc_prev[k] = dct * f;
  }
  std::fill(dx.begin(), dx.end(), Scalar{0});
  std::fill(dh_prev.begin(), dh_prev.end(), Scalar{0});
  const Scalar* wx = p.input_w.data().data();
  const Scalar* wh = p.recurrent_w.data().data();
  Scalar* gwx = grads.input_w.data().data();
  Scalar* gwh = grads.recurrent_w.data().data();
  for (std::size_t r = 0; r < 4 * hn; ++r) {
    const Scalar d = dz[r];
    if (d == Scalar{0}) continue;
    grads.bias[r] += d;
    const Scalar* wxr = wx + r * dn;
    Scalar* gwxr = gwx + r * dn;
    for (std::size_t j = 0; j < dn; ++j) {
      gwxr[j] += d * cache.x[j];
      dx[j] += d * wxr[j];
    }
    const Scalar* whr = wh + r * hn;
    Scalar* gwhr = gwh + r * hn;
    for (std::size_t j = 0; j < hn; ++j) {
      gwhr[j] += d * cache.h_prev[j];
      dh_prev[j] += d * whr[j];
    }
  }
}

}  // namespace detail

/// One LSTM transition: i, f, o = sigmoid gates, g = tanh candidate,
/// c = f*c_prev + i*g, h = o*tanh(c).
template <class Scalar>
LstmState<Scalar> lstm_step(const Tensor<Scalar>& x, const Tensor<Scalar>& h_prev, const Tensor<Scalar>& c_prev,
                            const LstmCellParams<Scalar>& p) {
  p.validate();
  const std::size_t hn = p.hidden();
  if (x.size() != p.input_dim() || h_prev.size() != hn || c_prev.size() != hn)
    throw DimensionError("lstm_step: x " + shape_string(x.shape()) + ", h " + shape_string(h_prev.shape()) + ", c " +
                         shape_string(c_prev.shape()) + " against hidden " + std::to_string(hn) + ", input " +
                         std::to_string(p.input_dim()));
  LstmStepCache<Scalar> cache;
  Tensor<Scalar> h({hn});
  detail::lstm_step_raw<Scalar>(x.data(), h_prev.data(), c_prev.data(), p, cache, h.data());
  return {std::move(h), Tensor<Scalar>({hn}, cache.c)};
}

template <class Scalar>
struct BiLstmCache {
  std::vector<LstmStepCache<Scalar>> forward_steps;   // position j
  std::vector<LstmStepCache<Scalar>> backward_steps;  // position j (processed N-1 .. 0)
};

/// Row j = [forward state after tokens 0..j | backward state after tokens N-1..j].
template <class Scalar>
Tensor<Scalar> bilstm_encode(const Tensor<Scalar>& seq, const LstmCellParams<Scalar>& fwd,
                             const LstmCellParams<Scalar>& bwd, BiLstmCache<Scalar>* cache = nullptr) {
  if (seq.rank() != 2) throw DimensionError("bilstm_encode expects [N x D], got " + shape_string(seq.shape()));
  const std::size_t n = seq.dim(0);
  if (n == 0) throw DomainError("bilstm_encode: empty sequence");
  fwd.validate();
  bwd.validate();
  if (fwd.hidden() != bwd.hidden() || fwd.input_dim() != seq.dim(1) || bwd.input_dim() != seq.dim(1))
    throw DimensionError("bilstm_encode: direction shapes disagree with input " + shape_string(seq.shape()));
  const std::size_t hn = fwd.hidden();
  Tensor<Scalar> out({n, 2 * hn});
  BiLstmCache<Scalar> local;
  BiLstmCache<Scalar>& c = cache ? *cache : local;
  c.forward_steps.assign(n, {});
  c.backward_steps.assign(n, {});

  std::vector<Scalar> h(hn, Scalar{0}), cell(hn, Scalar{0});
  for (std::size_t j = 0; j < n; ++j) {
    detail::lstm_step_raw<Scalar>(seq.row(j), h, cell, fwd, c.forward_steps[j], std::span<Scalar>(h));
    cell = c.forward_steps[j].c;
    std::copy(h.begin(), h.end(), out.row(j).begin());
  }
  std::fill(h.begin(), h.end(), Scalar{0});
  std::fill(cell.begin(), cell.end(), Scalar{0});
  for (std::size_t j = n; j-- > 0;) {
    detail::lstm_step_raw<Scalar>(seq.row(j), h, cell, bwd, c.backward_steps[j], std::span<Scalar>(h));
    cell = c.backward_steps[j].c;
    std::copy(h.begin(), h.end(), out.row(j).begin() + hn);
  }
  return out;
}

/// Backpropagation through time for both directions. Returns dL/d(seq).
template <class Scalar>
Tensor<Scalar> bilstm_encode_backward(const BiLstmCache<Scalar>& cache, const LstmCellParams<Scalar>& fwd,
                                      const LstmCellParams<Scalar>& bwd, const Tensor<Scalar>& grad_out,
                                      LstmCellParams<Scalar>& fwd_grads, LstmCellParams<Scalar>& bwd_grads) {
  const std::size_t n = cache.forward_steps.size();
  const std::size_t hn = fwd.hidden(), dn = fwd.input_dim();
  Tensor<Scalar> dseq({n, dn});
  std::vector<Scalar> dh(hn), dc(hn, Scalar{0}), dh_prev(hn), dc_prev(hn), dx(dn);

  std::fill(dh.begin(), dh.end(), Scalar{0});
  for (std::size_t j = n; j-- > 0;) {
    const auto g = grad_out.row(j);
    for (std::size_t k = 0; k < hn; ++k) dh[k] += g[k];
    detail::lstm_step_backward_raw<Scalar>(cache.forward_steps[j], fwd, dh, dc, fwd_grads, dx, dh_prev, dc_prev);
    auto row = dseq.row(j);
    for (std::size_t d = 0; d < dn; ++d) row[d] += dx[d];
    dh.swap(dh_prev);
    dc.swap(dc_prev);
  }

  std::fill(dh.begin(), dh.end(), Scalar{0});
  std::fill(dc.begin(), dc.end(), Scalar{0});
  for (std::size_t j = 0; j < n; ++j) {
    const auto g = grad_out.row(j);
    for (std::size_t k = 0; k < hn; ++k) dh[k] += g[hn + k];
    detail::lstm_step_backward_raw<Scalar>(cache.backward_steps[j], bwd, dh, dc, bwd_grads, dx, dh_prev, dc_prev);
    auto row = dseq.row(j);
    for (std::size_t d = 0; d < dn; ++d) row[d] += dx[d];
    dh.swap(dh_prev);
    dc.swap(dc_prev);
  }
  return dseq;
}

// ---------------------------------------------------------------- attention

/// One-hidden-layer scorer: score_i = v . tanh(W h_i + b).
template <class Scalar>
struct AttentionScorerParams {
  Tensor<Scalar> w;     // [A x 2H]
  Tensor<Scalar> bias;  // [A]
  Tensor<Scalar> v;     // [A]

  std::size_t width() const { return bias.dim(0); }

  static AttentionScorerParams zeros(std::size_t width, std::size_t annotation_dim) {
    return {Tensor<Scalar>({width, annotation_dim}), Tensor<Scalar>({width}), Tensor<Scalar>({width})};
  }

  static AttentionScorerParams init(std::size_t width, std::size_t annotation_dim, Rng& rng) {
    return {glorot_uniform<Scalar>({width, annotation_dim}, annotation_dim, width, rng), Tensor<Scalar>({width}),
            glorot_uniform<Scalar>({width}, width, 1, rng)};
  }
};

template <class Scalar>
struct EncodedSequence {
  Tensor<Scalar> annotations;  // [N x 2H]
  Tensor<Scalar> scores;       // [N], -inf at masked rows
  Tensor<Scalar> alphas;       // [N], exactly 0 at masked rows
  Tensor<Scalar> context;      // [2H]
  Tensor<Scalar> hidden;       // [N x A] tanh activations, kept for backward
  std::size_t length = 0;      // rows [0, length) are real tokens
};

/// Self-attention over annotation rows. Rows at or beyond valid_length are
/// padding: their score is -inf so their weight is exactly zero.
template <class Scalar>
EncodedSequence<Scalar> attend(const Tensor<Scalar>& annotations, const AttentionScorerParams<Scalar>& p,
                               std::size_t valid_length = std::numeric_limits<std::size_t>::max()) {
  if (annotations.rank() != 2) throw DimensionError("attend expects [N x 2H]");
  const std::size_t n = annotations.dim(0), width = annotations.dim(1), a = p.width();
  if (p.w.rank() != 2 || p.w.dim(0) != a || p.w.dim(1) != width || p.v.size() != a)
    throw DimensionError("attention params " + shape_string(p.w.shape()) + " incompatible with annotations " +
                         shape_string(annotations.shape()));
  const std::size_t len = std::min(valid_length, n);
  if (len == 0) throw DomainError("attend: no valid positions");

  EncodedSequence<Scalar> enc{annotations, Tensor<Scalar>({n}), Tensor<Scalar>({n}), Tensor<Scalar>({width}),
                              Tensor<Scalar>({n, a}), len};
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= len) {
      enc.scores[i] = -std::numeric_limits<Scalar>::infinity();
      continue;
    }
    const auto h = annotations.row(i);
    Scalar s{0};
    for (std::size_t k = 0; k < a; ++k) {
      Scalar z = p.bias[k];
      const auto wk = p.w.row(k);
      for (std::size_t d = 0; d < width; ++d) z += wk[d] * h[d];
      const Scalar u = std::tanh(z);
      enc.hidden.at(i, k) = u;
      s += p.v[k] * u;
    }
    enc.scores[i] = s;
  }
  enc.alphas = softmax(enc.scores);
  for (std::size_t i = 0; i < len; ++i) {
    const auto h = annotations.row(i);
    for (std::size_t d = 0; d < width; ++d) enc.context[d] += enc.alphas[i] * h[d];
  }
  return enc;
}

/// Gradient of a loss through the context vector back to the annotations;
/// accumulates scorer gradients into grads.
template <class Scalar>
Tensor<Scalar> attend_backward(const EncodedSequence<Scalar>& enc, const AttentionScorerParams<Scalar>& p,
                               const Tensor<Scalar>& grad_context, AttentionScorerParams<Scalar>& grads) {
  const std::size_t n = enc.annotations.dim(0), width = enc.annotations.dim(1), a = p.width();
  Tensor<Scalar> dann({n, width});
  Tensor<Scalar> dalpha({n});
  for (std::size_t i = 0; i < enc.length; ++i) {
    const auto h = enc.annotations.row(i);
    auto dh = dann.row(i);
    Scalar acc{0};
    for (std::size_t d = 0; d < width; ++d) {
      acc += grad_context[d] * h[d];
      dh[d] = enc.alphas[i] * grad_context[d];
    }
    dalpha[i] = acc;
  }
  const Tensor<Scalar> dscore = softmax_backward(enc.alphas, dalpha);
  std::vector<Scalar> dz(a);
  for (std::size_t i = 0; i < enc.length; ++i) {
    const Scalar ds = dscore[i];
    if (ds == Scalar{0}) continue;
    const auto h = enc.annotations.row(i);
    auto dh = dann.row(i);
    for (std::size_t k = 0; k < a; ++k) {
      const Scalar u = enc.hidden.at(i, k);
      grads.v[k] += ds * u;
      dz[k] = ds * p.v[k] * (Scalar{1} - u * u);
      grads.bias[k] += dz[k];
    }
    for (std::size_t k = 0; k < a; ++k) {
      const auto wk = p.w.row(k);
      auto gwk = grads.w.row(k);
      for (std::size_t d = 0; d < width; ++d) {
        gwk[d] += dz[k] * h[d];
        dh[d] += dz[k] * wk[d];
      }
    }
  }
  return dann;
}

// -------------------------------------------------------------------- dense

enum class Activation { identity, tanh, sigmoid };

template <class Scalar>
Tensor<Scalar> dense(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b, Activation act) {
  if (w.rank() != 2 || w.dim(1) != x.size() || b.size() != w.dim(0))
    throw DimensionError("dense: W " + shape_string(w.shape()) + ", b " + shape_string(b.shape()) + ", x " +
                         shape_string(x.shape()));
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  Tensor<Scalar> y({out_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    Scalar z = b[o];
    const auto wo = w.row(o);
    for (std::size_t i = 0; i < in_dim; ++i) z += wo[i] * x[i];
    switch (act) {
      case Activation::identity: y[o] = z; break;
      case Activation::tanh: y[o] = std::tanh(z); break;
      case Activation::sigmoid: y[o] = sigmoid(z); break;
    }
  }
  return y;
}

/// Backward of dense given its input x and output y. Accumulates into
/// grad_w / grad_b and returns dL/dx.
template <class Scalar>
Tensor<Scalar> dense_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& y,
                              Activation act, const Tensor<Scalar>& grad_y, Tensor<Scalar>& grad_w,
                              Tensor<Scalar>& grad_b) {
  const std::size_t out_dim = w.dim(0), in_dim = w.dim(1);
  Tensor<Scalar> dx({in_dim});
  for (std::size_t o = 0; o < out_dim; ++o) {
    Scalar dz = grad_y[o];
    if (act == Activation::tanh) dz *= Scalar{1} - y[o] * y[o];
    if (act == Activation::sigmoid) dz *= y[o] * (Scalar{1} - y[o]);
    grad_b[o] += dz;
    const auto wo = w.row(o);
    auto gwo = grad_w.row(o);
    for (std::size_t i = 0; i < in_dim; ++i) {
      gwo[i] += dz * x[i];
      dx[i] += dz * wo[i];
    }
  }
  return dx;
}

// ------------------------------------------------------------------ dropout

template <class Scalar>
struct DropoutResult {
  Tensor<Scalar> output;
  Tensor<Scalar> mask;  // 0 or 1/(1-rate) per element; empty in eval mode
};

/// Inverted dropout: survivors are scaled by 1/(1-rate) at train time, so
/// eval mode returns the input unchanged.
template <class Scalar>
DropoutResult<Scalar> dropout(const Tensor<Scalar>& x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return {x, Tensor<Scalar>{}};
  const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - rate));
  DropoutResult<Scalar> r{Tensor<Scalar>(x.shape()), Tensor<Scalar>(x.shape())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.mask[i] = rng.uniform() < rate ? Scalar{0} : keep_scale;
    r.output[i] = x[i] * r.mask[i];
  }
  return r;
}

template <class Scalar>
Tensor<Scalar> dropout_backward(const DropoutResult<Scalar>& fwd, const Tensor<Scalar>& grad_out) {
  if (fwd.mask.empty()) return grad_out;
  Tensor<Scalar> g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad_out[i] * fwd.mask[i];
  return g;
}

}  // namespace sarcnet
