#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sarcnet/layers.hpp"
#include "sarcnet/model.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/tensor.hpp"

namespace sarcnet {

struct GradCheckResult {
  std::string name;          // layer or model under test
  double max_rel_error = 0;  // worst over every checked tensor
  bool passed = false;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::size_t trials = 20;  // random draws per layer
  std::uint64_t seed = 7;
  // Test hook: the named check adds 1e-2 to its first analytic gradient
  // entry, so a broken backward can be simulated end to end.
  std::string inject_fault;
};

namespace gradcheck_detail {

using T = Tensor<double>;

inline T random_tensor(const Shape& shape, Rng& rng, double lo = -1, double hi = 1) {
  T t(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline double dot(const T& a, const T& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Compares an analytic gradient of x against central differences of f.
class Checker {
 public:
  Checker(std::string name, const GradCheckOptions& opt) : result_{std::move(name), 0, true}, opt_(opt) {}

  template <class Fn>
  void compare(T analytic, T& x, Fn&& f) {
    if (!faulted_ && opt_.inject_fault == result_.name) {
      analytic[0] += 1e-2;
      faulted_ = true;
    }
    const T saved = x;
    const T numeric = finite_diff_grad(
        [&](const T& probe) {
          x = probe;
          return f();
        },
        saved, opt_.eps);
    x = saved;
    const double err = max_relative_error(analytic.data(), numeric.data());
    result_.max_rel_error = std::max(result_.max_rel_error, err);
    if (!(err < opt_.tolerance)) result_.passed = false;
  }

  GradCheckResult result() const { return result_; }

 private:
  GradCheckResult result_;
  const GradCheckOptions& opt_;
  bool faulted_ = false;
};

}  // namespace gradcheck_detail

inline GradCheckResult check_conv1d(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("conv1d_valid", opt);
  Rng rng(opt.seed);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t w = 1 + rng.below(3), len = w + rng.below(4), d = 1 + rng.below(3), f = 1 + rng.below(3);
    T seq = random_tensor({len, d}, rng), filt = random_tensor({f, w, d}, rng), bias = random_tensor({f}, rng);
    const T proj = random_tensor({len - w + 1, f}, rng);
    const auto loss = [&] { return dot(conv1d_valid(seq, filt, bias), proj); };
    const auto g = conv1d_valid_backward(seq, filt, proj);
    chk.compare(g.seq, seq, loss);
    chk.compare(g.filters, filt, loss);
    chk.compare(g.bias, bias, loss);
  }
  return chk.result();
}

inline GradCheckResult check_max_over_time(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("max_over_time", opt);
  Rng rng(opt.seed + 1);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    // Values spaced well apart so the argmax is stable under eps.
    const std::size_t steps = 1 + rng.below(5), f = 1 + rng.below(4);
    T fm({steps, f});
    for (std::size_t i = 0; i < fm.size(); ++i) fm[i] = static_cast<double>(rng.below(1000)) * 0.01 + 1e-3 * i;
    const T proj = random_tensor({f}, rng);
    const auto pooled = max_over_time(fm);
    chk.compare(max_over_time_backward(fm.shape(), pooled.argmax, proj), fm,
                [&] { return dot(max_over_time(fm).values, proj); });
  }
  return chk.result();
}

inline GradCheckResult check_softmax(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("softmax", opt);
  Rng rng(opt.seed + 2);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    T s = random_tensor({n}, rng, -3, 3);
    const T proj = random_tensor({n}, rng);
    chk.compare(softmax_backward(softmax(s), proj), s, [&] { return dot(softmax(s), proj); });
  }
  return chk.result();
}

inline GradCheckResult check_embedding(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("embed", opt);
  Rng rng(opt.seed + 3);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t v = 2 + rng.below(5), d = 1 + rng.below(4), n = 1 + rng.below(5);
    std::vector<TokenId> ids(n);
    for (auto& id : ids) id = static_cast<TokenId>(rng.below(v));
    T table = random_tensor({v, d}, rng);
    const T proj = random_tensor({n, d}, rng);
    T g({v, d});
    embed_backward<double>(ids, proj, g);
    chk.compare(g, table, [&] { return dot(embed<double>(ids, table), proj); });
  }
  return chk.result();
}

inline GradCheckResult check_lstm(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("bilstm_encode", opt);
  Rng rng(opt.seed + 4);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t h = 1 + rng.below(3), d = 1 + rng.below(3), n = 1 + rng.below(4);
    auto fwd = LstmCellParams<double>{random_tensor({4 * h, d}, rng), random_tensor({4 * h, h}, rng),
                                      random_tensor({4 * h}, rng)};
    auto bwd = LstmCellParams<double>{random_tensor({4 * h, d}, rng), random_tensor({4 * h, h}, rng),
                                      random_tensor({4 * h}, rng)};
    T seq = random_tensor({n, d}, rng);
    const T proj = random_tensor({n, 2 * h}, rng);
    BiLstmCache<double> cache;
    bilstm_encode(seq, fwd, bwd, &cache);
    auto gf = LstmCellParams<double>::zeros(h, d), gb = LstmCellParams<double>::zeros(h, d);
    const T dseq = bilstm_encode_backward(cache, fwd, bwd, proj, gf, gb);
    const auto loss = [&] { return dot(bilstm_encode(seq, fwd, bwd), proj); };
    chk.compare(dseq, seq, loss);
    chk.compare(gf.input_w, fwd.input_w, loss);
    chk.compare(gf.recurrent_w, fwd.recurrent_w, loss);
    chk.compare(gf.bias, fwd.bias, loss);
    chk.compare(gb.input_w, bwd.input_w, loss);
    chk.compare(gb.recurrent_w, bwd.recurrent_w, loss);
    chk.compare(gb.bias, bwd.bias, loss);
  }
  return chk.result();
}

inline GradCheckResult check_attention(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("attend", opt);
  Rng rng(opt.seed + 5);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t n = 1 + rng.below(4), width = 1 + rng.below(4), a = 1 + rng.below(3);
    const std::size_t valid = 1 + rng.below(n);
    auto p = AttentionScorerParams<double>{random_tensor({a, width}, rng), random_tensor({a}, rng),
                                           random_tensor({a}, rng)};
    T ann = random_tensor({n, width}, rng);
    const T proj = random_tensor({width}, rng);
    auto g = AttentionScorerParams<double>::zeros(a, width);
    const T dann = attend_backward(attend(ann, p, valid), p, proj, g);
    const auto loss = [&] { return dot(attend(ann, p, valid).context, proj); };
    chk.compare(dann, ann, loss);
    chk.compare(g.w, p.w, loss);
    chk.compare(g.bias, p.bias, loss);
    chk.compare(g.v, p.v, loss);
  }
  return chk.result();
}

inline GradCheckResult check_dense(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("dense", opt);
  Rng rng(opt.seed + 6);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const Activation act = static_cast<Activation>(trial % 3);
    const std::size_t in = 1 + rng.below(4), out = 1 + rng.below(4);
    T x = random_tensor({in}, rng), w = random_tensor({out, in}, rng), b = random_tensor({out}, rng);
    const T proj = random_tensor({out}, rng);
    T gw({out, in}), gb({out});
    const T y = dense(x, w, b, act);
    const T dx = dense_backward(x, w, y, act, proj, gw, gb);
    const auto loss = [&] { return dot(dense(x, w, b, act), proj); };
    chk.compare(dx, x, loss);
    chk.compare(gw, w, loss);
    chk.compare(gb, b, loss);
  }
  return chk.result();
}

inline GradCheckResult check_dropout(const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk("dropout", opt);
  Rng rng(opt.seed + 7);
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    T x = random_tensor({n}, rng);
    const T proj = random_tensor({n}, rng);
    const std::uint64_t mask_seed = rng.next();
    const auto run = [&] {
      Rng r(mask_seed);
      return dropout(x, 0.4, r, true);
    };
    chk.compare(dropout_backward(run(), proj), x, [&] { return dot(run().output, proj); });
  }
  return chk.result();
}

/// Toy model used by the end-to-end checks: D=3, F=2, w=2, H=2, A=2, M=3.
inline ModelConfig toy_config(Variant variant) {
  ModelConfig c;
  c.variant = variant;
  c.embedding_dim = 3;
  c.channels = 2;
  c.filter_width = 2;
  c.hidden_units = 2;
  c.attention_size = 2;
  c.mlp_hidden = 3;
  c.dropout = 0.0;
  c.l2 = 0.0;
  c.max_len = 4;
  return c;
}

/// Cross-entropy loss of a whole model against finite differences for every
/// weight tensor. Token sequences include one shorter than the filter width.
inline GradCheckResult check_model(Variant variant, const GradCheckOptions& opt) {
  using namespace gradcheck_detail;
  Checker chk(variant == Variant::hybrid ? "model.hybrid" : "model.baseline", opt);
  Rng rng(opt.seed + 8 + static_cast<std::uint64_t>(variant));
  const std::size_t trials = std::max<std::size_t>(1, opt.trials / 4);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    ModelConfig cfg = toy_config(variant);
    cfg.seed = rng.next();
    Model<double> model = Model<double>::initialize(cfg, random_tensor({5, 3}, rng));
    // Random biases so no activation sits exactly at a kink or symmetric point.
    for (auto& e : model.weights().entries(variant))
      for (auto& v : e.tensor->data()) v = rng.uniform(-0.8, 0.8);
    const std::size_t len = trial % 2 == 0 ? 2 : 1;
    std::vector<TokenId> ids{static_cast<TokenId>(1 + rng.below(4)), static_cast<TokenId>(1 + rng.below(4)), 0, 0};
    const int label = static_cast<int>(rng.below(2));
    auto grads = model.weights().zeros_like(variant);
    example_loss_and_grad(model, ids, len, label, false, nullptr, grads);
    auto w = model.weights().entries(variant);
    auto g = grads.entries(variant);
    for (std::size_t i = 0; i < w.size(); ++i)
      chk.compare(*g[i].tensor, *w[i].tensor,
                  [&] { return cross_entropy(model.forward(ids, len, false).prediction.probs, label); });
  }
  return chk.result();
}

/// Every layer once, then both toy models.
inline std::vector<GradCheckResult> run_gradient_checks(const GradCheckOptions& opt = {}) {
  return {check_conv1d(opt),    check_max_over_time(opt), check_softmax(opt),
          check_embedding(opt), check_lstm(opt),          check_attention(opt),
          check_dense(opt),     check_dropout(opt),       check_model(Variant::baseline, opt),
          check_model(Variant::hybrid, opt)};
}

}  // namespace sarcnet
