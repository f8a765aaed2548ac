#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sarcnet/config.hpp"
#include "sarcnet/data.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/layers.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/tensor.hpp"

namespace sarcnet {

/// All trainable tensors of either variant. The LSTM and attention blocks
/// are empty for the baseline.
template <class Scalar>
struct ModelWeights {
  Tensor<Scalar> embedding;     // [V x D]
  Tensor<Scalar> conv_filters;  // [F x w x D]
  Tensor<Scalar> conv_bias;     // [F]
  LstmCellParams<Scalar> lstm_fwd;
  LstmCellParams<Scalar> lstm_bwd;
  AttentionScorerParams<Scalar> attention;
  Tensor<Scalar> hidden_w;  // [M x (F or F+2H)]
  Tensor<Scalar> hidden_b;  // [M]
  Tensor<Scalar> out_w;     // [2 x M]
  Tensor<Scalar> out_b;     // [2]

  struct Entry {
    std::string name;
    Tensor<Scalar>* tensor;
    bool regularized;  // weight matrices only; biases and embeddings excluded
  };

  std::vector<Entry> entries(Variant variant) {
    std::vector<Entry> e{{"embedding", &embedding, false},
                         {"conv.filters", &conv_filters, true},
                         {"conv.bias", &conv_bias, false}};
    if (variant == Variant::hybrid) {
      e.push_back({"lstm_fwd.input_w", &lstm_fwd.input_w, true});
      e.push_back({"lstm_fwd.recurrent_w", &lstm_fwd.recurrent_w, true});
      e.push_back({"lstm_fwd.bias", &lstm_fwd.bias, false});
      e.push_back({"lstm_bwd.input_w", &lstm_bwd.input_w, true});
      e.push_back({"lstm_bwd.recurrent_w", &lstm_bwd.recurrent_w, true});
      e.push_back({"lstm_bwd.bias", &lstm_bwd.bias, false});
      e.push_back({"attention.w", &attention.w, true});
      e.push_back({"attention.bias", &attention.bias, false});
      e.push_back({"attention.v", &attention.v, true});
    }
    e.push_back({"mlp.hidden_w", &hidden_w, true});
    e.push_back({"mlp.hidden_b", &hidden_b, false});
    e.push_back({"mlp.out_w", &out_w, true});
    e.push_back({"mlp.out_b", &out_b, false});
    return e;
  }

  std::vector<Entry> entries(Variant variant) const {
    return const_cast<ModelWeights*>(this)->entries(variant);
  }

  /// Same shapes, all zeros; used as a gradient buffer.
  ModelWeights zeros_like(Variant variant) const {
    ModelWeights z;
    auto src = entries(variant);
    auto dst = z.entries(variant);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = Tensor<Scalar>(src[i].tensor->shape());
    return z;
  }

  void fill(Variant variant, Scalar v) {
    for (auto& e : entries(variant)) e.tensor->fill(v);
  }

  template <class Other>
  ModelWeights<Other> cast(Variant variant) const {
    ModelWeights<Other> out;
    auto src = entries(variant);
    auto dst = out.entries(variant);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<Other>();
    return out;
  }
};

/// Binary distribution (non-sarcastic, sarcastic) with optional attention
/// weights over the real tokens.
template <class Scalar>
struct Prediction {
  Tensor<Scalar> probs;
  int label = 0;
  std::optional<std::vector<Scalar>> attention;
};

/// Intermediates kept for one example's backward pass.
template <class Scalar>
struct ForwardPass {
  std::vector<TokenId> ids;  // real tokens only
  Tensor<Scalar> embedded;   // [L x D]
  Tensor<Scalar> conv_input;  // embedded, zero-padded to at least w rows
  Tensor<Scalar> conv_out;    // tanh activations [T x F]
  Pooled<Scalar> pooled;
  BiLstmCache<Scalar> lstm_cache;
  std::optional<EncodedSequence<Scalar>> encoded;
  Tensor<Scalar> features;
  DropoutResult<Scalar> dropped;
  Tensor<Scalar> hidden;
  Tensor<Scalar> logits;
  Prediction<Scalar> prediction;
};

template <class Scalar>
int argmax_label(const Tensor<Scalar>& probs) {
  return probs[1] > probs[0] ? 1 : 0;
}

/// Hybrid CNN + attentive BiLSTM classifier, or the CNN-only baseline.
template <class Scalar>
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, ModelWeights<Scalar> weights) : config_(std::move(config)), weights_(std::move(weights)) {
    validate(config_);
    check_shapes();
  }

  /// Fresh seeded weights. embedding gives the initial [V x D] table.
  static Model initialize(const ModelConfig& config, Tensor<Scalar> embedding) {
    validate(config);
    if (embedding.rank() != 2 || embedding.dim(1) != config.embedding_dim)
      throw DimensionError("embedding table " + shape_string(embedding.shape()) + " does not match embedding_dim " +
                           std::to_string(config.embedding_dim));
    Rng rng = Rng::derive(config.seed, 0x5eed);
    const std::size_t d = config.embedding_dim, f = config.channels, w = config.filter_width;
    const std::size_t h = config.hidden_units, m = config.mlp_hidden;
    ModelWeights<Scalar> wts;
    wts.embedding = std::move(embedding);
    wts.conv_filters = glorot_uniform<Scalar>({f, w, d}, w * d, f, rng);
    wts.conv_bias = Tensor<Scalar>({f});
    std::size_t feat = f;
    if (config.variant == Variant::hybrid) {
      wts.lstm_fwd = LstmCellParams<Scalar>::init(h, d, rng);
      wts.lstm_bwd = LstmCellParams<Scalar>::init(h, d, rng);
      wts.attention = AttentionScorerParams<Scalar>::init(config.attention_size, 2 * h, rng);
      feat += 2 * h;
    }
    wts.hidden_w = glorot_uniform<Scalar>({m, feat}, feat, m, rng);
    wts.hidden_b = Tensor<Scalar>({m});
    wts.out_w = glorot_uniform<Scalar>({2, m}, m, 2, rng);
    wts.out_b = Tensor<Scalar>({2});
    return Model(config, std::move(wts));
  }

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }
  ModelWeights<Scalar>& weights() noexcept { return weights_; }
  const ModelWeights<Scalar>& weights() const noexcept { return weights_; }
  std::size_t feature_width() const {
    return config_.channels + (variant() == Variant::hybrid ? 2 * config_.hidden_units : 0);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : weights_.entries(variant())) n += e.tensor->size();
    return n;
  }

  /// Forward pass over the first `length` ids. dropout_rng is only consulted
  /// in training mode.
  ForwardPass<Scalar> forward(std::span<const TokenId> ids, std::size_t length, bool training,
                              Rng* dropout_rng = nullptr) const {
    if (length < 1 || length > ids.size())
      throw DomainError("forward: true length " + std::to_string(length) + " outside [1, " +
                        std::to_string(ids.size()) + "]");
    ForwardPass<Scalar> fp;
    fp.ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(length));
    fp.embedded = embed<Scalar>(fp.ids, weights_.embedding);

    const std::size_t d = config_.embedding_dim, w = config_.filter_width;
    const std::size_t conv_rows = std::max(length, w);
    fp.conv_input = Tensor<Scalar>({conv_rows, d});
    std::copy(fp.embedded.data().begin(), fp.embedded.data().end(), fp.conv_input.data().begin());
    fp.conv_out = conv1d_valid(fp.conv_input, weights_.conv_filters, weights_.conv_bias);
    for (auto& v : fp.conv_out.data()) v = std::tanh(v);
    fp.pooled = max_over_time(fp.conv_out);

    fp.features = Tensor<Scalar>({feature_width()});
    std::copy(fp.pooled.values.data().begin(), fp.pooled.values.data().end(), fp.features.data().begin());
    if (variant() == Variant::hybrid) {
      const Tensor<Scalar> annotations =
          bilstm_encode(fp.embedded, weights_.lstm_fwd, weights_.lstm_bwd, &fp.lstm_cache);
      fp.encoded = attend(annotations, weights_.attention);
      std::copy(fp.encoded->context.data().begin(), fp.encoded->context.data().end(),
                fp.features.data().begin() + static_cast<std::ptrdiff_t>(config_.channels));
    }

    Rng fallback(0);
    fp.dropped = dropout(fp.features, config_.dropout, dropout_rng ? *dropout_rng : fallback, training);
    fp.hidden = dense(fp.dropped.output, weights_.hidden_w, weights_.hidden_b, Activation::tanh);
    fp.logits = dense(fp.hidden, weights_.out_w, weights_.out_b, Activation::identity);
    fp.prediction.probs = softmax(fp.logits);
    fp.prediction.label = argmax_label(fp.prediction.probs);
    if (fp.encoded) {
      const auto a = fp.encoded->alphas.data();
      fp.prediction.attention = std::vector<Scalar>(a.begin(), a.end());
    }
    return fp;
  }

  /// Backpropagates dL/d(logits) through the cached pass into grads.
  void backward(const ForwardPass<Scalar>& fp, const Tensor<Scalar>& grad_logits, ModelWeights<Scalar>& grads) const {
    const Tensor<Scalar> d_hidden =
        dense_backward(fp.hidden, weights_.out_w, fp.logits, Activation::identity, grad_logits, grads.out_w, grads.out_b);
    const Tensor<Scalar> d_dropped = dense_backward(fp.dropped.output, weights_.hidden_w, fp.hidden, Activation::tanh,
                                                    d_hidden, grads.hidden_w, grads.hidden_b);
    const Tensor<Scalar> d_features = dropout_backward(fp.dropped, d_dropped);

    const std::size_t f = config_.channels, d = config_.embedding_dim;
    Tensor<Scalar> d_pooled({f});
    std::copy(d_features.data().begin(), d_features.data().begin() + static_cast<std::ptrdiff_t>(f),
              d_pooled.data().begin());
    Tensor<Scalar> d_conv = max_over_time_backward(fp.conv_out.shape(), fp.pooled.argmax, d_pooled);
    for (std::size_t i = 0; i < d_conv.size(); ++i) d_conv[i] *= Scalar{1} - fp.conv_out[i] * fp.conv_out[i];
    auto conv_g = conv1d_valid_backward(fp.conv_input, weights_.conv_filters, d_conv);
    add_into(grads.conv_filters, conv_g.filters);
    add_into(grads.conv_bias, conv_g.bias);

    const std::size_t len = fp.ids.size();
    Tensor<Scalar> d_embedded({len, d});
    // Rows past the true length are conv padding, not embeddings.
    std::copy(conv_g.seq.data().begin(), conv_g.seq.data().begin() + static_cast<std::ptrdiff_t>(len * d),
              d_embedded.data().begin());

    if (variant() == Variant::hybrid) {
      const std::size_t width = 2 * config_.hidden_units;
      Tensor<Scalar> d_context({width});
      std::copy(d_features.data().begin() + static_cast<std::ptrdiff_t>(f), d_features.data().end(),
                d_context.data().begin());
      const Tensor<Scalar> d_ann = attend_backward(*fp.encoded, weights_.attention, d_context, grads.attention);
      const Tensor<Scalar> d_seq = bilstm_encode_backward(fp.lstm_cache, weights_.lstm_fwd, weights_.lstm_bwd, d_ann,
                                                          grads.lstm_fwd, grads.lstm_bwd);
      add_into(d_embedded, d_seq);
    }

    // The padding row never receives gradient.
    for (std::size_t n = 0; n < len; ++n) {
      if (fp.ids[n] == Vocabulary::kPad) continue;
      auto dst = grads.embedding.row(static_cast<std::size_t>(fp.ids[n]));
      const auto src = d_embedded.row(n);
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
  }

  Prediction<Scalar> predict_ids(std::span<const TokenId> ids, std::size_t length) const {
    return forward(ids, length, false).prediction;
  }

  /// lambda * sum of squared regularized weights.
  double l2_penalty() const {
    double s = 0;
    for (const auto& e : weights_.entries(variant()))
      if (e.regularized)
        for (auto v : e.tensor->data()) s += static_cast<double>(v) * static_cast<double>(v);
    return config_.l2 * s;
  }

 private:
  static void add_into(Tensor<Scalar>& dst, const Tensor<Scalar>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  void check_shapes() const {
    const auto& c = config_;
    const auto expect = [](const Tensor<Scalar>& t, const Shape& s, const char* name) {
      if (t.shape() != s)
        throw DimensionError(std::string(name) + " has shape " + shape_string(t.shape()) + ", expected " +
                             shape_string(s));
    };
    if (weights_.embedding.rank() != 2 || weights_.embedding.dim(1) != c.embedding_dim)
      throw DimensionError("embedding shape " + shape_string(weights_.embedding.shape()));
    expect(weights_.conv_filters, {c.channels, c.filter_width, c.embedding_dim}, "conv.filters");
    expect(weights_.conv_bias, {c.channels}, "conv.bias");
    if (c.variant == Variant::hybrid) {
      const std::size_t h = c.hidden_units, d = c.embedding_dim;
      for (const auto* cell : {&weights_.lstm_fwd, &weights_.lstm_bwd}) {
        expect(cell->input_w, {4 * h, d}, "lstm.input_w");
        expect(cell->recurrent_w, {4 * h, h}, "lstm.recurrent_w");
        expect(cell->bias, {4 * h}, "lstm.bias");
      }
      expect(weights_.attention.w, {c.attention_size, 2 * h}, "attention.w");
      expect(weights_.attention.bias, {c.attention_size}, "attention.bias");
      expect(weights_.attention.v, {c.attention_size}, "attention.v");
    }
    expect(weights_.hidden_w, {c.mlp_hidden, feature_width()}, "mlp.hidden_w");
    expect(weights_.hidden_b, {c.mlp_hidden}, "mlp.hidden_b");
    expect(weights_.out_w, {2, c.mlp_hidden}, "mlp.out_w");
    expect(weights_.out_b, {2}, "mlp.out_b");
  }

  ModelConfig config_;
  ModelWeights<Scalar> weights_;
};

/// -ln(probs[label]) with probabilities clamped to [1e-12, 1].
template <class Scalar>
double cross_entropy(const Tensor<Scalar>& probs, int label) {
  if (label != 0 && label != 1) throw DomainError("label must be 0 or 1, got " + std::to_string(label));
  const double p = std::clamp(static_cast<double>(probs[static_cast<std::size_t>(label)]), 1e-12, 1.0);
  return -std::log(p);
}

/// Gradient of cross_entropy(softmax(logits)) w.r.t. the logits: p - onehot.
template <class Scalar>
Tensor<Scalar> cross_entropy_logit_grad(const Tensor<Scalar>& probs, int label) {
  Tensor<Scalar> g = probs;
  g[static_cast<std::size_t>(label)] -= Scalar{1};
  return g;
}

/// Loss for one example plus its gradient accumulated (scaled by `weight`)
/// into grads. The L2 term is not included here.
template <class Scalar>
double example_loss_and_grad(const Model<Scalar>& model, std::span<const TokenId> ids, std::size_t length, int label,
                             bool training, Rng* dropout_rng, ModelWeights<Scalar>& grads, Scalar weight = Scalar{1}) {
  const ForwardPass<Scalar> fp = model.forward(ids, length, training, dropout_rng);
  const double loss = cross_entropy(fp.prediction.probs, label);
  Tensor<Scalar> g = cross_entropy_logit_grad(fp.prediction.probs, label);
  for (auto& v : g.data()) v *= weight;
  model.backward(fp, g, grads);
  return loss;
}

}  // namespace sarcnet
