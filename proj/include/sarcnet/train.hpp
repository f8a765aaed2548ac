#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sarcnet/config.hpp"
#include "sarcnet/data.hpp"
#include "sarcnet/errors.hpp"
#include "sarcnet/model.hpp"
#include "sarcnet/random.hpp"
#include "sarcnet/tensor.hpp"

namespace sarcnet {

// ---------------------------------------------------------------- AdaDelta

struct AdaDeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
  double scale = 1.0;  // multiplier on each update; the tuned "learning rate"

  void validate() const {
    if (!(rho > 0 && rho < 1)) throw ConfigError("AdaDelta rho must lie in (0, 1)");
    if (!(epsilon > 0)) throw ConfigError("AdaDelta epsilon must be positive");
    if (!(scale > 0)) throw ConfigError("AdaDelta scale must be positive");
  }

  static AdaDeltaConfig from(const ModelConfig& c) { return {c.rho, c.epsilon, c.learning_rate}; }
};

/// In-place AdaDelta update of one tensor, then the gradient is zeroed:
///   E[g2]  <- rho E[g2] + (1-rho) g^2
///   dx     <- -sqrt(E[dx2] + eps) / sqrt(E[g2] + eps) * g
///   E[dx2] <- rho E[dx2] + (1-rho) dx^2
///   x      <- x + scale * dx
template <class Scalar>
void adadelta_update(Tensor<Scalar>& value, Tensor<Scalar>& grad, Tensor<Scalar>& accum_sq_grad,
                     Tensor<Scalar>& accum_sq_delta, const AdaDeltaConfig& cfg, const std::string& name = "param") {
  const Scalar rho = static_cast<Scalar>(cfg.rho), one_minus = static_cast<Scalar>(1.0 - cfg.rho);
  const Scalar eps = static_cast<Scalar>(cfg.epsilon), scale = static_cast<Scalar>(cfg.scale);
  auto x = value.data();
  auto g = grad.data();
  auto eg = accum_sq_grad.data();
  auto ed = accum_sq_delta.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(g[i])) throw NumericError("non-finite gradient in '" + name + "' at element " + std::to_string(i));
  for (std::size_t i = 0; i < x.size(); ++i) {
    eg[i] = rho * eg[i] + one_minus * g[i] * g[i];
    const Scalar dx = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g[i];
    ed[i] = rho * ed[i] + one_minus * dx * dx;
    x[i] += scale * dx;
    g[i] = Scalar{0};
  }
}

template <class Scalar>
void adadelta_step(Parameter<Scalar>& p, const AdaDeltaConfig& cfg, const std::string& name = "param") {
  adadelta_update(p.value, p.grad, p.accum_sq_grad, p.accum_sq_delta, cfg, name);
}

/// Accumulators for every tensor of a model, shaped like its weights.
template <class Scalar>
struct AdaDeltaState {
  ModelWeights<Scalar> sq_grad;
  ModelWeights<Scalar> sq_delta;

  static AdaDeltaState for_model(const Model<Scalar>& m) {
    return {m.weights().zeros_like(m.variant()), m.weights().zeros_like(m.variant())};
  }

  void apply(Model<Scalar>& model, ModelWeights<Scalar>& grads, const AdaDeltaConfig& cfg) {
    const Variant v = model.variant();
    auto w = model.weights().entries(v);
    auto g = grads.entries(v);
    auto a = sq_grad.entries(v);
    auto d = sq_delta.entries(v);
    for (std::size_t i = 0; i < w.size(); ++i) adadelta_update(*w[i].tensor, *g[i].tensor, *a[i].tensor, *d[i].tensor, cfg, w[i].name);
  }
};

// ------------------------------------------------------------------ metrics

struct Example {
  PaddedIds input;
  int label = 0;
  std::size_t record = 0;  // index into the source dataset
};

/// Tokenize and encode records. A record with no tokens is rejected with its
/// index.
inline std::vector<Example> make_examples(const std::vector<HeadlineRecord>& records,
                                          const std::vector<std::size_t>& indices, const Vocabulary& vocab,
                                          std::size_t max_len) {
  std::vector<Example> out;
  out.reserve(indices.size());
  for (auto idx : indices) {
    const auto& r = records.at(idx);
    const auto toks = tokenize(r.headline);
    if (toks.empty())
      throw ValidationError("record " + std::to_string(idx) + " has no tokens after tokenization: '" + r.headline + "'");
    out.push_back({pad_or_truncate(vocab.encode(toks), max_len), r.is_sarcastic ? 1 : 0, idx});
  }
  return out;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double val_loss = 0;
  double val_accuracy = 0;
};

/// One tab-separated line per epoch: epoch, train_loss, train_acc,
/// val_loss, val_acc.
inline void write_metrics_log(std::ostream& out, const std::vector<EpochMetrics>& metrics) {
  char line[160];
  for (const auto& m : metrics) {
    std::snprintf(line, sizeof line, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", m.epoch, m.train_loss, m.train_accuracy,
                  m.val_loss, m.val_accuracy);
    out << line;
  }
}

struct Confusion {
  std::size_t true_negative = 0, false_positive = 0, false_negative = 0, true_positive = 0;
  std::size_t total() const { return true_negative + false_positive + false_negative + true_positive; }
};

struct EvalReport {
  double accuracy = 0;
  double mean_loss = 0;
  Confusion confusion;
};

template <class Scalar>
EvalReport evaluate(const std::vector<Example>& examples, const Model<Scalar>& model) {
  if (examples.empty()) throw DomainError("evaluate: empty partition");
  EvalReport r;
  double loss = 0;
  for (const auto& ex : examples) {
    const auto pred = model.predict_ids(ex.input.ids, ex.input.length);
    loss += cross_entropy(pred.probs, ex.label);
    auto& c = r.confusion;
    if (ex.label == 1)
      (pred.label == 1 ? c.true_positive : c.false_negative)++;
    else
      (pred.label == 1 ? c.false_positive : c.true_negative)++;
  }
  r.accuracy = static_cast<double>(r.confusion.true_positive + r.confusion.true_negative) /
               static_cast<double>(examples.size());
  r.mean_loss = loss / static_cast<double>(examples.size());
  return r;
}

// --------------------------------------------------------------------- fit

struct FitOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  std::size_t patience = 5;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  AdaDeltaConfig adadelta;
  std::function<void(const EpochMetrics&)> on_epoch;

  static FitOptions from(const ModelConfig& c) {
    FitOptions o;
    o.epochs = c.epochs;
    o.batch_size = c.batch_size;
    o.patience = c.patience;
    o.seed = c.seed;
    o.adadelta = AdaDeltaConfig::from(c);
    return o;
  }
};

template <class Scalar>
struct FitResult {
  Model<Scalar> best;                     // weights at the best validation accuracy
  std::vector<EpochMetrics> metrics;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::vector<std::size_t> train_visits;  // per training example, summed over epochs
};

namespace detail {

template <class Scalar>
void add_weights(ModelWeights<Scalar>& dst, ModelWeights<Scalar>& src, Variant v) {
  auto d = dst.entries(v);
  auto s = src.entries(v);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto dd = d[i].tensor->data();
    const auto ss = s[i].tensor->data();
    for (std::size_t k = 0; k < dd.size(); ++k) dd[k] += ss[k];
  }
}

}  // namespace detail

/// Mini-batch AdaDelta training with per-epoch seeded shuffling, L2 on
/// weight matrices, best-validation checkpointing and early stopping after
/// `patience` epochs without validation improvement.
///
/// Example gradients within a batch are split into contiguous per-thread
/// chunks and summed in chunk order, so results depend on the thread count
/// but never on scheduling.
template <class Scalar>
FitResult<Scalar> fit(Model<Scalar> model, const std::vector<Example>& train, const std::vector<Example>& val,
                      const FitOptions& opt) {
  if (train.empty() || val.empty()) throw DomainError("fit needs non-empty train and validation sets");
  if (opt.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  opt.adadelta.validate();
  const Variant variant = model.variant();
  const double l2 = model.config().l2;
  const std::size_t threads = std::max<std::size_t>(1, opt.threads);

  FitResult<Scalar> result{model, {}, 0, false, std::vector<std::size_t>(train.size(), 0)};
  double best_val = -1;
  std::size_t stale = 0;
  AdaDeltaState<Scalar> state = AdaDeltaState<Scalar>::for_model(model);
  ModelWeights<Scalar> grads = model.weights().zeros_like(variant);
  std::vector<ModelWeights<Scalar>> worker_grads;
  if (threads > 1)
    for (std::size_t t = 0; t < threads; ++t) worker_grads.push_back(model.weights().zeros_like(variant));

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffler = Rng::derive(opt.seed, 1, epoch);
    shuffler.shuffle(order);

    bool finite = true;
    for (std::size_t start = 0; start < order.size() && finite; start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      const Scalar weight = static_cast<Scalar>(1.0 / static_cast<double>(stop - start));
      const auto run_range = [&](std::size_t lo, std::size_t hi, ModelWeights<Scalar>& g) {
        double batch_loss = 0;
        for (std::size_t k = lo; k < hi; ++k) {
          const std::size_t idx = order[k];
          const Example& ex = train[idx];
          Rng drop = Rng::derive(opt.seed, 2 + epoch, idx);
          batch_loss += example_loss_and_grad(model, ex.input.ids, ex.input.length, ex.label, true, &drop, g, weight);
        }
        return batch_loss;
      };
      double batch_loss = 0;
      try {
        if (threads == 1 || stop - start < 2 * threads) {
          batch_loss = run_range(start, stop, grads);
        } else {
          std::vector<double> partial(threads, 0.0);
          std::vector<std::exception_ptr> errors(threads);
          {
            std::vector<std::jthread> pool;
            const std::size_t n = stop - start;
            for (std::size_t t = 0; t < threads; ++t) {
              const std::size_t lo = start + n * t / threads, hi = start + n * (t + 1) / threads;
              pool.emplace_back([&, t, lo, hi] {
                try {
                  partial[t] = run_range(lo, hi, worker_grads[t]);
                } catch (...) {
                  errors[t] = std::current_exception();
                }
              });
            }
          }
          for (auto& e : errors)
            if (e) std::rethrow_exception(e);
          for (std::size_t t = 0; t < threads; ++t) {
            batch_loss += partial[t];
            detail::add_weights(grads, worker_grads[t], variant);
            worker_grads[t].fill(variant, Scalar{0});
          }
        }
      } catch (const NumericError&) {
        batch_loss = std::numeric_limits<double>::quiet_NaN();
      }
      for (std::size_t k = start; k < stop; ++k) ++result.train_visits[order[k]];
      if (!std::isfinite(batch_loss)) {
        finite = false;
        break;
      }
      if (l2 > 0) {
        auto w = model.weights().entries(variant);
        auto g = grads.entries(variant);
        for (std::size_t i = 0; i < w.size(); ++i) {
          if (!w[i].regularized) continue;
          auto wd = w[i].tensor->data();
          auto gd = g[i].tensor->data();
          for (std::size_t k = 0; k < wd.size(); ++k) gd[k] += static_cast<Scalar>(2 * l2) * wd[k];
        }
      }
      try {
        state.apply(model, grads, opt.adadelta);
      } catch (const NumericError&) {
        finite = false;
      }
    }

    if (!finite) {
      result.diverged = true;
      break;
    }
    EvalReport tr, va;
    try {
      tr = evaluate(train, model);
      va = evaluate(val, model);
    } catch (const NumericError&) {
      result.diverged = true;
      break;
    }
    const double penalty = model.l2_penalty();
    EpochMetrics m{epoch, tr.mean_loss + penalty, tr.accuracy, va.mean_loss, va.accuracy};
    if (!std::isfinite(m.train_loss) || !std::isfinite(m.val_loss)) {
      result.diverged = true;
      break;
    }
    result.metrics.push_back(m);
    if (opt.on_epoch) opt.on_epoch(m);
    if (va.accuracy > best_val) {
      best_val = va.accuracy;
      result.best = model;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale > opt.patience) {
      break;
    }
  }
  return result;
}

// -------------------------------------------------------------- grid search

/// Ordered list of (config key, candidate values).
using ParamGrid = std::vector<std::pair<std::string, std::vector<std::string>>>;

/// The knobs tuned for the headline experiments.
inline ParamGrid default_grid() {
  return {{"learning_rate", {"0.5", "1.0"}}, {"l2", {"0", "1e-5", "1e-4"}}, {"channels", {"64", "128"}},
          {"filter_width", {"2", "3", "4"}}, {"hidden_units", {"64", "128"}},    {"dropout", {"0.2", "0.5"}}};
}

/// Cartesian product in row-major order (the last key varies fastest).
inline std::vector<std::vector<std::pair<std::string, std::string>>> grid_cells(const ParamGrid& grid) {
  std::vector<std::vector<std::pair<std::string, std::string>>> cells{{}};
  for (const auto& [key, values] : grid) {
    if (values.empty()) throw ConfigError("grid key '" + key + "' has no values");
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        auto c = cell;
        c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }
  return cells;
}

struct GridRow {
  std::size_t cell = 0;  // position in grid order
  std::vector<std::pair<std::string, std::string>> overrides;
  ModelConfig config;
  double val_accuracy = 0;
  std::size_t best_epoch = 0;
};

template <class Scalar>
struct GridResult {
  std::vector<GridRow> rows;  // ranked: val accuracy descending, then grid order
  Model<Scalar> best;
};

/// Trains each cell (at most `budget`, in grid order) from the same seed and
/// ranks the cells by validation accuracy.
template <class Scalar>
GridResult<Scalar> grid_search(const ModelConfig& base, const ParamGrid& grid, const std::vector<Example>& train,
                               const std::vector<Example>& val, std::size_t budget,
                               const std::function<Tensor<Scalar>(const ModelConfig&)>& make_embedding,
                               std::size_t threads = 1) {
  if (budget < 1) throw ConfigError("grid search budget must be >= 1");
  if (grid.empty()) throw ConfigError("grid search needs a non-empty grid");
  auto cells = grid_cells(grid);
  if (cells.size() > budget) cells.resize(budget);
  std::vector<GridRow> rows;
  std::vector<Model<Scalar>> models;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    std::string text;
    for (const auto& [k, v] : cells[i]) text += k + " = " + v + "\n";
    const ModelConfig cfg = parse_config(text, base);
    FitOptions opt = FitOptions::from(cfg);
    opt.threads = threads;
    auto res = fit(Model<Scalar>::initialize(cfg, make_embedding(cfg)), train, val, opt);
    double acc = 0;
    for (const auto& m : res.metrics)
      if (m.epoch == res.best_epoch) acc = m.val_accuracy;
    rows.push_back({i, cells[i], cfg, acc, res.best_epoch});
    models.push_back(std::move(res.best));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    return a.val_accuracy > b.val_accuracy;
  });
  return {rows, models[rows.front().cell]};
}

/// Tab-separated results table: rank, grid keys..., val_acc, best_epoch.
inline void write_grid_table(std::ostream& out, const std::vector<GridRow>& rows) {
  if (rows.empty()) return;
  out << "rank";
  for (const auto& [k, v] : rows.front().overrides) out << '\t' << k;
  out << "\tval_acc\tbest_epoch\n";
  char acc[32];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << r + 1;
    for (const auto& [k, v] : rows[r].overrides) out << '\t' << v;
    std::snprintf(acc, sizeof acc, "%.6f", rows[r].val_accuracy);
    out << '\t' << acc << '\t' << rows[r].best_epoch << '\n';
  }
}

}  // namespace sarcnet
