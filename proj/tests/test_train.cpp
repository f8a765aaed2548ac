#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace sarcnet;
using namespace testing_support;

namespace {

struct Partitions {
  Vocabulary vocab;
  std::vector<Example> train, val;
};

Partitions toy_partitions(std::size_t max_len = 12) {
  const auto data = toy_data();
  return {data.vocab, make_examples(data.records, iota(0, 48), data.vocab, max_len),
          make_examples(data.records, iota(48, 60), data.vocab, max_len)};
}

}  // namespace

// ------------------------------------------------------------------ AdaDelta

TEST(AdaDelta, FirstStepFromZeroAccumulators) {
  Parameter<double> p(Tensor<double>::vector({0.0}));
  p.grad[0] = 1.0;
  adadelta_step(p, {0.95, 1e-6, 1.0});
  EXPECT_NEAR(p.value[0], -0.004472091234310839, 1e-15);
  EXPECT_EQ(p.grad[0], 0.0);
  EXPECT_NEAR(p.accum_sq_grad[0], 0.05, 1e-15);
}

TEST(AdaDelta, ZeroGradientLeavesValueAndDecaysAccumulators) {
  Parameter<double> p(Tensor<double>::vector({1.5, -2.0}));
  p.accum_sq_grad.fill(0.4);
  p.accum_sq_delta.fill(0.2);
  adadelta_step(p, {0.9, 1e-6, 1.0});
  EXPECT_EQ(p.value, Tensor<double>::vector({1.5, -2.0}));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(p.accum_sq_grad[i], 0.9 * 0.4, 1e-15);
    EXPECT_NEAR(p.accum_sq_delta[i], 0.9 * 0.2, 1e-15);
  }
}

TEST(AdaDelta, ScaleMultipliesUpdate) {
  Parameter<double> a(Tensor<double>::vector({0.0})), b(Tensor<double>::vector({0.0}));
  a.grad[0] = b.grad[0] = 0.3;
  adadelta_step(a, {0.95, 1e-6, 1.0});
  adadelta_step(b, {0.95, 1e-6, 0.5});
  EXPECT_NEAR(b.value[0], 0.5 * a.value[0], 1e-15);
}

TEST(AdaDelta, StepOpposesGradientAndAccumulatorsStayNonNegative) {
  Rng rng(21);
  Parameter<double> p(Tensor<double>({16}));
  for (int step = 0; step < 200; ++step) {
    const Tensor<double> before = p.value;
    std::vector<double> g(16);
    for (std::size_t i = 0; i < 16; ++i) p.grad[i] = g[i] = rng.uniform(-5, 5);
    adadelta_step(p, {});
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_GE(p.accum_sq_grad[i], 0.0);
      EXPECT_GE(p.accum_sq_delta[i], 0.0);
      EXPECT_LE((p.value[i] - before[i]) * g[i], 0.0);
    }
  }
}

TEST(AdaDelta, NonFiniteGradientIsNumericError) {
  Parameter<double> p(Tensor<double>::vector({0.0}));
  p.grad[0] = std::nan("");
  EXPECT_THROW(adadelta_step(p, {}, "w"), NumericError);
}

TEST(AdaDelta, InvalidConfig) {
  EXPECT_THROW((AdaDeltaConfig{1.0, 1e-6, 1.0}.validate()), ConfigError);
  EXPECT_THROW((AdaDeltaConfig{0.9, 0.0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((AdaDeltaConfig{0.9, 1e-6, 0.0}.validate()), ConfigError);
}

// ------------------------------------------------------------------ examples

TEST(Examples, EmptyTokenizationNamesRecord) {
  std::vector<HeadlineRecord> recs{{"fine words", false, ""}, {"?!", true, ""}};
  try {
    make_examples(recs, {0, 1}, Vocabulary{}, 4);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
  }
}

TEST(Evaluate, CountsConfusion) {
  auto parts = toy_partitions();
  auto model = toy_model<float>(small_config(), parts.vocab);
  // A zero output layer predicts label 0 for everything.
  model.weights().out_w.fill(0.0f);
  model.weights().out_b.fill(0.0f);
  const auto r = evaluate(parts.val, model);
  std::size_t negatives = 0;
  for (const auto& ex : parts.val) negatives += ex.label == 0;
  EXPECT_EQ(r.confusion.true_negative, negatives);
  EXPECT_EQ(r.confusion.false_negative, parts.val.size() - negatives);
  EXPECT_EQ(r.confusion.true_positive + r.confusion.false_positive, 0u);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(negatives) / parts.val.size());
  EXPECT_NEAR(r.mean_loss, std::log(2.0), 1e-6);
  EXPECT_THROW(evaluate(std::vector<Example>{}, model), DomainError);
}

TEST(Evaluate, PerfectPredictorScoresOne) {
  auto parts = toy_partitions();
  auto model = toy_model<float>(small_config(), parts.vocab);
  // Relabel the partition with the model's own predictions.
  for (auto& ex : parts.val) ex.label = model.predict_ids(ex.input.ids, ex.input.length).label;
  const auto r = evaluate(parts.val, model);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.confusion.total(), parts.val.size());
  EXPECT_EQ(r.confusion.false_positive + r.confusion.false_negative, 0u);
}

TEST(Evaluate, ConfusionSumsToPartitionSize) {
  const auto parts = toy_partitions();
  const auto model = toy_model<float>(small_config(Variant::baseline), parts.vocab);
  EXPECT_EQ(evaluate(parts.train, model).confusion.total(), parts.train.size());
}

// ----------------------------------------------------------------------- fit

TEST(Fit, TrainedBeatsUntrainedOnTrainSet) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 10;
  cfg.patience = 10;
  const auto untrained = toy_model<float>(cfg, parts.vocab);
  const auto r = fit(untrained, parts.train, parts.val, FitOptions::from(cfg));
  EXPECT_GE(r.metrics.back().train_accuracy, evaluate(parts.train, untrained).accuracy);
}

TEST(Fit, DeterministicForFixedSeed) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.dropout = 0.3;
  cfg.l2 = 1e-4;
  const auto run = [&] {
    return fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
  };
  const auto a = run(), b = run();
  std::ostringstream la, lb;
  write_metrics_log(la, a.metrics);
  write_metrics_log(lb, b.metrics);
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.best.weights().out_w, b.best.weights().out_w);
  EXPECT_EQ(a.best.weights().embedding, b.best.weights().embedding);
}

TEST(Fit, ThreadedRunIsDeterministicPerThreadCount) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.batch_size = 16;
  cfg.epochs = 2;
  auto opt = FitOptions::from(cfg);
  opt.threads = 3;
  const auto a = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, opt);
  const auto b = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, opt);
  EXPECT_EQ(a.best.weights().hidden_w, b.best.weights().hidden_w);
}

TEST(Fit, EveryTrainingExampleVisitedOncePerEpoch) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 3;
  cfg.patience = 10;
  const auto r = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
  ASSERT_FALSE(r.diverged);
  for (auto n : r.train_visits) EXPECT_EQ(n, r.metrics.size());
}

TEST(Fit, PatienceZeroStopsAfterFirstStaleEpoch) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 30;
  cfg.patience = 0;
  const auto r = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
  ASSERT_GE(r.metrics.size(), 1u);
  // Every epoch but the last improved validation accuracy.
  for (std::size_t i = 1; i + 1 < r.metrics.size(); ++i)
    EXPECT_GT(r.metrics[i].val_accuracy, r.metrics[i - 1].val_accuracy);
  if (r.metrics.size() < 30) EXPECT_EQ(r.best_epoch + 1, r.metrics.size());
}

TEST(Fit, BestModelMatchesBestEpochAccuracy) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 6;
  const auto r = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
  double best = 0;
  for (const auto& m : r.metrics) best = std::max(best, m.val_accuracy);
  EXPECT_EQ(evaluate(parts.val, r.best).accuracy, best);
}

// Full-batch, no regularisation: AdaDelta's early steps are small, so the
// training loss should fall in (almost) every epoch.
TEST(Fit, LossNonIncreasingEarlyOn) {
  const auto parts = toy_partitions();
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = small_config();
    cfg.seed = seed;
    cfg.batch_size = parts.train.size();
    cfg.epochs = 5;
    cfg.patience = 10;
    const auto r = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
    bool ok = r.metrics.size() == 5;
    for (std::size_t i = 1; ok && i < r.metrics.size(); ++i) ok = r.metrics[i].train_loss <= r.metrics[i - 1].train_loss;
    monotone += ok;
  }
  EXPECT_GE(monotone, 19);
}

TEST(Fit, DivergenceIsReported) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  auto model = toy_model<float>(cfg, parts.vocab);
  model.weights().out_w.fill(std::numeric_limits<float>::infinity());
  const auto r = fit(model, parts.train, parts.val, FitOptions::from(cfg));
  EXPECT_TRUE(r.diverged);
}

// The attention branch must carry signal: replacing its weights by a uniform
// average changes what the trained model predicts.
TEST(Fit, AttentionBranchIsLive) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 8;
  const auto trained = fit(toy_model<double>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg)).best;
  auto flat = trained;
  flat.weights().attention.v.fill(0.0);
  double max_diff = 0;
  for (const auto* part : {&parts.train, &parts.val})
    for (const auto& ex : *part) {
      const auto p = trained.predict_ids(ex.input.ids, ex.input.length);
      const auto q = flat.predict_ids(ex.input.ids, ex.input.length);
      max_diff = std::max(max_diff, std::abs(p.probs[1] - q.probs[1]));
    }
  EXPECT_GT(max_diff, 1e-6);
}

TEST(Metrics, LogFormat) {
  std::ostringstream out;
  write_metrics_log(out, {{1, 0.5, 0.75, 0.6, 0.5}});
  EXPECT_EQ(out.str(), "1\t0.500000\t0.750000\t0.600000\t0.500000\n");
}

// ---------------------------------------------------------------------- grid

TEST(Grid, CellOrderIsRowMajor) {
  const auto cells = grid_cells({{"a", {"1", "2"}}, {"b", {"x", "y", "z"}}});
  ASSERT_EQ(cells.size(), 6u);
  EXPECT_EQ(cells[1], (std::vector<std::pair<std::string, std::string>>{{"a", "1"}, {"b", "y"}}));
  EXPECT_EQ(cells[3], (std::vector<std::pair<std::string, std::string>>{{"a", "2"}, {"b", "x"}}));
  EXPECT_EQ(grid_cells(default_grid()).size(), 2u * 3 * 2 * 3 * 2 * 2);
  EXPECT_THROW(grid_cells({{"a", {}}}), ConfigError);
}

TEST(Grid, SingleCellEqualsPlainFit) {
  const auto parts = toy_partitions();
  const auto cfg = small_config();
  const auto make = [&](const ModelConfig& c) {
    return build_embedding_matrix<float>(parts.vocab, nullptr, c.embedding_dim, c.oov_range, c.seed).table;
  };
  const auto g = grid_search<float>(cfg, {{"dropout", {"0"}}}, parts.train, parts.val, 10, make);
  const auto f = fit(toy_model<float>(cfg, parts.vocab), parts.train, parts.val, FitOptions::from(cfg));
  ASSERT_EQ(g.rows.size(), 1u);
  EXPECT_EQ(g.rows[0].best_epoch, f.best_epoch);
  EXPECT_EQ(g.best.weights().out_w, f.best.weights().out_w);
}

TEST(Grid, TwoByTwoIsRankedByValidationAccuracy) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 2;
  const auto make = [&](const ModelConfig& c) {
    return build_embedding_matrix<float>(parts.vocab, nullptr, c.embedding_dim, c.oov_range, c.seed).table;
  };
  const auto g = grid_search<float>(cfg, {{"channels", {"4", "6"}}, {"filter_width", {"2", "3"}}}, parts.train,
                                    parts.val, 10, make);
  ASSERT_EQ(g.rows.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) {
    EXPECT_GE(g.rows[i - 1].val_accuracy, g.rows[i].val_accuracy);
    if (g.rows[i - 1].val_accuracy == g.rows[i].val_accuracy) EXPECT_LT(g.rows[i - 1].cell, g.rows[i].cell);
  }
  EXPECT_EQ(g.best.config().channels, g.rows[0].config.channels);
  std::ostringstream table;
  write_grid_table(table, g.rows);
  EXPECT_EQ(table.str().substr(0, 35), "rank\tchannels\tfilter_width\tval_acc\t");
}

TEST(Grid, BudgetLimitsCells) {
  const auto parts = toy_partitions();
  auto cfg = small_config();
  cfg.epochs = 1;
  const auto make = [&](const ModelConfig& c) {
    return build_embedding_matrix<float>(parts.vocab, nullptr, c.embedding_dim, c.oov_range, c.seed).table;
  };
  EXPECT_EQ(grid_search<float>(cfg, {{"channels", {"4", "5", "6"}}}, parts.train, parts.val, 2, make).rows.size(), 2u);
  EXPECT_THROW(grid_search<float>(cfg, {{"channels", {"4"}}}, parts.train, parts.val, 0, make), ConfigError);
  EXPECT_THROW(grid_search<float>(cfg, {}, parts.train, parts.val, 1, make), ConfigError);
}
