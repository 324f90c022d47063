#include <gtest/gtest.h>

#include <cmath>

#include <vcfp/eval.hpp>
#include <vcfp/random.hpp>

using namespace vcfp;

namespace {

ProbMatrix probs(std::size_t cols, const std::vector<std::vector<double>>& rows) {
  ProbMatrix p(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < cols; ++c) p(i, c) = rows[i][c];
  return p;
}

ProbMatrix random_probs(Rng& rng, std::size_t rows, std::size_t cols) {
  ProbMatrix p(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += (p(i, c) = rng.uniform());
    for (std::size_t c = 0; c < cols; ++c) p(i, c) /= s;
  }
  return p;
}

}  // namespace

TEST(ClosedWorld, OneHotsGiveDiagonalConfusion) {
  const auto p = probs(3, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 1, 0}});
  const std::vector<int> y{0, 1, 2, 1};
  const auto r = closed_world_report(p, y, {});
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::uint64_t>>{{1, 0, 0}, {0, 2, 0}, {0, 0, 1}}));
}

TEST(ClosedWorld, HandCountedAccuracy) {
  const auto p = probs(2, {{0.6, 0.4}, {0.3, 0.7}});
  const std::vector<int> y{1, 1};
  const auto r = closed_world_report(p, y, {});
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_EQ(r.confusion[1][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
}

TEST(ClosedWorld, TiesGoToLowestClass) {
  const auto p = probs(4, {{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}});
  EXPECT_EQ(predictions(p), (std::vector<int>{0, 0}));
  const std::vector<int> y{0, 3};
  EXPECT_DOUBLE_EQ(closed_world_report(p, y, {}).accuracy, 0.5);
}

TEST(ClosedWorld, PerCategoryBreakdown) {
  const auto p = probs(2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const std::vector<int> y{0, 1, 1, 0};
  const std::vector<CommandCategory> c{CommandCategory::Single, CommandCategory::Single, CommandCategory::Multiple,
                                       CommandCategory::TimeSensitive};
  const auto r = closed_world_report(p, y, c);
  EXPECT_DOUBLE_EQ(r.per_category_accuracy.at(CommandCategory::Single), 0.5);
  EXPECT_DOUBLE_EQ(r.per_category_accuracy.at(CommandCategory::Multiple), 1.0);
  EXPECT_DOUBLE_EQ(r.per_category_accuracy.at(CommandCategory::TimeSensitive), 0.0);
}

TEST(ClosedWorld, Errors) {
  const auto p = probs(2, {{1, 0}});
  const std::vector<int> two{0, 1};
  EXPECT_THROW(closed_world_report(p, two, {}), ValidationError);
  const std::vector<int> out_of_range{2};
  EXPECT_THROW(closed_world_report(p, out_of_range, {}), ValidationError);
  const std::vector<int> one{0};
  const std::vector<CommandCategory> cats{CommandCategory::Single, CommandCategory::Single};
  EXPECT_THROW(closed_world_report(p, one, cats), ValidationError);
}

TEST(ClosedWorld, AccuracyIsConfusionTrace) {
  Rng rng(1);
  std::vector<EvalReport> folds;
  for (int f = 0; f < 4; ++f) {
    const auto p = random_probs(rng, 30, 5);
    std::vector<int> y(30);
    for (auto& v : y) v = static_cast<int>(rng.below(5));
    folds.push_back(closed_world_report(p, y, {}));
    EXPECT_DOUBLE_EQ(folds.back().accuracy, trace_ratio(folds.back()));
  }
  const auto merged = merge_folds(folds);
  EXPECT_DOUBLE_EQ(merged.accuracy, trace_ratio(merged));
  EXPECT_EQ(merged.total, 120u);
  ASSERT_EQ(merged.per_fold_accuracies.size(), 4u);
  double mean = 0;
  for (const auto& f : folds) mean += f.accuracy / 4;
  double ss = 0;
  for (const auto& f : folds) ss += (f.accuracy - mean) * (f.accuracy - mean);
  EXPECT_NEAR(merged.fold_variance, ss / 3, 1e-15);
  EXPECT_THROW(merge_folds({}), ValidationError);
}

TEST(OpenWorld, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.3};
  const std::vector<bool> m{true, true, false, false};
  const auto r = open_world_report(s, m, 0.5);
  EXPECT_DOUBLE_EQ(r.acc, 1.0);
  EXPECT_DOUBLE_EQ(r.tpr, 1.0);
  EXPECT_DOUBLE_EQ(r.fpr, 0.0);
}

TEST(OpenWorld, HandCounted) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<bool> m{true, false, true, false};
  const auto r = open_world_report(s, m, 0.5);
  EXPECT_DOUBLE_EQ(r.acc, 0.5);
  EXPECT_DOUBLE_EQ(r.tpr, 0.5);
  EXPECT_DOUBLE_EQ(r.fpr, 0.5);
  EXPECT_EQ(r.tp, 1u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.tn, 1u);
  EXPECT_EQ(r.fn, 1u);
}

TEST(OpenWorld, ZeroThresholdFlagsEverything) {
  const std::vector<double> s{0.9, 0.0, 0.2, 0.1};
  const std::vector<bool> m{true, false, true, false};
  const auto r = open_world_report(s, m, 0.0);
  EXPECT_DOUBLE_EQ(r.tpr, 1.0);
  EXPECT_DOUBLE_EQ(r.fpr, 1.0);
}

TEST(OpenWorld, Errors) {
  const std::vector<double> s{0.9, 0.1};
  EXPECT_THROW(open_world_report(s, std::vector<bool>{true, true}), ValidationError);
  EXPECT_THROW(open_world_report(s, std::vector<bool>{false, false}), ValidationError);
  EXPECT_THROW(open_world_report(s, std::vector<bool>{true}), ValidationError);
  EXPECT_THROW(open_world_report(std::vector<double>{1.5, 0.1}, std::vector<bool>{true, false}), ValidationError);
}

TEST(OpenWorld, MonitoredScoreIsMaxOverMonitoredClasses) {
  const auto p = probs(3, {{0.2, 0.5, 0.3}, {0.1, 0.2, 0.7}});
  const std::vector<bool> mask{true, false, true};
  EXPECT_EQ(monitored_scores(p, mask), (std::vector<double>{0.3, 0.7}));
  EXPECT_THROW(monitored_scores(p, std::vector<bool>{true}), ValidationError);
}

TEST(OpenWorld, RocSweepEndsAtTrivialThreshold) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<bool> m{true, false, true, false};
  const auto roc = roc_sweep(s, m);
  ASSERT_EQ(roc.size(), 5u);
  EXPECT_DOUBLE_EQ(roc.front().threshold, 0.9);
  EXPECT_DOUBLE_EQ(roc.back().tpr, 1.0);
  EXPECT_DOUBLE_EQ(roc.back().fpr, 1.0);
  for (std::size_t k = 1; k < roc.size(); ++k) EXPECT_GE(roc[k].tpr, roc[k - 1].tpr);
}

TEST(Weights, ValidationAccuracyNormalization) {
  const auto w = normalize_weights(std::vector<double>{89.05, 88.65, 75.98}).w;
  ASSERT_EQ(w.size(), 3u);
  const double total = 89.05 + 88.65 + 75.98;
  EXPECT_DOUBLE_EQ(w[0], 89.05 / total);
  EXPECT_DOUBLE_EQ(w[1], 88.65 / total);
  EXPECT_DOUBLE_EQ(w[2], 75.98 / total);
  EXPECT_NEAR(w[0], 0.3510, 1e-4);
  EXPECT_NEAR(w[1], 0.3495, 1e-4);
  EXPECT_NEAR(w[2], 0.2995, 1e-4);
  EXPECT_DOUBLE_EQ(std::round(w[0] * 100) / 100, 0.35);
  EXPECT_DOUBLE_EQ(std::round(w[1] * 100) / 100, 0.35);
  EXPECT_DOUBLE_EQ(std::round(w[2] * 100) / 100, 0.30);
  EXPECT_NEAR(w[0] + w[1] + w[2], 1.0, 1e-9);
}

TEST(Weights, TrivialCases) {
  const auto avg = normalize_weights(std::vector<double>{1, 1, 1}).w;
  for (double x : avg) EXPECT_DOUBLE_EQ(x, 1.0 / 3);
  EXPECT_EQ(normalize_weights(std::vector<double>{1, 0}).w, (std::vector<double>{1, 0}));
  EXPECT_THROW(normalize_weights(std::vector<double>{0, 0}), ValidationError);
  EXPECT_THROW(normalize_weights(std::vector<double>{0.5, -0.1}), ValidationError);
}

TEST(Weights, ScaleInvariant) {
  const std::vector<double> a{0.7, 0.2, 0.55};
  const auto base = normalize_weights(a).w;
  for (double k : {0.01, 3.0, 100.0}) {
    std::vector<double> scaled;
    for (double x : a) scaled.push_back(k * x);
    const auto w = normalize_weights(scaled).w;
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], base[i], 1e-15);
  }
}

TEST(Ensemble, SingleModelIsIdentity) {
  Rng rng(4);
  const std::vector<ProbMatrix> one{random_probs(rng, 15, 4)};
  const auto r = ensemble_combine(one, EnsembleWeights{{1.0}});
  EXPECT_EQ(r.predictions, predictions(one[0]));
}

TEST(Ensemble, TwoModelArithmetic) {
  const std::vector<ProbMatrix> ms{probs(2, {{0.6, 0.4}}), probs(2, {{0.1, 0.9}})};
  const auto r = ensemble_combine(ms, EnsembleWeights{{0.5, 0.5}});
  EXPECT_DOUBLE_EQ(r.combined(0, 0), 0.35);
  EXPECT_DOUBLE_EQ(r.combined(0, 1), 0.65);
  EXPECT_EQ(r.predictions, std::vector<int>{1});
}

TEST(Ensemble, MatchesBruteForceArgmax) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ProbMatrix> ms;
    for (int k = 0; k < 3; ++k) ms.push_back(random_probs(rng, 20, 4));
    const auto w = normalize_weights(std::vector<double>{rng.uniform(), rng.uniform(), rng.uniform()});
    const auto r = ensemble_combine(ms, w);
    for (std::size_t i = 0; i < 20; ++i) {
      int best = 0;
      double best_v = -1;
      for (int c = 0; c < 4; ++c) {
        double v = 0;
        for (int k = 0; k < 3; ++k) v += w.w[k] * ms[k](i, c);
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      EXPECT_EQ(r.predictions[i], best);
    }
  }
}

TEST(Ensemble, IdenticalMembersReproduceTheModel) {
  Rng rng(6);
  const auto p = random_probs(rng, 25, 5);
  const std::vector<ProbMatrix> ms{p, p, p};
  const auto r = ensemble_combine(ms, EnsembleWeights{{0.1, 0.6, 0.3}});
  EXPECT_EQ(r.predictions, predictions(p));
}

TEST(Ensemble, ArgmaxInvariantToWeightScale) {
  Rng rng(7);
  std::vector<ProbMatrix> ms;
  for (int k = 0; k < 3; ++k) ms.push_back(random_probs(rng, 30, 6));
  const auto base = ensemble_combine(ms, EnsembleWeights{{0.2, 0.3, 0.5}}).predictions;
  EXPECT_EQ(ensemble_combine(ms, EnsembleWeights{{2, 3, 5}}).predictions, base);
  EXPECT_EQ(ensemble_combine(ms, EnsembleWeights{{0.02, 0.03, 0.05}}).predictions, base);
}

TEST(Ensemble, Errors) {
  Rng rng(9);
  const std::vector<ProbMatrix> ms{random_probs(rng, 3, 2), random_probs(rng, 4, 2)};
  EXPECT_THROW(ensemble_combine(ms, EnsembleWeights{{0.5, 0.5}}), ValidationError);
  const std::vector<ProbMatrix> ok{random_probs(rng, 3, 2)};
  EXPECT_THROW(ensemble_combine(ok, EnsembleWeights{{0.5, 0.5}}), ValidationError);
  EXPECT_THROW(ensemble_combine(std::vector<ProbMatrix>{}, EnsembleWeights{}), ValidationError);
}
