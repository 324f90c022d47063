#pragma once

// Closed-world accuracy/confusion, open-world TPR/FPR and the weighted
// softmax ensemble.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "vcfp/error.hpp"
#include "vcfp/matrix.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

struct OpenWorldResult {
  double acc = 0, tpr = 0, fpr = 0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double threshold = 0.5;
};

struct EvalReport {
  double accuracy = 0;
  std::vector<double> per_fold_accuracies;
  double fold_variance = 0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::map<CommandCategory, double> per_category_accuracy;
  std::map<CommandCategory, std::pair<std::size_t, std::size_t>> per_category_counts;  // correct, total
  std::optional<OpenWorldResult> openworld;
  std::size_t total = 0;
};

inline EvalReport closed_world_report(const ProbMatrix& probs, std::span<const int> labels,
                                      std::span<const CommandCategory> categories) {
  if (probs.rows != labels.size()) throw ValidationError("probability rows do not match label count");
  if (!categories.empty() && categories.size() != labels.size())
    throw ValidationError("category count does not match label count");
  const std::size_t C = probs.cols;
  EvalReport r;
  r.total = labels.size();
  r.confusion.assign(C, std::vector<std::uint64_t>(C, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C) throw ValidationError("label outside probability columns");
    const auto pred = argmax(probs.row(i));
    ++r.confusion[static_cast<std::size_t>(labels[i])][pred];
    const bool hit = pred == static_cast<std::size_t>(labels[i]);
    correct += hit;
    if (!categories.empty()) {
      auto& [c, n] = r.per_category_counts[categories[i]];
      c += hit;
      ++n;
    }
  }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  for (const auto& [cat, cn] : r.per_category_counts)
    r.per_category_accuracy[cat] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
  r.per_fold_accuracies = {r.accuracy};
  return r;
}

inline double trace_ratio(const EvalReport& r) {
  std::uint64_t diag = 0, all = 0;
  for (std::size_t i = 0; i < r.confusion.size(); ++i)
    for (std::size_t j = 0; j < r.confusion[i].size(); ++j) {
      all += r.confusion[i][j];
      if (i == j) diag += r.confusion[i][j];
    }
  return all ? static_cast<double>(diag) / static_cast<double>(all) : 0.0;
}

// Pools confusion counts over folds; fold_variance is the sample variance of
// the per-fold accuracies.
inline EvalReport merge_folds(const std::vector<EvalReport>& folds) {
  if (folds.empty()) throw ValidationError("no folds to merge");
  EvalReport r;
  const std::size_t C = folds.front().confusion.size();
  r.confusion.assign(C, std::vector<std::uint64_t>(C, 0));
  for (const auto& f : folds) {
    if (f.confusion.size() != C) throw ValidationError("fold reports disagree on class count");
    for (std::size_t i = 0; i < C; ++i)
      for (std::size_t j = 0; j < C; ++j) r.confusion[i][j] += f.confusion[i][j];
    for (const auto& [cat, cn] : f.per_category_counts) {
      r.per_category_counts[cat].first += cn.first;
      r.per_category_counts[cat].second += cn.second;
    }
    r.total += f.total;
    r.per_fold_accuracies.push_back(f.accuracy);
  }
  r.accuracy = trace_ratio(r);
  for (const auto& [cat, cn] : r.per_category_counts)
    r.per_category_accuracy[cat] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
  if (folds.size() > 1) {
    const double n = static_cast<double>(folds.size());
    const double mean = std::accumulate(r.per_fold_accuracies.begin(), r.per_fold_accuracies.end(), 0.0) / n;
    double ss = 0;
    for (double a : r.per_fold_accuracies) ss += (a - mean) * (a - mean);
    r.fold_variance = ss / (n - 1);
  }
  return r;
}

inline OpenWorldResult open_world_report(std::span<const double> monitored_prob, const std::vector<bool>& monitored,
                                         double threshold = 0.5) {
  if (monitored_prob.size() != monitored.size()) throw ValidationError("score and flag counts differ");
  OpenWorldResult r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < monitored.size(); ++i) {
    const double s = monitored_prob[i];
    if (!(s >= 0 && s <= 1)) throw ValidationError("monitored probability outside [0, 1]");
    const bool flagged = s >= threshold;
    if (monitored[i]) (flagged ? r.tp : r.fn)++;
    else (flagged ? r.fp : r.tn)++;
  }
  if (r.tp + r.fn == 0) throw ValidationError("open world evaluation has no monitored rows");
  if (r.fp + r.tn == 0) throw ValidationError("open world evaluation has no unmonitored rows");
  r.tpr = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  r.fpr = static_cast<double>(r.fp) / static_cast<double>(r.fp + r.tn);
  r.acc = static_cast<double>(r.tp + r.tn) / static_cast<double>(monitored.size());
  return r;
}

// Monitored score of a multiclass model: the largest probability among the
// monitored classes.
inline std::vector<double> monitored_scores(const ProbMatrix& probs, const std::vector<bool>& class_is_monitored) {
  if (class_is_monitored.size() != probs.cols) throw ValidationError("monitored mask width differs from class count");
  std::vector<double> out(probs.rows, 0.0);
  for (std::size_t i = 0; i < probs.rows; ++i)
    for (std::size_t c = 0; c < probs.cols; ++c)
      if (class_is_monitored[c]) out[i] = std::max(out[i], probs(i, c));
  return out;
}

// Operating points at every distinct score (plus the trivial threshold 0).
inline std::vector<OpenWorldResult> roc_sweep(std::span<const double> scores, const std::vector<bool>& monitored) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  thresholds.push_back(0.0);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<OpenWorldResult> out;
  for (auto it = thresholds.rbegin(); it != thresholds.rend(); ++it) out.push_back(open_world_report(scores, monitored, *it));
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble

struct EnsembleWeights {
  std::vector<double> w;
};

inline EnsembleWeights normalize_weights(std::span<const double> validation_accuracies) {
  double sum = 0;
  for (double a : validation_accuracies) {
    if (!(a >= 0)) throw ValidationError("validation accuracies must be non-negative");
    sum += a;
  }
  if (!(sum > 0)) throw ValidationError("validation accuracies are all zero");
  EnsembleWeights e;
  for (double a : validation_accuracies) e.w.push_back(a / sum);
  return e;
}

struct EnsembleResult {
  ProbMatrix combined;
  std::vector<int> predictions;
};

inline EnsembleResult ensemble_combine(std::span<const ProbMatrix> models, const EnsembleWeights& weights) {
  if (models.empty()) throw ValidationError("ensemble needs at least one model");
  if (weights.w.size() != models.size()) throw ValidationError("one weight per model is required");
  const auto rows = models.front().rows, cols = models.front().cols;
  for (const auto& m : models)
    if (m.rows != rows || m.cols != cols) throw ValidationError("ensemble members differ in shape");
  EnsembleResult r{ProbMatrix(rows, cols), {}};
  for (std::size_t k = 0; k < models.size(); ++k)
    for (std::size_t i = 0; i < rows * cols; ++i) r.combined.data[i] += weights.w[k] * models[k].data[i];
  r.predictions = predictions(r.combined);
  return r;
}

}  // namespace vcfp
