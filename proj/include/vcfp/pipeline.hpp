#pragma once

// Glue for end-to-end attack experiments: feature extraction by name,
// per-fold train / validate / test, and obfuscated copies of datasets.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vcfp/classifiers.hpp"
#include "vcfp/defense.hpp"
#include "vcfp/eval.hpp"
#include "vcfp/features.hpp"
#include "vcfp/preprocess.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

enum class FeatureKind { Cumul, Cns19, Numeric, Binary };

inline constexpr std::string_view to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::Cumul: return "cumul";
    case FeatureKind::Cns19: return "cns19";
    case FeatureKind::Numeric: return "numeric";
    case FeatureKind::Binary: return "binary";
  }
  return "numeric";
}

inline FeatureKind feature_kind_from_string(std::string_view s) {
  if (s == "cumul") return FeatureKind::Cumul;
  if (s == "cns19") return FeatureKind::Cns19;
  if (s == "numeric") return FeatureKind::Numeric;
  if (s == "binary") return FeatureKind::Binary;
  throw ValidationError("unknown feature kind '" + std::string(s) + "'");
}

struct AttackConfig {
  FeatureKind features = FeatureKind::Numeric;
  ModelKind model = ModelKind::OneNN;
  TrainOptions train;
  PreprocessConfig preprocess;  // format is implied by features for numeric/binary
  int cumul_points = kDefaultCumulPoints;
  int max_bursts = kDefaultMaxBursts;
  int size_bins = kDefaultSizeBins;

  std::string name() const { return std::string(to_string(features)) + "+" + std::string(to_string(model)); }

  PreprocessConfig encoding() const {
    PreprocessConfig p = preprocess;
    p.format = features == FeatureKind::Binary ? Format::Binary : Format::Numeric;
    return p;
  }
};

inline bool needs_scaler(const AttackConfig& cfg) {
  return cfg.features == FeatureKind::Numeric || cfg.features == FeatureKind::Binary;
}

inline Scaler fit_attack_scaler(const Dataset& d, std::span<const std::size_t> idx, const AttackConfig& cfg) {
  if (!needs_scaler(cfg)) return {};
  std::vector<Trace> traces;
  traces.reserve(idx.size());
  for (auto i : idx) traces.push_back(d.traces[i].trace);
  return fit_scaler(traces, cfg.encoding());
}

inline std::vector<double> feature_row(const Trace& t, const AttackConfig& cfg, const Scaler& scaler) {
  switch (cfg.features) {
    case FeatureKind::Cumul: return cumul_features(direction_filter(t, cfg.preprocess.keep), cfg.cumul_points);
    case FeatureKind::Cns19: return cns19_features(direction_filter(t, cfg.preprocess.keep), cfg.max_bursts, cfg.size_bins);
    case FeatureKind::Numeric:
    case FeatureKind::Binary: return encode_row(t, cfg.encoding(), scaler);
  }
  return {};
}

inline FeatureMatrix build_features(const Dataset& d, std::span<const std::size_t> idx, const AttackConfig& cfg,
                                    const Scaler& scaler) {
  FeatureMatrix fm;
  fm.num_classes = d.num_classes;
  fm.feature_spec = cfg.name();
  for (auto i : idx) fm.add_row(feature_row(d.traces[i].trace, cfg, scaler), d.traces[i].command_id);
  return fm;
}

struct FoldOutcome {
  EvalReport report;
  ProbMatrix test_probs;
  std::vector<std::size_t> test_indices;
  double validation_accuracy = 0;
  ClassifierModel model;
};

// Trains on the fold's training role of train_src and scores the
// validation/test roles of test_src. Both datasets must be index-aligned
// (e.g. a dataset and its obfuscated copy).
inline FoldOutcome run_fold(const Dataset& train_src, const Dataset& test_src, const SplitPlan& plan, int fold,
                            const AttackConfig& cfg) {
  if (train_src.size() != test_src.size()) throw ValidationError("train and test sources are not index-aligned");
  const auto train_idx = plan.indices(fold, Role::Train);
  const auto val_idx = plan.indices(fold, Role::Validation);
  const auto test_idx = plan.indices(fold, Role::Test);

  const Scaler scaler = fit_attack_scaler(train_src, train_idx, cfg);
  FoldOutcome out;
  out.model = train(cfg.model, build_features(train_src, train_idx, cfg, scaler), cfg.train);

  auto labels_of = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> y;
    std::vector<CommandCategory> c;
    for (auto i : idx) {
      y.push_back(test_src.traces[i].command_id);
      c.push_back(test_src.traces[i].category);
    }
    return std::pair{y, c};
  };

  if (!val_idx.empty()) {
    const auto [vy, vc] = labels_of(val_idx);
    out.validation_accuracy =
        closed_world_report(predict_proba(out.model, build_features(test_src, val_idx, cfg, scaler)), vy, vc).accuracy;
  }
  out.test_probs = predict_proba(out.model, build_features(test_src, test_idx, cfg, scaler));
  const auto [ty, tc] = labels_of(test_idx);
  out.report = closed_world_report(out.test_probs, ty, tc);
  out.test_indices = test_idx;
  return out;
}

// Runs the first `folds` folds of the plan (all when folds <= 0) and pools them.
inline EvalReport run_closed_world(const Dataset& train_src, const Dataset& test_src, const SplitPlan& plan,
                                   const AttackConfig& cfg, int folds = 0) {
  const int n = folds <= 0 ? plan.fold_count : std::min(folds, plan.fold_count);
  std::vector<EvalReport> reports;
  for (int f = 0; f < n; ++f) reports.push_back(run_fold(train_src, test_src, plan, f, cfg).report);
  return merge_folds(reports);
}

inline EvalReport run_closed_world(const Dataset& d, const SplitPlan& plan, const AttackConfig& cfg, int folds = 0) {
  return run_closed_world(d, d, plan, cfg, folds);
}

// Wire-level view of every obfuscated trace, labels preserved.
inline Dataset obfuscated_dataset(const Dataset& d, const std::vector<ObfuscatedTrace>& obf) {
  if (obf.size() != d.size()) throw ValidationError("obfuscated trace count differs from dataset size");
  Dataset out;
  out.num_classes = d.num_classes;
  out.manifest = {{"source", "defense"}, {"parent", d.manifest}};
  out.traces.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    LabeledTrace lt = d.traces[i];
    lt.trace = to_wire_trace(obf[i]);
    out.traces.push_back(std::move(lt));
  }
  return out;
}

}  // namespace vcfp
