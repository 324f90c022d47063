#pragma once

// Classifier inputs: binary (direction only) and numeric (signed size)
// encodings, global min-max scaling to [-1, 1], pad/trim to a uniform
// length, direction filtering, and stratified fold plans.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "vcfp/error.hpp"
#include "vcfp/random.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

enum class Format { Binary, Numeric };
enum class DirectionKeep { Both, Incoming, Outgoing };
enum class NormalizeOrder { AfterPad, BeforePad };

inline constexpr std::string_view to_string(Format f) { return f == Format::Binary ? "binary" : "numeric"; }

inline Format format_from_string(std::string_view s) {
  if (s == "binary") return Format::Binary;
  if (s == "numeric") return Format::Numeric;
  throw ValidationError("unknown format '" + std::string(s) + "'");
}

inline constexpr std::string_view to_string(DirectionKeep k) {
  switch (k) {
    case DirectionKeep::Both: return "both";
    case DirectionKeep::Incoming: return "incoming";
    case DirectionKeep::Outgoing: return "outgoing";
  }
  return "both";
}

inline DirectionKeep direction_keep_from_string(std::string_view s) {
  if (s == "both") return DirectionKeep::Both;
  if (s == "incoming") return DirectionKeep::Incoming;
  if (s == "outgoing") return DirectionKeep::Outgoing;
  throw ValidationError("unknown direction filter '" + std::string(s) + "'");
}

inline std::vector<int> to_binary(const Trace& t) {
  std::vector<int> out;
  out.reserve(t.length());
  for (const auto& p : t.packets) out.push_back(sign(p.direction));
  return out;
}

inline std::vector<std::int64_t> to_numeric(const Trace& t) {
  std::vector<std::int64_t> out;
  out.reserve(t.length());
  for (const auto& p : t.packets) out.push_back(p.signed_size());
  return out;
}

inline Trace direction_filter(const Trace& t, DirectionKeep keep) {
  if (keep == DirectionKeep::Both) return t;
  const Direction want = keep == DirectionKeep::Incoming ? Direction::Incoming : Direction::Outgoing;
  Trace out;
  for (const auto& p : t.packets)
    if (p.direction == want) out.packets.push_back(p);
  if (out.empty()) throw ValidationError("direction filter produced an empty trace");
  return out;
}

inline std::vector<double> pad_trim(std::vector<double> v, std::size_t length) {
  if (length < 1) throw ValidationError("uniform length must be >= 1");
  v.resize(length, 0.0);
  return v;
}

struct Scaler {
  double min = -1;
  double max = 1;

  double apply(double x) const { return std::clamp(2.0 * (x - min) / (max - min) - 1.0, -1.0, 1.0); }
  friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline double apply_minmax(const Scaler& s, double x) { return s.apply(x); }

inline std::vector<double> apply_minmax(const Scaler& s, std::vector<double> v) {
  for (auto& x : v) x = s.apply(x);
  return v;
}

// Zeros are padding and never contribute to the fit.
template <typename Rows>
Scaler fit_minmax(const Rows& rows) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& row : rows)
    for (double x : row) {
      if (x == 0.0) continue;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  if (!(lo < hi)) throw ValidationError("degenerate scaler: training values are constant or absent");
  return {lo, hi};
}

struct PreprocessConfig {
  Format format = Format::Numeric;
  DirectionKeep keep = DirectionKeep::Both;
  std::size_t length = 475;
  NormalizeOrder order = NormalizeOrder::AfterPad;
};

// Direction-filtered encoding before padding or scaling.
inline std::vector<double> encode_raw(const Trace& t, const PreprocessConfig& cfg) {
  const Trace kept = direction_filter(t, cfg.keep);
  std::vector<double> out;
  out.reserve(kept.length());
  for (const auto& p : kept.packets)
    out.push_back(cfg.format == Format::Binary ? sign(p.direction) : static_cast<double>(p.signed_size()));
  return out;
}

// Binary vectors are already in [-1, 1] and use the identity scaler.
template <typename Traces>
Scaler fit_scaler(const Traces& traces, const PreprocessConfig& cfg) {
  if (cfg.format == Format::Binary) return {-1, 1};
  std::vector<std::vector<double>> raw;
  for (const Trace& t : traces) raw.push_back(encode_raw(t, cfg));
  return fit_minmax(raw);
}

inline std::vector<double> encode_row(const Trace& t, const PreprocessConfig& cfg, const Scaler& s) {
  auto raw = encode_raw(t, cfg);
  if (cfg.order == NormalizeOrder::AfterPad) return apply_minmax(s, pad_trim(std::move(raw), cfg.length));
  return pad_trim(apply_minmax(s, std::move(raw)), cfg.length);
}

// ---------------------------------------------------------------------------
// Fold plans

enum class Role : std::uint8_t { Train, Validation, Test };

struct SplitPlan {
  int fold_count = 5;
  std::vector<int> fold_of;              // test fold of each trace
  std::vector<std::vector<Role>> roles;  // roles[fold][trace]

  std::vector<std::size_t> indices(int fold, Role role) const {
    std::vector<std::size_t> out;
    const auto& r = roles.at(static_cast<std::size_t>(fold));
    for (std::size_t i = 0; i < r.size(); ++i)
      if (r[i] == role) out.push_back(i);
    return out;
  }

  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

inline constexpr double kValidationShare = 0.2;

// Stratified k-fold. Each class is shuffled once; position p goes to test
// fold p mod k. Within a fold, the non-test traces of each class are split
// 80/20 into train/validation, with fractional validation counts carried
// across classes so the fold totals land on 64/16/20.
inline SplitPlan split_folds(const std::vector<int>& labels, int num_classes, int fold_count, std::uint64_t seed) {
  if (fold_count < 2) throw ValidationError("fold_count must be >= 2");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ValidationError("label outside [0, num_classes)");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  for (int c = 0; c < num_classes; ++c) {
    const auto n = by_class[static_cast<std::size_t>(c)].size();
    if (n > 0 && n < static_cast<std::size_t>(fold_count))
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(n) + " traces, fewer than " +
                            std::to_string(fold_count) + " folds");
  }

  SplitPlan plan;
  plan.fold_count = fold_count;
  plan.fold_of.assign(labels.size(), 0);
  plan.roles.assign(static_cast<std::size_t>(fold_count), std::vector<Role>(labels.size(), Role::Train));

  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    Rng rng(derive_seed(seed, {3, static_cast<std::uint64_t>(c)}));
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t p = 0; p < idx.size(); ++p) plan.fold_of[idx[p]] = static_cast<int>(p % static_cast<std::size_t>(fold_count));
  }

  for (int f = 0; f < fold_count; ++f) {
    auto& roles = plan.roles[static_cast<std::size_t>(f)];
    double carry = 0;
    for (int c = 0; c < num_classes; ++c) {
      std::vector<std::size_t> rest;
      for (auto i : by_class[static_cast<std::size_t>(c)]) {
        if (plan.fold_of[i] == f) roles[i] = Role::Test;
        else rest.push_back(i);
      }
      if (rest.empty()) continue;
      const double before = carry;
      carry += kValidationShare * static_cast<double>(rest.size());
      const auto n_val = static_cast<std::size_t>(std::floor(carry + 1e-9) - std::floor(before + 1e-9));
      Rng rng(derive_seed(seed, {4, static_cast<std::uint64_t>(f), static_cast<std::uint64_t>(c)}));
      rng.shuffle(rest.begin(), rest.end());
      for (std::size_t k = 0; k < std::min(n_val, rest.size()); ++k) roles[rest[k]] = Role::Validation;
    }
  }
  return plan;
}

inline SplitPlan split_folds(const Dataset& d, int fold_count, std::uint64_t seed) {
  return split_folds(d.labels(), d.num_classes, fold_count, seed);
}

}  // namespace vcfp
