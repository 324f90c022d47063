#pragma once

// Classical classifiers behind one train / predict_proba contract:
//   AdaBoost  - one-vs-rest discrete boosting over depth-1 decision stumps
//   LinearOVR - one-vs-rest linear hinge classifiers on standardized features
//   OneNN     - nearest neighbour (squared Euclidean) over stored rows
// All training is deterministic for a given seed.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vcfp/error.hpp"
#include "vcfp/matrix.hpp"
#include "vcfp/random.hpp"

namespace vcfp {

enum class ModelKind { AdaBoost, LinearOVR, OneNN };

inline constexpr std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::AdaBoost: return "adaboost";
    case ModelKind::LinearOVR: return "linear_ovr";
    case ModelKind::OneNN: return "one_nn";
  }
  return "one_nn";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "adaboost") return ModelKind::AdaBoost;
  if (s == "linear_ovr" || s == "linear") return ModelKind::LinearOVR;
  if (s == "one_nn" || s == "onenn" || s == "1nn") return ModelKind::OneNN;
  throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

struct TrainOptions {
  int rounds = 200;  // AdaBoost
  int epochs = 200;  // LinearOVR
  double learning_rate = 0.05;
  double lambda = 1e-5;
  std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = {{"rounds", o.rounds}, {"epochs", o.epochs}, {"learning_rate", o.learning_rate},
       {"lambda", o.lambda}, {"seed", o.seed}};
}

inline void from_json(const nlohmann::json& j, TrainOptions& o) {
  TrainOptions d;
  o.rounds = j.value("rounds", d.rounds);
  o.epochs = j.value("epochs", d.epochs);
  o.learning_rate = j.value("learning_rate", d.learning_rate);
  o.lambda = j.value("lambda", d.lambda);
  o.seed = j.value("seed", d.seed);
}

// Votes +1 or -1 for one class depending on the side of the threshold.
struct Stump {
  int cls = 0;
  std::size_t feature = 0;
  double threshold = std::numeric_limits<double>::infinity();  // x <= threshold goes left
  int left = 1;
  int right = -1;

  int predict(std::span<const double> x) const { return x[feature] <= threshold ? left : right; }
};

struct AdaBoostParams {
  std::vector<Stump> stumps;        // all classes, in training order
  std::vector<double> alphas;
  std::vector<double> train_error;  // ensemble training error after each round
};

struct LinearOvrParams {
  std::vector<double> mean, scale;  // standardization
  std::vector<double> weights;      // num_classes x dim
  std::vector<double> bias;
};

struct OneNnParams {
  std::vector<double> rows;
  std::vector<int> labels;
};

struct ClassifierModel {
  ModelKind kind = ModelKind::OneNN;
  int num_classes = 0;
  std::size_t dim = 0;
  TrainOptions hyper;
  std::variant<AdaBoostParams, LinearOvrParams, OneNnParams> params;
};

namespace detail {

inline void check_trainable(const FeatureMatrix& fm) {
  if (fm.rows() == 0 || fm.cols == 0) throw ValidationError("empty feature matrix");
  if (fm.num_classes < 2) throw ValidationError("degenerate training set: fewer than two classes");
  std::vector<bool> seen(static_cast<std::size_t>(fm.num_classes), false);
  for (int y : fm.labels) {
    if (y < 0 || y >= fm.num_classes) throw ValidationError("label outside [0, num_classes)");
    seen[static_cast<std::size_t>(y)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) throw ValidationError("degenerate training set: single class");
  for (double x : fm.data)
    if (!std::isfinite(x)) throw ValidationError("non-finite feature value");
}

// Per-class vote sum divided by that class's total stump weight, in [-1, 1].
inline std::vector<double> adaboost_scores(const AdaBoostParams& p, int num_classes, std::span<const double> x) {
  const auto K = static_cast<std::size_t>(num_classes);
  std::vector<double> s(K, 0.0), mass(K, 0.0);
  for (std::size_t t = 0; t < p.stumps.size(); ++t) {
    const auto c = static_cast<std::size_t>(p.stumps[t].cls);
    s[c] += p.alphas[t] * p.stumps[t].predict(x);
    mass[c] += p.alphas[t];
  }
  for (std::size_t c = 0; c < K; ++c)
    if (mass[c] > 0) s[c] /= mass[c];
  return s;
}

// One binary booster per class (class against the rest), advanced in
// lockstep so that round r adds at most one stump per class. A class stops
// when its best stump reaches weighted error 0.5, or after a perfect stump.
inline AdaBoostParams train_adaboost(const FeatureMatrix& fm, const TrainOptions& opt) {
  const std::size_t n = fm.rows(), d = fm.cols;
  const auto K = static_cast<std::size_t>(fm.num_classes);
  const double min_error = 1e-12;

  std::vector<std::vector<std::size_t>> order(d, std::vector<std::size_t>(n));
  for (std::size_t f = 0; f < d; ++f) {
    std::iota(order[f].begin(), order[f].end(), std::size_t{0});
    std::stable_sort(order[f].begin(), order[f].end(), [&](auto a, auto b) { return fm.at(a, f) < fm.at(b, f); });
  }

  std::vector<std::vector<double>> w(K, std::vector<double>(n, 1.0 / static_cast<double>(n)));
  std::vector<bool> active(K, true);
  std::vector<double> scores(n * K, 0.0), mass(K, 0.0);
  AdaBoostParams p;

  for (int round = 0; round < opt.rounds; ++round) {
    bool added = false;
    for (std::size_t c = 0; c < K; ++c) {
      if (!active[c]) continue;
      const auto& wc = w[c];
      auto y = [&](std::size_t i) { return static_cast<std::size_t>(fm.labels[i]) == c ? 1 : -1; };
      double pos = 0, neg = 0;
      for (std::size_t i = 0; i < n; ++i) (y(i) > 0 ? pos : neg) += wc[i];

      // Constant vote first; a split must beat it strictly.
      Stump best{static_cast<int>(c), 0, std::numeric_limits<double>::infinity(), pos >= neg ? 1 : -1, pos >= neg ? 1 : -1};
      double best_err = std::min(pos, neg);
      for (std::size_t f = 0; f < d; ++f) {
        const auto& ord = order[f];
        double lp = 0, ln = 0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
          (y(ord[k]) > 0 ? lp : ln) += wc[ord[k]];
          if (!(fm.at(ord[k], f) < fm.at(ord[k + 1], f))) continue;
          const double pos_left = ln + (pos - lp);  // left votes +1
          const double neg_left = lp + (neg - ln);  // left votes -1
          const double err = std::min(pos_left, neg_left);
          if (err < best_err * (1 - 1e-12)) {
            best_err = err;
            const int side = pos_left <= neg_left ? 1 : -1;
            best = Stump{static_cast<int>(c), f, 0.5 * (fm.at(ord[k], f) + fm.at(ord[k + 1], f)), side, -side};
          }
        }
      }

      const double err = std::max(0.0, best_err / (pos + neg));
      if (err >= 0.5) {
        active[c] = false;
        continue;
      }
      const bool perfect = err <= min_error;
      const double e = std::max(err, min_error);
      const double alpha = std::log((1.0 - e) / e);
      p.stumps.push_back(best);
      p.alphas.push_back(alpha);
      mass[c] += alpha;
      added = true;

      double norm = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const int h = best.predict(fm.row(i));
        scores[i * K + c] += alpha * h;
        if (h != y(i)) w[c][i] *= std::exp(alpha);
        norm += w[c][i];
      }
      for (auto& wi : w[c]) wi /= norm;
      if (perfect) active[c] = false;
    }
    if (!added) break;

    std::size_t wrong = 0;
    std::vector<double> f(K);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < K; ++c) f[c] = mass[c] > 0 ? scores[i * K + c] / mass[c] : 0.0;
      if (static_cast<int>(argmax(f)) != fm.labels[i]) ++wrong;
    }
    p.train_error.push_back(static_cast<double>(wrong) / static_cast<double>(n));
  }
  return p;
}

inline LinearOvrParams train_linear(const FeatureMatrix& fm, const TrainOptions& opt) {
  const std::size_t n = fm.rows(), d = fm.cols;
  const auto K = static_cast<std::size_t>(fm.num_classes);
  LinearOvrParams p;
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += fm.at(i, j);
  for (auto& m : p.mean) m /= static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    double v = 0;
    for (std::size_t i = 0; i < n; ++i) v += (fm.at(i, j) - p.mean[j]) * (fm.at(i, j) - p.mean[j]);
    const double sd = std::sqrt(v / static_cast<double>(n));
    p.scale[j] = sd > 1e-12 ? sd : 1.0;
  }

  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (fm.at(i, j) - p.mean[j]) / p.scale[j];

  p.weights.assign(K * d, 0.0);
  p.bias.assign(K, 0.0);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Returns the running average of the iterates from the second epoch on,
  // which settles far faster than the last iterate on correlated features.
  std::vector<double> avg_w(K * d, 0.0), avg_b(K, 0.0);
  double averaged = 0;
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rng(derive_seed(opt.seed, {5, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(idx.begin(), idx.end());
    for (auto i : idx) {
      const double eta = opt.learning_rate / (1.0 + opt.learning_rate * opt.lambda * static_cast<double>(t++));
      const double* xi = z.data() + i * d;
      for (std::size_t c = 0; c < K; ++c) {
        double* wc = p.weights.data() + c * d;
        const double y = fm.labels[i] == static_cast<int>(c) ? 1.0 : -1.0;
        double margin = p.bias[c];
        for (std::size_t j = 0; j < d; ++j) margin += wc[j] * xi[j];
        const double shrink = 1.0 - eta * opt.lambda;
        for (std::size_t j = 0; j < d; ++j) wc[j] *= shrink;
        if (y * margin < 1.0) {
          for (std::size_t j = 0; j < d; ++j) wc[j] += eta * y * xi[j];
          p.bias[c] += eta * y;
        }
      }
      if (epoch > 0 || opt.epochs == 1) {
        averaged += 1;
        const double mix = 1.0 / averaged;
        for (std::size_t k = 0; k < K * d; ++k) avg_w[k] += mix * (p.weights[k] - avg_w[k]);
        for (std::size_t c = 0; c < K; ++c) avg_b[c] += mix * (p.bias[c] - avg_b[c]);
      }
    }
  }
  p.weights = std::move(avg_w);
  p.bias = std::move(avg_b);
  return p;
}

}  // namespace detail

inline ClassifierModel train(ModelKind kind, const FeatureMatrix& fm, const TrainOptions& opt = {}) {
  detail::check_trainable(fm);
  ClassifierModel m;
  m.kind = kind;
  m.num_classes = fm.num_classes;
  m.dim = fm.cols;
  m.hyper = opt;
  switch (kind) {
    case ModelKind::AdaBoost:
      if (opt.rounds < 1) throw ValidationError("adaboost rounds must be >= 1");
      m.params = detail::train_adaboost(fm, opt);
      break;
    case ModelKind::LinearOVR:
      if (opt.epochs < 1 || !(opt.learning_rate > 0) || !(opt.lambda >= 0))
        throw ValidationError("linear_ovr needs epochs >= 1, learning_rate > 0, lambda >= 0");
      m.params = detail::train_linear(fm, opt);
      break;
    case ModelKind::OneNN: m.params = OneNnParams{fm.data, fm.labels}; break;
  }
  return m;
}

inline void predict_row(const ClassifierModel& m, std::span<const double> x, std::span<double> out) {
  const auto K = static_cast<std::size_t>(m.num_classes);
  std::fill(out.begin(), out.end(), 0.0);
  if (const auto* ada = std::get_if<AdaBoostParams>(&m.params)) {
    if (ada->stumps.empty()) {
      std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(K));
      return;
    }
    const auto s = detail::adaboost_scores(*ada, m.num_classes, x);
    for (std::size_t c = 0; c < K; ++c) out[c] = s[c];
    softmax_inplace(out);
  } else if (const auto* lin = std::get_if<LinearOvrParams>(&m.params)) {
    for (std::size_t c = 0; c < K; ++c) {
      double margin = lin->bias[c];
      for (std::size_t j = 0; j < m.dim; ++j) margin += lin->weights[c * m.dim + j] * (x[j] - lin->mean[j]) / lin->scale[j];
      out[c] = margin;
    }
    softmax_inplace(out);
  } else {
    const auto& nn = std::get<OneNnParams>(m.params);
    const std::size_t n = nn.labels.size();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double* r = nn.rows.data() + i * m.dim;
      double dist = 0;
      for (std::size_t j = 0; j < m.dim && dist < best_d; ++j) dist += (r[j] - x[j]) * (r[j] - x[j]);
      if (dist < best_d) {
        best_d = dist;
        best = i;
      }
    }
    out[static_cast<std::size_t>(nn.labels[best])] = 1.0;
  }
}

inline ProbMatrix predict_proba(const ClassifierModel& m, const FeatureMatrix& rows) {
  if (rows.rows() > 0 && rows.cols != m.dim)
    throw ValidationError("feature dimension " + std::to_string(rows.cols) + " does not match model dimension " +
                          std::to_string(m.dim));
  ProbMatrix out(rows.rows(), static_cast<std::size_t>(m.num_classes));
  for (std::size_t i = 0; i < rows.rows(); ++i) predict_row(m, rows.row(i), out.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// JSON model documents. Parameter arrays are stored as shortest round-trip
// decimal strings so a reload reproduces every double bit for bit.

inline constexpr int kModelFormatVersion = 1;

inline std::string decimal_string(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline double parse_decimal(const std::string& s) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ValidationError("malformed decimal '" + s + "'");
  return x;
}

namespace detail {

template <typename T>
nlohmann::json decimals(const std::vector<T>& v) {
  auto out = nlohmann::json::array();
  for (auto x : v) out.push_back(decimal_string(static_cast<double>(x)));
  return out;
}

inline std::vector<double> parse_decimals(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& s : j) out.push_back(parse_decimal(s.get<std::string>()));
  return out;
}

inline std::vector<int> parse_ints(const nlohmann::json& j) {
  std::vector<int> out;
  for (double x : parse_decimals(j)) out.push_back(static_cast<int>(x));
  return out;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ClassifierModel& m) {
  nlohmann::json params = nlohmann::json::object();
  if (const auto* ada = std::get_if<AdaBoostParams>(&m.params)) {
    std::vector<double> cls, feature, threshold, left, right;
    for (const auto& s : ada->stumps) {
      cls.push_back(s.cls);
      feature.push_back(static_cast<double>(s.feature));
      threshold.push_back(s.threshold);
      left.push_back(s.left);
      right.push_back(s.right);
    }
    params = {{"stump_class", detail::decimals(cls)},         {"stump_feature", detail::decimals(feature)}, {"stump_threshold", detail::decimals(threshold)},
              {"stump_left", detail::decimals(left)},       {"stump_right", detail::decimals(right)},
              {"alpha", detail::decimals(ada->alphas)},      {"train_error", detail::decimals(ada->train_error)}};
  } else if (const auto* lin = std::get_if<LinearOvrParams>(&m.params)) {
    params = {{"mean", detail::decimals(lin->mean)}, {"scale", detail::decimals(lin->scale)},
              {"weights", detail::decimals(lin->weights)}, {"bias", detail::decimals(lin->bias)}};
  } else {
    const auto& nn = std::get<OneNnParams>(m.params);
    params = {{"rows", detail::decimals(nn.rows)}, {"labels", detail::decimals(nn.labels)}};
  }
  return {{"format_version", kModelFormatVersion},
          {"kind", std::string(to_string(m.kind))},
          {"num_classes", m.num_classes},
          {"dim", m.dim},
          {"hyperparameters", m.hyper},
          {"parameters", params}};
}

inline ClassifierModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) throw ValidationError("unsupported model format version");
    ClassifierModel m;
    m.kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.num_classes = j.at("num_classes").get<int>();
    m.dim = j.at("dim").get<std::size_t>();
    m.hyper = j.at("hyperparameters").get<TrainOptions>();
    const auto& p = j.at("parameters");
    switch (m.kind) {
      case ModelKind::AdaBoost: {
        AdaBoostParams a;
        const auto cl = detail::parse_ints(p.at("stump_class"));
        const auto f = detail::parse_decimals(p.at("stump_feature"));
        const auto th = detail::parse_decimals(p.at("stump_threshold"));
        const auto l = detail::parse_ints(p.at("stump_left"));
        const auto r = detail::parse_ints(p.at("stump_right"));
        a.alphas = detail::parse_decimals(p.at("alpha"));
        a.train_error = detail::parse_decimals(p.at("train_error"));
        if (cl.size() != f.size() || th.size() != f.size() || l.size() != f.size() || r.size() != f.size() ||
            a.alphas.size() != f.size())
          throw ValidationError("adaboost parameter arrays differ in length");
        for (std::size_t i = 0; i < f.size(); ++i) {
          if (cl[i] < 0 || cl[i] >= m.num_classes || !(f[i] >= 0 && f[i] < static_cast<double>(m.dim)))
            throw ValidationError("adaboost stump " + std::to_string(i) + " refers to a missing class or feature");
          a.stumps.push_back({cl[i], static_cast<std::size_t>(f[i]), th[i], l[i], r[i]});
        }
        m.params = std::move(a);
        break;
      }
      case ModelKind::LinearOVR:
        m.params = LinearOvrParams{detail::parse_decimals(p.at("mean")), detail::parse_decimals(p.at("scale")),
                                   detail::parse_decimals(p.at("weights")), detail::parse_decimals(p.at("bias"))};
        break;
      case ModelKind::OneNN:
        m.params = OneNnParams{detail::parse_decimals(p.at("rows")), detail::parse_ints(p.at("labels"))};
        break;
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace vcfp
