#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vcfp/error.hpp"

namespace vcfp {

// Dense row-major feature rows with integer class labels.
struct FeatureMatrix {
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<int> labels;
  int num_classes = 0;
  std::string feature_spec;

  std::size_t rows() const { return cols == 0 ? 0 : data.size() / cols; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void add_row(std::span<const double> values, int label) {
    if (cols == 0) cols = values.size();
    if (values.size() != cols) throw ValidationError("feature row width " + std::to_string(values.size()) +
                                                     " does not match matrix width " + std::to_string(cols));
    data.insert(data.end(), values.begin(), values.end());
    labels.push_back(label);
  }
};

// Per-row class probabilities.
struct ProbMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  ProbMatrix() = default;
  ProbMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline void softmax_inplace(std::span<double> v) {
  if (v.empty()) return;
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0;
  for (auto& x : v) sum += (x = std::exp(x - m));
  for (auto& x : v) x /= sum;
}

inline std::vector<int> predictions(const ProbMatrix& p) {
  std::vector<int> out(p.rows);
  for (std::size_t i = 0; i < p.rows; ++i) out[i] = static_cast<int>(argmax(p.row(i)));
  return out;
}

}  // namespace vcfp
