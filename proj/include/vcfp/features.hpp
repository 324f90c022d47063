#pragma once

// Hand-crafted feature rows for the two classical baselines: CUMUL
// (interpolated cumulative sum of signed sizes) and CNS19 (bursts, totals,
// incoming share and a packet-size histogram).

#include <cstdint>
#include <vector>

#include "vcfp/error.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

inline constexpr int kDefaultCumulPoints = 100;
inline constexpr int kDefaultMaxBursts = 60;
inline constexpr int kDefaultSizeBins = 32;

// Layout: [bytes_in, bytes_out, count_in, count_out, c(x_0) .. c(x_{n-1})]
// where c is the cumulative signed-size curve sampled at n_points
// equidistant positions over packet indices [0, length-1].
inline std::vector<double> cumul_features(const Trace& t, int n_points = kDefaultCumulPoints) {
  if (n_points < 2) throw ValidationError("cumul n_points must be >= 2");
  if (t.empty()) throw ValidationError("cumul features of an empty trace");

  double bytes_in = 0, bytes_out = 0, count_in = 0, count_out = 0;
  std::vector<double> knots;
  knots.reserve(t.length());
  double acc = 0;
  for (const auto& p : t.packets) {
    if (p.direction == Direction::Incoming) {
      bytes_in += static_cast<double>(p.size);
      ++count_in;
    } else {
      bytes_out += static_cast<double>(p.size);
      ++count_out;
    }
    acc += static_cast<double>(p.signed_size());
    knots.push_back(acc);
  }

  std::vector<double> row{bytes_in, bytes_out, count_in, count_out};
  row.reserve(4 + static_cast<std::size_t>(n_points));
  const double span = static_cast<double>(knots.size() - 1);
  for (int j = 0; j < n_points; ++j) {
    const double x = span * j / (n_points - 1);
    const auto lo = static_cast<std::size_t>(x);
    if (lo + 1 >= knots.size()) {
      row.push_back(knots.back());
      continue;
    }
    const double frac = x - static_cast<double>(lo);
    row.push_back(knots[lo] + frac * (knots[lo + 1] - knots[lo]));
  }
  return row;
}

// Maximal runs of same-direction packets, as signed byte totals.
inline std::vector<std::int64_t> bursts(const Trace& t) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < t.length(); ++i) {
    const auto s = t.packets[i].signed_size();
    if (i > 0 && t.packets[i].direction == t.packets[i - 1].direction) out.back() += s;
    else out.push_back(s);
  }
  return out;
}

// Layout: max_bursts signed burst sizes (zero padded) ++
// [total_bytes, num_bursts, pct_incoming, num_packets] ++ size_bins packet
// size fractions over log-spaced bins on [1, 2048].
inline std::vector<double> cns19_features(const Trace& t, int max_bursts = kDefaultMaxBursts,
                                          int size_bins = kDefaultSizeBins) {
  if (max_bursts < 1 || size_bins < 1) throw ValidationError("cns19 max_bursts and size_bins must be >= 1");
  if (t.empty()) throw ValidationError("cns19 features of an empty trace");

  const auto b = bursts(t);
  std::vector<double> row(static_cast<std::size_t>(max_bursts), 0.0);
  for (std::size_t i = 0; i < b.size() && i < row.size(); ++i) row[i] = static_cast<double>(b[i]);

  double total = 0, incoming = 0;
  const Histogram probe{log_spaced_edges(1.0, 2048.0, static_cast<std::size_t>(size_bins)),
                        std::vector<double>(static_cast<std::size_t>(size_bins))};
  std::vector<double> hist(static_cast<std::size_t>(size_bins), 0.0);
  for (const auto& p : t.packets) {
    total += static_cast<double>(p.size);
    if (p.direction == Direction::Incoming) ++incoming;
    hist[probe.bin_of(static_cast<double>(p.size))] += 1.0;
  }
  const auto n = static_cast<double>(t.length());
  row.insert(row.end(), {total, static_cast<double>(b.size()), incoming / n, n});
  for (double& h : hist) h /= n;
  row.insert(row.end(), hist.begin(), hist.end());
  return row;
}

}  // namespace vcfp
