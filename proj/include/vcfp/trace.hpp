#pragma once

// Trace data model: packets, traces, labelled datasets and the summary
// statistics (size and interarrival histograms) consumed by the defense.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vcfp/error.hpp"

namespace vcfp {

// Timestamps are kept as integer tenths of a millisecond.
using Tick = std::int64_t;
inline constexpr double kTicksPerMs = 10.0;

inline constexpr Tick ms_to_ticks(double ms) { return static_cast<Tick>(std::llround(ms * kTicksPerMs)); }
inline constexpr double ticks_to_ms(Tick t) { return static_cast<double>(t) / kTicksPerMs; }

enum class Direction : std::int8_t { Outgoing = 1, Incoming = -1 };

inline constexpr int sign(Direction d) { return static_cast<int>(d); }

struct Packet {
  Direction direction = Direction::Outgoing;
  std::int64_t size = 1;
  Tick timestamp = 0;

  std::int64_t signed_size() const { return sign(direction) * size; }
  friend bool operator==(const Packet&, const Packet&) = default;
};

struct Trace {
  std::vector<Packet> packets;

  std::size_t length() const { return packets.size(); }
  bool empty() const { return packets.empty(); }
  friend bool operator==(const Trace&, const Trace&) = default;
};

enum class CommandCategory { Single, TimeSensitive, Multiple };

inline constexpr std::string_view to_string(CommandCategory c) {
  switch (c) {
    case CommandCategory::Single: return "single";
    case CommandCategory::TimeSensitive: return "time_sensitive";
    case CommandCategory::Multiple: return "multiple";
  }
  return "single";
}

inline CommandCategory category_from_string(std::string_view s) {
  if (s == "single") return CommandCategory::Single;
  if (s == "time_sensitive") return CommandCategory::TimeSensitive;
  if (s == "multiple") return CommandCategory::Multiple;
  throw ValidationError("unknown command category '" + std::string(s) + "'");
}

inline constexpr int kMaxVoiceId = 4;

struct LabeledTrace {
  Trace trace;
  int command_id = 0;
  CommandCategory category = CommandCategory::Single;
  int voice_id = 0;
  bool monitored = true;

  friend bool operator==(const LabeledTrace&, const LabeledTrace&) = default;
};

struct Dataset {
  std::vector<LabeledTrace> traces;
  int num_classes = 0;
  nlohmann::json manifest = nlohmann::json::object();

  std::size_t size() const { return traces.size(); }
  bool empty() const { return traces.empty(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(t.command_id);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::size_t index = 0;
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  explicit operator bool() const { return ok(); }
};

inline ValidationResult validate_trace(const Trace& t) {
  ValidationResult r;
  if (t.empty()) {
    r.violations.push_back({0, "trace is empty"});
    return r;
  }
  for (std::size_t i = 0; i < t.packets.size(); ++i) {
    const Packet& p = t.packets[i];
    const int d = static_cast<int>(p.direction);
    if (d != 1 && d != -1) r.violations.push_back({i, "direction must be +1 or -1"});
    if (p.size < 1) r.violations.push_back({i, "size must be at least 1 byte"});
    if (p.timestamp < 0) r.violations.push_back({i, "timestamp is negative"});
    if (i > 0 && p.timestamp < t.packets[i - 1].timestamp) r.violations.push_back({i, "timestamp decreases"});
  }
  return r;
}

inline ValidationResult validate_labeled(const LabeledTrace& lt, int num_classes) {
  ValidationResult r = validate_trace(lt.trace);
  if (lt.command_id < 0 || lt.command_id >= num_classes)
    r.violations.push_back({0, "command_id outside [0, num_classes)"});
  if (lt.voice_id < 0 || lt.voice_id > kMaxVoiceId) r.violations.push_back({0, "voice_id outside [0, 4]"});
  return r;
}

inline std::string describe(const ValidationResult& r) {
  std::string s;
  for (const auto& v : r.violations) {
    if (!s.empty()) s += "; ";
    s += "index " + std::to_string(v.index) + ": " + v.message;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Histograms

struct Histogram {
  std::vector<double> bin_edges;
  std::vector<double> bin_mass;

  std::size_t bins() const { return bin_mass.size(); }

  // True when no samples were observed; bin_mass is then all zero.
  bool empty() const {
    return std::all_of(bin_mass.begin(), bin_mass.end(), [](double m) { return m == 0.0; });
  }

  // Index of the bin holding x; out-of-range values fall into the end bins.
  std::size_t bin_of(double x) const {
    auto it = std::upper_bound(bin_edges.begin() + 1, bin_edges.end() - 1, x);
    return static_cast<std::size_t>(it - (bin_edges.begin() + 1));
  }

  friend bool operator==(const Histogram&, const Histogram&) = default;
};

inline std::vector<double> log_spaced_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i <= bins; ++i) edges[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(bins));
  edges.front() = lo;
  edges.back() = hi;
  return edges;
}

inline Histogram histogram_from_counts(std::vector<double> edges, std::span<const std::uint64_t> counts) {
  Histogram h{std::move(edges), std::vector<double>(counts.size(), 0.0)};
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return h;
  for (std::size_t i = 0; i < counts.size(); ++i) h.bin_mass[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return h;
}

inline Histogram histogram_from_samples(std::vector<double> edges, std::span<const double> samples) {
  Histogram probe{edges, std::vector<double>(edges.size() - 1, 0.0)};
  std::vector<std::uint64_t> counts(probe.bins(), 0);
  for (double x : samples) ++counts[probe.bin_of(x)];
  return histogram_from_counts(std::move(edges), counts);
}

// ---------------------------------------------------------------------------
// Dataset summary statistics

inline constexpr double kDefaultBurstGapThresholdMs = 50.0;
inline constexpr std::size_t kSizeBins = 32;
inline constexpr std::size_t kInterarrivalBins = 40;

inline std::vector<double> size_bin_edges() { return log_spaced_edges(1.0, 2048.0, kSizeBins); }
inline std::vector<double> interarrival_bin_edges() { return log_spaced_edges(0.1, 10000.0, kInterarrivalBins); }

struct SummaryStats {
  Histogram packet_size_hist_in;
  Histogram packet_size_hist_out;
  Histogram interarrival_hist_burst;  // ms, gaps below the threshold
  Histogram interarrival_hist_gap;    // ms, gaps at or above the threshold
  std::int64_t max_abs_size = 0;
  double burst_gap_threshold_ms = kDefaultBurstGapThresholdMs;

  const Histogram& size_hist(Direction d) const {
    return d == Direction::Incoming ? packet_size_hist_in : packet_size_hist_out;
  }

  friend bool operator==(const SummaryStats&, const SummaryStats&) = default;
};

// Interarrivals are measured between consecutive packets of the same
// direction, since the defense pads each direction independently.
inline SummaryStats dataset_stats(const Dataset& d, double burst_gap_threshold_ms = kDefaultBurstGapThresholdMs) {
  if (d.empty()) throw ValidationError("empty dataset");
  if (!(burst_gap_threshold_ms > 0)) throw ValidationError("burst/gap threshold must be positive");

  const auto size_edges = size_bin_edges();
  const auto gap_edges = interarrival_bin_edges();
  Histogram size_probe{size_edges, std::vector<double>(kSizeBins)};
  Histogram gap_probe{gap_edges, std::vector<double>(kInterarrivalBins)};

  std::vector<std::uint64_t> in(kSizeBins), out(kSizeBins), burst(kInterarrivalBins), gap(kInterarrivalBins);
  std::int64_t max_size = 0;
  const Tick threshold = ms_to_ticks(burst_gap_threshold_ms);

  for (const auto& lt : d.traces) {
    Tick last_out = -1, last_in = -1;
    for (const auto& p : lt.trace.packets) {
      max_size = std::max(max_size, p.size);
      const bool incoming = p.direction == Direction::Incoming;
      ++(incoming ? in : out)[size_probe.bin_of(static_cast<double>(p.size))];
      Tick& last = incoming ? last_in : last_out;
      if (last >= 0) {
        const Tick dt = p.timestamp - last;
        ++(dt < threshold ? burst : gap)[gap_probe.bin_of(ticks_to_ms(dt))];
      }
      last = p.timestamp;
    }
  }

  SummaryStats s;
  s.packet_size_hist_in = histogram_from_counts(size_edges, in);
  s.packet_size_hist_out = histogram_from_counts(size_edges, out);
  s.interarrival_hist_burst = histogram_from_counts(gap_edges, burst);
  s.interarrival_hist_gap = histogram_from_counts(gap_edges, gap);
  s.max_abs_size = max_size;
  s.burst_gap_threshold_ms = burst_gap_threshold_ms;
  return s;
}

}  // namespace vcfp
