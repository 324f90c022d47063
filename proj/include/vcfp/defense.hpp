#pragma once

// Packet-level traffic obfuscation simulator.
//
// Each direction of a trace is processed independently by an event-driven
// pass that combines
//   * adaptive padding: dummy packets scheduled from interarrival histograms
//     (burst histogram right after a real packet, gap histogram after a
//     dummy); a real packet that arrives first cancels the pending dummy,
//   * dummy sizes drawn from the real packet-size histogram,
//   * per-packet size noise from a Laplace (d*-privacy) mechanism, with a
//     FIFO byte buffer absorbing the bytes displaced by negative noise,
//   * length extension: after the last real packet (and once the buffer is
//     drained) dummies continue until the packet count is the least power of
//     two at or above the pre-extension count.
// Real packets always leave at their original timestamp.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vcfp/error.hpp"
#include "vcfp/random.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

enum class NoiseMechanism { LaplacePerPacket, RecursiveReference };

inline constexpr std::string_view to_string(NoiseMechanism m) {
  return m == NoiseMechanism::LaplacePerPacket ? "laplace" : "recursive";
}

inline NoiseMechanism noise_mechanism_from_string(std::string_view s) {
  if (s == "laplace") return NoiseMechanism::LaplacePerPacket;
  if (s == "recursive") return NoiseMechanism::RecursiveReference;
  throw ValidationError("unknown noise mechanism '" + std::string(s) + "'");
}

struct ObfuscationParams {
  double epsilon = 0.05;
  NoiseMechanism noise_mechanism = NoiseMechanism::LaplacePerPacket;
  double sensitivity = 500;  // bytes
  std::optional<SummaryStats> stats;
  std::int64_t min_wire_size = 60;
  std::int64_t max_wire_size = 1514;
  std::uint64_t seed = 0;
  bool adaptive_padding = true;
  std::uint64_t reference_horizon = 1024;  // RecursiveReference only

  double laplace_scale() const { return sensitivity / epsilon; }
};

inline void validate(const ObfuscationParams& p) {
  if (!(p.epsilon > 0)) throw ValidationError("epsilon must be positive");
  if (!(p.sensitivity > 0)) throw ValidationError("sensitivity must be positive");
  if (p.min_wire_size < 1) throw ValidationError("min_wire_size must be >= 1");
  if (p.min_wire_size > p.max_wire_size) throw ValidationError("min_wire_size exceeds max_wire_size");
  if (p.reference_horizon < 2) throw ValidationError("reference_horizon must be >= 2");
}

// Least power of two >= m.
inline std::uint64_t target_length(std::uint64_t m) {
  if (m < 1) throw ValidationError("target_length needs m >= 1");
  std::uint64_t p = 1;
  while (p < m) p <<= 1;
  return p;
}

// Inverse-CDF draw; linear interpolation inside the selected bin.
inline double sample_histogram(const Histogram& h, double u) {
  if (h.bins() == 0 || h.empty()) throw ValidationError("cannot sample an empty histogram");
  double cum = 0;
  std::size_t last_nonzero = 0;
  for (std::size_t i = 0; i < h.bins(); ++i) {
    const double m = h.bin_mass[i];
    if (m <= 0) continue;
    last_nonzero = i;
    if (u <= cum + m) {
      const double frac = std::clamp((u - cum) / m, 0.0, 1.0);
      return h.bin_edges[i] + frac * (h.bin_edges[i + 1] - h.bin_edges[i]);
    }
    cum += m;
  }
  return h.bin_edges[last_nonzero + 1];
}

// Laplace(0, b) at quantile u in (0, 1).
inline double laplace_inverse_cdf(double b, double u) {
  const double c = u - 0.5;
  const double sgn = c > 0 ? 1.0 : (c < 0 ? -1.0 : 0.0);
  return -b * sgn * std::log(1.0 - 2.0 * std::abs(c));
}

// Signed noise in bytes for the step_index-th emission of a direction.
inline std::int64_t dstar_noise(const ObfuscationParams& p, std::uint64_t step_index, Rng& rng) {
  const double b = p.laplace_scale();
  if (p.noise_mechanism == NoiseMechanism::LaplacePerPacket) return std::llround(laplace_inverse_cdf(b, rng.uniform()));
  // Binary-tree referencing: step t sums one draw per tree level it touches.
  const auto levels = static_cast<int>(std::ceil(std::log2(static_cast<double>(step_index) + 2.0)));
  const double level_scale = b * std::ceil(std::log2(static_cast<double>(p.reference_horizon)));
  double sum = 0;
  for (int l = 0; l < levels; ++l) sum += laplace_inverse_cdf(level_scale, rng.uniform());
  return std::llround(sum);
}

struct PayloadChunk {
  std::size_t origin = 0;  // index of the packet in the original trace
  std::int64_t bytes = 0;

  friend bool operator==(const PayloadChunk&, const PayloadChunk&) = default;
};

struct WirePacket {
  Direction direction = Direction::Outgoing;
  std::int64_t wire_size = 0;
  Tick send_time = 0;
  std::vector<PayloadChunk> real_payload;
  std::int64_t pad_bytes = 0;
  bool is_dummy = false;

  std::int64_t real_bytes() const {
    std::int64_t s = 0;
    for (const auto& c : real_payload) s += c.bytes;
    return s;
  }

  friend bool operator==(const WirePacket&, const WirePacket&) = default;
};

struct DirectionWire {
  Direction direction = Direction::Outgoing;
  std::vector<WirePacket> packets;
  std::size_t pre_extension_count = 0;  // packets emitted before length extension
  std::size_t final_count = 0;

  friend bool operator==(const DirectionWire&, const DirectionWire&) = default;
};

struct ObfuscatedTrace {
  Trace original;
  DirectionWire outgoing{Direction::Outgoing, {}, 0, 0};
  DirectionWire incoming{Direction::Incoming, {}, 0, 0};

  const DirectionWire& wire(Direction d) const { return d == Direction::Incoming ? incoming : outgoing; }
  friend bool operator==(const ObfuscatedTrace&, const ObfuscatedTrace&) = default;
};

// Default noise source: dstar_noise over a dedicated rng stream.
class DStarNoise {
 public:
  DStarNoise(const ObfuscationParams& p, std::uint64_t seed) : params_(&p), rng_(seed) {}
  std::int64_t operator()(std::uint64_t step) { return dstar_noise(*params_, step, rng_); }

 private:
  const ObfuscationParams* params_;
  Rng rng_;
};

namespace detail {

class DirectionObfuscator {
 public:
  DirectionObfuscator(Direction dir, const ObfuscationParams& p, std::uint64_t seed)
      : p_(p), timing_(derive_seed(seed, {1})), sizes_(derive_seed(seed, {2})) {
    out_.direction = dir;
  }

  template <typename Noise>
  DirectionWire run(const Trace& t, Noise& noise) {
    std::vector<std::size_t> reals;
    for (std::size_t i = 0; i < t.length(); ++i)
      if (t.packets[i].direction == out_.direction) reals.push_back(i);
    if (reals.empty()) return out_;

    Tick next_dummy = 0;
    for (std::size_t k = 0; k < reals.size(); ++k) {
      const Packet& pkt = t.packets[reals[k]];
      if (p_.adaptive_padding && k > 0) {
        while (next_dummy < pkt.timestamp) {
          emit(next_dummy, noise, std::nullopt, 0);
          next_dummy = out_.packets.back().send_time + sample_gap(false);
        }
      }
      emit(pkt.timestamp, noise, reals[k], pkt.size);
      if (p_.adaptive_padding) next_dummy = pkt.timestamp + sample_gap(true);
    }

    // Drain the buffer, then extend to the next power of two.
    auto tail_dummy = [&] {
      const Tick when = p_.adaptive_padding ? next_dummy : out_.packets.back().send_time;
      emit(when, noise, std::nullopt, 0);
      if (p_.adaptive_padding) next_dummy = when + sample_gap(false);
    };
    while (!buffer_.empty()) tail_dummy();
    out_.pre_extension_count = out_.packets.size();
    const auto target = target_length(out_.pre_extension_count);
    while (out_.packets.size() < target) tail_dummy();
    out_.final_count = out_.packets.size();
    return out_;
  }

 private:
  // Gap in ticks after a real packet (burst histogram) or a dummy (gap
  // histogram); falls back to the other histogram when one is empty.
  Tick sample_gap(bool after_real) {
    const SummaryStats& s = require_stats();
    const Histogram* h = after_real ? &s.interarrival_hist_burst : &s.interarrival_hist_gap;
    if (h->empty()) h = after_real ? &s.interarrival_hist_gap : &s.interarrival_hist_burst;
    if (h->empty()) throw ValidationError("interarrival histograms are empty; adaptive padding impossible");
    return std::max<Tick>(1, ms_to_ticks(sample_histogram(*h, timing_.uniform())));
  }

  std::int64_t sample_dummy_size() {
    const Histogram& h = require_stats().size_hist(out_.direction);
    if (h.empty())
      throw ValidationError(std::string("packet-size histogram is empty for the ") +
                            (out_.direction == Direction::Incoming ? "incoming" : "outgoing") + " direction");
    return std::max<std::int64_t>(1, std::llround(sample_histogram(h, sizes_.uniform())));
  }

  const SummaryStats& require_stats() const {
    if (!p_.stats) throw ValidationError("dummy packets need summary statistics, none were supplied");
    return *p_.stats;
  }

  template <typename Noise>
  void emit(Tick when, Noise& noise, std::optional<std::size_t> origin, std::int64_t own_bytes) {
    const std::int64_t scheduled = origin ? own_bytes : sample_dummy_size();
    const std::int64_t sigma = noise(static_cast<std::uint64_t>(out_.packets.size()));
    WirePacket w;
    w.direction = out_.direction;
    w.send_time = when;
    w.is_dummy = !origin;
    w.wire_size = std::clamp(scheduled + std::clamp<std::int64_t>(sigma, -(INT64_MAX / 4), INT64_MAX / 4),
                             p_.min_wire_size, p_.max_wire_size);

    std::int64_t room = w.wire_size;
    while (room > 0 && !buffer_.empty()) {
      PayloadChunk& front = buffer_.front();
      const std::int64_t take = std::min(room, front.bytes);
      append(w, front.origin, take);
      room -= take;
      front.bytes -= take;
      if (front.bytes == 0) buffer_.pop_front();
    }
    if (origin) {
      const std::int64_t take = std::min(room, own_bytes);
      if (take > 0) append(w, *origin, take);
      room -= take;
      if (own_bytes > take) buffer_.push_back({*origin, own_bytes - take});
    }
    w.pad_bytes = room;
    out_.packets.push_back(std::move(w));
  }

  static void append(WirePacket& w, std::size_t origin, std::int64_t bytes) {
    if (!w.real_payload.empty() && w.real_payload.back().origin == origin) w.real_payload.back().bytes += bytes;
    else w.real_payload.push_back({origin, bytes});
  }

  const ObfuscationParams& p_;
  Rng timing_;
  Rng sizes_;
  std::deque<PayloadChunk> buffer_;
  DirectionWire out_;
};

}  // namespace detail

// make_noise(Direction) must return a callable std::int64_t(std::uint64_t step).
template <typename NoiseFactory>
ObfuscatedTrace obfuscate_trace_with(const Trace& t, const ObfuscationParams& params, NoiseFactory&& make_noise) {
  validate(params);
  const auto v = validate_trace(t);
  if (!v.ok()) throw ValidationError("invalid trace: " + describe(v));
  ObfuscatedTrace o;
  o.original = t;
  for (Direction d : {Direction::Outgoing, Direction::Incoming}) {
    const auto dir_seed = derive_seed(params.seed, {static_cast<std::uint64_t>(d == Direction::Incoming)});
    auto noise = make_noise(d);
    detail::DirectionObfuscator ob(d, params, dir_seed);
    (d == Direction::Incoming ? o.incoming : o.outgoing) = ob.run(t, noise);
  }
  return o;
}

inline ObfuscatedTrace obfuscate_trace(const Trace& t, const ObfuscationParams& params) {
  return obfuscate_trace_with(t, params, [&](Direction d) {
    return DStarNoise(params, derive_seed(params.seed, {static_cast<std::uint64_t>(d == Direction::Incoming), 3}));
  });
}

// Per-trace seeds are derived from params.seed and the trace index.
inline std::vector<ObfuscatedTrace> obfuscate_dataset(const Dataset& d, const ObfuscationParams& params) {
  std::vector<ObfuscatedTrace> out;
  out.reserve(d.size());
  ObfuscationParams p = params;
  for (std::size_t i = 0; i < d.size(); ++i) {
    p.seed = derive_seed(params.seed, {0x6f6266ULL, i});
    out.push_back(obfuscate_trace(d.traces[i].trace, p));
  }
  return out;
}

// What an eavesdropper sees: both directions merged by send time (outgoing
// first on equal timestamps), carrying wire sizes.
inline Trace to_wire_trace(const ObfuscatedTrace& o) {
  Trace t;
  const auto& a = o.outgoing.packets;
  const auto& b = o.incoming.packets;
  t.packets.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    const bool take_a = j >= b.size() || (i < a.size() && a[i].send_time <= b[j].send_time);
    const WirePacket& w = take_a ? a[i++] : b[j++];
    t.packets.push_back({w.direction, w.wire_size, w.send_time});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Cost model

inline constexpr double kBytesPerKB = 1000.0;

struct DefenseMetrics {
  double latency_per_packet = 0;     // ms, mean over real packets
  double latency_per_trace = 0;      // ms
  double latency_per_trace_pct = 0;  // % of original trace duration
  double bandwidth_overhead_bytes = 0;  // KB
  double bandwidth_overhead_pct = 0;    // % of real bytes
  std::size_t real_packets = 0;
  std::int64_t real_bytes = 0;
  std::int64_t wire_bytes = 0;
};

inline DefenseMetrics defense_metrics(const Trace& t, const ObfuscatedTrace& o) {
  if (!(o.original == t)) throw ValidationError("obfuscated trace was not produced from this trace");
  if (t.empty()) throw ValidationError("defense metrics of an empty trace");

  std::vector<Tick> last_byte(t.length(), -1);
  std::int64_t wire = 0;
  for (const auto* dw : {&o.outgoing, &o.incoming})
    for (const auto& w : dw->packets) {
      wire += w.wire_size;
      for (const auto& c : w.real_payload) last_byte.at(c.origin) = std::max(last_byte[c.origin], w.send_time);
    }

  DefenseMetrics m;
  m.real_packets = t.length();
  Tick sum_latency = 0, final_byte = 0;
  for (std::size_t i = 0; i < t.length(); ++i) {
    if (last_byte[i] < 0) throw ValidationError("real packet " + std::to_string(i) + " was never delivered");
    sum_latency += last_byte[i] - t.packets[i].timestamp;
    final_byte = std::max(final_byte, last_byte[i]);
    m.real_bytes += t.packets[i].size;
  }
  m.wire_bytes = wire;
  m.latency_per_packet = ticks_to_ms(sum_latency) / static_cast<double>(t.length());
  const Tick last = t.packets.back().timestamp;
  const Tick duration = last - t.packets.front().timestamp;
  m.latency_per_trace = ticks_to_ms(final_byte - last);
  m.latency_per_trace_pct = m.latency_per_trace == 0 ? 0 : 100.0 * (final_byte - last) / static_cast<double>(std::max<Tick>(duration, 1));
  m.bandwidth_overhead_bytes = static_cast<double>(wire - m.real_bytes) / kBytesPerKB;
  m.bandwidth_overhead_pct = 100.0 * static_cast<double>(wire - m.real_bytes) / static_cast<double>(m.real_bytes);
  return m;
}

// Dataset-level figures: per-packet latency weighted by packet count, the
// per-trace columns averaged over traces, bandwidth % as a ratio of totals.
inline DefenseMetrics aggregate(const std::vector<DefenseMetrics>& all) {
  DefenseMetrics a;
  if (all.empty()) return a;
  double lat_sum = 0;
  for (const auto& m : all) {
    lat_sum += m.latency_per_packet * static_cast<double>(m.real_packets);
    a.real_packets += m.real_packets;
    a.real_bytes += m.real_bytes;
    a.wire_bytes += m.wire_bytes;
    a.latency_per_trace += m.latency_per_trace;
    a.latency_per_trace_pct += m.latency_per_trace_pct;
    a.bandwidth_overhead_bytes += m.bandwidth_overhead_bytes;
  }
  const auto n = static_cast<double>(all.size());
  a.latency_per_packet = a.real_packets ? lat_sum / static_cast<double>(a.real_packets) : 0;
  a.latency_per_trace /= n;
  a.latency_per_trace_pct /= n;
  a.bandwidth_overhead_bytes /= n;
  a.bandwidth_overhead_pct = a.real_bytes ? 100.0 * static_cast<double>(a.wire_bytes - a.real_bytes) / static_cast<double>(a.real_bytes) : 0;
  return a;
}

}  // namespace vcfp
