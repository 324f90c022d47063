#pragma once

// Seeded synthetic smart-speaker traffic. Every trace is an outgoing query
// burst (voice upload, perturbed per voice) followed by an incoming response
// burst whose shape depends only on the command and, for time-sensitive and
// multiple-response commands, on the epoch or a random variant.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcfp/error.hpp"
#include "vcfp/random.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

inline constexpr std::int64_t kMinFrameBytes = 60;
inline constexpr std::int64_t kMaxFrameBytes = 1514;

struct BurstShape {
  std::int64_t total_bytes = 1;
  double packet_size_mean = 500;
  double packet_size_std = 100;
  double interarrival_mean = 5;  // ms
  double interarrival_std = 5;   // ms
  double jitter = 0.1;           // relative noise level in [0, 1]
  double lead_ms = 0;            // silence before the burst starts
  int head_packets = 0;          // leading packets drawn around head_size instead
  double head_size = 300;        // bytes
  std::uint64_t pattern_seed = 0;

  friend bool operator==(const BurstShape&, const BurstShape&) = default;
};

using OutgoingShape = BurstShape;
using ResponseShape = BurstShape;

struct CommandProfile {
  int command_id = 0;
  CommandCategory category = CommandCategory::Single;
  std::vector<ResponseShape> response_variants;
  OutgoingShape query_shape;

  friend bool operator==(const CommandProfile&, const CommandProfile&) = default;
};

struct GenConfig {
  int num_classes = 100;
  int traces_per_class = 15;
  std::array<double, 3> category_ratios{0.45, 0.21, 0.34};  // Single, TimeSensitive, Multiple
  int num_voices = 5;
  double noise_level = 1.0;
  std::uint64_t seed = 0;
  int time_epochs = 3;  // response variants per time-sensitive command
};

inline void validate(const GenConfig& cfg) {
  if (cfg.num_classes < 1) throw ValidationError("num_classes must be >= 1");
  if (cfg.traces_per_class < 1) throw ValidationError("traces_per_class must be >= 1");
  if (cfg.num_voices < 1 || cfg.num_voices > kMaxVoiceId + 1) throw ValidationError("num_voices must be in [1, 5]");
  if (cfg.time_epochs < 2) throw ValidationError("time_epochs must be >= 2");
  if (!(cfg.noise_level >= 0)) throw ValidationError("noise_level must be non-negative");
  double sum = 0;
  for (double r : cfg.category_ratios) {
    if (!(r >= 0)) throw ValidationError("category ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("category ratios must sum to 1");
}

inline void to_json(nlohmann::json& j, const GenConfig& c) {
  j = {{"num_classes", c.num_classes},   {"traces_per_class", c.traces_per_class},
       {"category_ratios", c.category_ratios}, {"num_voices", c.num_voices},
       {"noise_level", c.noise_level},   {"seed", c.seed},
       {"time_epochs", c.time_epochs}};
}

inline void from_json(const nlohmann::json& j, GenConfig& c) {
  GenConfig d;
  c.num_classes = j.value("num_classes", d.num_classes);
  c.traces_per_class = j.value("traces_per_class", d.traces_per_class);
  c.category_ratios = j.value("category_ratios", d.category_ratios);
  c.num_voices = j.value("num_voices", d.num_voices);
  c.noise_level = j.value("noise_level", d.noise_level);
  c.seed = j.value("seed", d.seed);
  c.time_epochs = j.value("time_epochs", d.time_epochs);
}

// Largest-remainder apportionment of n items over the given ratios; ties in
// the fractional part go to the lower index.
inline std::array<int, 3> apportion(int n, const std::array<double, 3>& ratios) {
  std::array<int, 3> counts{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * n;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    frac[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

namespace detail {

inline BurstShape draw_query_shape(Rng& rng) {
  BurstShape s;
  s.total_bytes = static_cast<std::int64_t>(rng.uniform(6000, 30000));
  s.packet_size_mean = rng.uniform(800, 1400);
  s.packet_size_std = rng.uniform(50, 250);
  s.interarrival_mean = rng.uniform(5, 30);
  s.interarrival_std = s.interarrival_mean * rng.uniform(0.5, 1.5);
  s.jitter = rng.uniform(0.05, 0.15);
  s.lead_ms = 0;
  s.pattern_seed = rng.next();
  return s;
}

inline BurstShape draw_response_shape(Rng& rng) {
  BurstShape s;
  s.total_bytes = static_cast<std::int64_t>(std::exp(rng.uniform(std::log(10000.0), std::log(120000.0))));
  s.packet_size_mean = rng.uniform(900, 1400);
  s.packet_size_std = rng.uniform(100, 400);
  s.interarrival_mean = rng.uniform(0.5, 8);
  s.interarrival_std = s.interarrival_mean * rng.uniform(1, 3);
  s.jitter = rng.uniform(0.05, 0.15);
  s.lead_ms = rng.uniform(150, 600);
  s.head_packets = 2 + static_cast<int>(rng.below(9));
  s.head_size = rng.uniform(100, 800);
  s.pattern_seed = rng.next();
  return s;
}

inline std::int64_t clip_frame(double bytes) {
  return std::clamp<std::int64_t>(std::llround(bytes), kMinFrameBytes, kMaxFrameBytes);
}

struct VoiceFactors {
  double size = 1.0;
  double count = 1.0;
};

inline VoiceFactors voice_factors(const OutgoingShape& query, int voice_id) {
  Rng rng(derive_seed(query.pattern_seed, {0x766f696365ULL, static_cast<std::uint64_t>(voice_id)}));
  VoiceFactors f;
  f.size = rng.uniform(0.8, 1.2);
  f.count = rng.uniform(0.9, 1.1);
  return f;
}

// Appends one burst starting at start_ms; returns the time of its last packet.
// The template (sizes and gaps before perturbation) is a pure function of the
// shape; rng only supplies the per-trace perturbation, scaled by rho.
inline double emit_burst(std::vector<std::pair<double, Packet>>& out, const BurstShape& shape, Direction dir,
                         double start_ms, double rho, VoiceFactors vf, Rng& rng) {
  Rng pattern(shape.pattern_seed);
  const double base_n = std::max(1.0, std::round(static_cast<double>(shape.total_bytes) / shape.packet_size_mean));
  const auto n = static_cast<std::int64_t>(std::max(1.0, std::round(base_n * vf.count * (1.0 + rho * rng.normal()))));

  const double cv2 = (shape.interarrival_std * shape.interarrival_std) / (shape.interarrival_mean * shape.interarrival_mean);
  const double ln_sigma = std::sqrt(std::log1p(cv2));
  const double ln_mu = std::log(shape.interarrival_mean) - 0.5 * ln_sigma * ln_sigma;

  double t = start_ms + shape.lead_ms * std::exp(rho * rng.normal());
  for (std::int64_t k = 0; k < n; ++k) {
    const double base_size = k < shape.head_packets ? shape.head_size * (1.0 + 0.1 * pattern.normal())
                                                    : shape.packet_size_mean + shape.packet_size_std * pattern.normal();
    const double base_gap = std::exp(ln_mu + ln_sigma * pattern.normal());
    if (k > 0) t += base_gap * std::exp(rho * rng.normal());
    const std::int64_t size = clip_frame(base_size * vf.size * (1.0 + rho * rng.normal()));
    out.push_back({t, Packet{dir, size, 0}});
  }
  return t;
}

}  // namespace detail

inline std::vector<CommandProfile> make_command_profiles(const GenConfig& cfg) {
  validate(cfg);
  const auto counts = apportion(cfg.num_classes, cfg.category_ratios);
  std::vector<CommandCategory> cats;
  cats.reserve(static_cast<std::size_t>(cfg.num_classes));
  cats.insert(cats.end(), static_cast<std::size_t>(counts[0]), CommandCategory::Single);
  cats.insert(cats.end(), static_cast<std::size_t>(counts[1]), CommandCategory::TimeSensitive);
  cats.insert(cats.end(), static_cast<std::size_t>(counts[2]), CommandCategory::Multiple);
  Rng order(derive_seed(cfg.seed, {0x70726f66ULL}));
  order.shuffle(cats.begin(), cats.end());

  std::vector<CommandProfile> profiles;
  profiles.reserve(cats.size());
  for (int c = 0; c < cfg.num_classes; ++c) {
    Rng rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(c)}));
    CommandProfile p;
    p.command_id = c;
    p.category = cats[static_cast<std::size_t>(c)];
    p.query_shape = detail::draw_query_shape(rng);
    std::size_t variants = 1;
    if (p.category == CommandCategory::TimeSensitive) variants = static_cast<std::size_t>(cfg.time_epochs);
    if (p.category == CommandCategory::Multiple) variants = 2 + rng.below(4);  // 2..5
    // Variants of one command keep its packet sizes, pacing and lead-in;
    // only the length and the packet-level template change.
    const ResponseShape base = detail::draw_response_shape(rng);
    for (std::size_t v = 0; v < variants; ++v) {
      ResponseShape r = base;
      if (variants > 1) {
        // Daily answers differ little in length; alternative answers differ more.
        const double lo = p.category == CommandCategory::TimeSensitive ? 0.8 : 0.6;
        const double hi = p.category == CommandCategory::TimeSensitive ? 1.2 : 1.5;
        const double f = lo + (hi - lo) * (static_cast<double>(v) + rng.uniform(0.2, 0.8)) / static_cast<double>(variants);
        r.total_bytes = std::max<std::int64_t>(1, std::llround(static_cast<double>(base.total_bytes) * f));
        r.pattern_seed = rng.next();
      }
      p.response_variants.push_back(r);
    }
    profiles.push_back(std::move(p));
  }
  return profiles;
}

// noise_level scales every shape's jitter; 0 collapses all randomness.
inline LabeledTrace generate_trace(const CommandProfile& profile, int voice_id, int epoch, Rng& rng,
                                   double noise_level = 1.0) {
  if (voice_id < 0 || voice_id > kMaxVoiceId) throw ValidationError("voice_id outside [0, 4]");
  if (profile.response_variants.empty()) throw ValidationError("profile has no response variants");

  std::size_t variant = 0;
  switch (profile.category) {
    case CommandCategory::Single: break;
    case CommandCategory::TimeSensitive:
      if (epoch < 0 || static_cast<std::size_t>(epoch) >= profile.response_variants.size())
        throw ValidationError("epoch " + std::to_string(epoch) + " has no response variant for command " +
                              std::to_string(profile.command_id));
      variant = static_cast<std::size_t>(epoch);
      break;
    case CommandCategory::Multiple: variant = rng.below(profile.response_variants.size()); break;
  }

  std::vector<std::pair<double, Packet>> timed;
  const auto& q = profile.query_shape;
  const double t_end = detail::emit_burst(timed, q, Direction::Outgoing, 0.0, noise_level * q.jitter,
                                          detail::voice_factors(q, voice_id), rng);
  const auto& r = profile.response_variants[variant];
  detail::emit_burst(timed, r, Direction::Incoming, t_end, noise_level * r.jitter, {}, rng);

  std::stable_sort(timed.begin(), timed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  LabeledTrace lt;
  lt.command_id = profile.command_id;
  lt.category = profile.category;
  lt.voice_id = voice_id;
  lt.trace.packets.reserve(timed.size());
  for (auto& [ms, p] : timed) {
    p.timestamp = ms_to_ticks(ms);
    lt.trace.packets.push_back(p);
  }
  return lt;
}

// Traces per class cycle through the voices; time-sensitive classes cycle
// through epochs in blocks of num_voices so every voice sees every epoch.
inline Dataset generate_dataset(const GenConfig& cfg, int epochs) {
  validate(cfg);
  if (epochs < 1 || epochs > cfg.time_epochs) throw ValidationError("epochs must be in [1, time_epochs]");
  const auto profiles = make_command_profiles(cfg);

  Dataset d;
  d.num_classes = cfg.num_classes;
  d.traces.reserve(static_cast<std::size_t>(cfg.num_classes) * static_cast<std::size_t>(cfg.traces_per_class));
  for (const auto& p : profiles) {
    for (int j = 0; j < cfg.traces_per_class; ++j) {
      Rng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(p.command_id), static_cast<std::uint64_t>(j)}));
      const int voice = j % cfg.num_voices;
      const int epoch = p.category == CommandCategory::TimeSensitive ? (j / cfg.num_voices) % epochs : 0;
      d.traces.push_back(generate_trace(p, voice, epoch, rng, cfg.noise_level));
    }
  }
  d.manifest = {{"source", "synthgen"}, {"generator", cfg}, {"epochs", epochs}};
  return d;
}

// Monitored classes [0, num_classes) plus unmonitored classes appended after
// them, each with its own trace count. All classes share one profile draw.
inline Dataset generate_open_world(const GenConfig& cfg, int epochs, int unmonitored_classes, int traces_per_unmonitored) {
  if (unmonitored_classes < 1 || traces_per_unmonitored < 1)
    throw ValidationError("open world needs at least one unmonitored class and trace");
  GenConfig all = cfg;
  all.num_classes = cfg.num_classes + unmonitored_classes;
  validate(all);
  if (epochs < 1 || epochs > cfg.time_epochs) throw ValidationError("epochs must be in [1, time_epochs]");
  const auto profiles = make_command_profiles(all);

  Dataset d;
  d.num_classes = all.num_classes;
  for (const auto& p : profiles) {
    const bool monitored = p.command_id < cfg.num_classes;
    const int count = monitored ? cfg.traces_per_class : traces_per_unmonitored;
    for (int j = 0; j < count; ++j) {
      Rng rng(derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(p.command_id), static_cast<std::uint64_t>(j)}));
      const int voice = j % cfg.num_voices;
      const int epoch = p.category == CommandCategory::TimeSensitive ? (j / cfg.num_voices) % epochs : 0;
      auto lt = generate_trace(p, voice, epoch, rng, cfg.noise_level);
      lt.monitored = monitored;
      d.traces.push_back(std::move(lt));
    }
  }
  d.manifest = {{"source", "synthgen"},
                {"generator", cfg},
                {"epochs", epochs},
                {"unmonitored_classes", unmonitored_classes},
                {"traces_per_unmonitored", traces_per_unmonitored}};
  return d;
}

}  // namespace vcfp
