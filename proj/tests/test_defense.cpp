#include <gtest/gtest.h>

#include <cmath>

#include <vcfp/defense.hpp>
#include <vcfp/report.hpp>

#include "fixtures.hpp"

using namespace vcfp;
using vcfp::testing::pkt;

namespace {

// Replays a fixed list of noise values per direction, then zeros.
struct ScriptedNoise {
  std::vector<std::int64_t> values;
  std::int64_t operator()(std::uint64_t step) const { return step < values.size() ? values[step] : 0; }
};

auto zero_noise() {
  return [](Direction) { return ScriptedNoise{}; };
}

ObfuscationParams no_padding() {
  ObfuscationParams p;
  p.adaptive_padding = false;
  p.min_wire_size = 1;
  p.max_wire_size = 100000;
  return p;
}

const Dataset& corpus() {
  static const Dataset d = vcfp::testing::small_dataset(10, 6, 31);
  return d;
}

ObfuscationParams with_stats(double eps, std::uint64_t seed) {
  ObfuscationParams p;
  p.epsilon = eps;
  p.seed = seed;
  p.stats = dataset_stats(corpus());
  return p;
}

void expect_conservation(const Trace& t, const ObfuscatedTrace& o) {
  std::vector<std::int64_t> delivered(t.length(), 0);
  for (Direction d : {Direction::Outgoing, Direction::Incoming}) {
    const auto& dw = o.wire(d);
    std::size_t last_origin = 0;
    Tick last_time = std::numeric_limits<Tick>::min();
    for (const auto& w : dw.packets) {
      EXPECT_EQ(w.direction, d);
      EXPECT_EQ(w.real_bytes() + w.pad_bytes, w.wire_size);
      EXPECT_GE(w.pad_bytes, 0);
      EXPECT_GE(w.send_time, last_time);
      last_time = w.send_time;
      for (const auto& c : w.real_payload) {
        ASSERT_LT(c.origin, t.length());
        EXPECT_EQ(t.packets[c.origin].direction, d);
        EXPECT_GE(c.origin, last_origin) << "FIFO order";
        last_origin = c.origin;
        delivered[c.origin] += c.bytes;
      }
    }
  }
  for (std::size_t i = 0; i < t.length(); ++i) EXPECT_EQ(delivered[i], t.packets[i].size) << "packet " << i;
}

void expect_length_law(const ObfuscatedTrace& o) {
  for (Direction d : {Direction::Outgoing, Direction::Incoming}) {
    const auto& dw = o.wire(d);
    EXPECT_EQ(dw.final_count, dw.packets.size());
    if (dw.packets.empty()) continue;
    const auto m = dw.pre_extension_count;
    const auto m2 = dw.final_count;
    EXPECT_EQ(m2 & (m2 - 1), 0u);
    EXPECT_LE(m, m2);
    EXPECT_LT(m2 / 2, m);
    EXPECT_EQ(m2, target_length(m));
  }
}

}  // namespace

TEST(TargetLength, Examples) {
  EXPECT_EQ(target_length(5), 8u);
  EXPECT_EQ(target_length(8), 8u);
  EXPECT_EQ(target_length(1000), 1024u);
  EXPECT_EQ(target_length(1), 1u);
  EXPECT_THROW(target_length(0), ValidationError);
}

TEST(SampleHistogram, Examples) {
  const Histogram two{{0, 1, 2}, {0.5, 0.5}};
  EXPECT_DOUBLE_EQ(sample_histogram(two, 0.25), 0.5);
  EXPECT_DOUBLE_EQ(sample_histogram(two, 0.75), 1.5);
  const Histogram one{{3, 7}, {1.0}};
  EXPECT_DOUBLE_EQ(sample_histogram(one, 0.0), 3.0);
  EXPECT_DOUBLE_EQ(sample_histogram(one, 1.0), 7.0);
}

TEST(SampleHistogram, SkipsEmptyBinsAndRejectsEmptyMass) {
  const Histogram gappy{{0, 1, 2, 3}, {0.5, 0.0, 0.5}};
  EXPECT_DOUBLE_EQ(sample_histogram(gappy, 0.75), 2.5);
  EXPECT_THROW(sample_histogram(Histogram{{0, 1}, {0.0}}, 0.5), ValidationError);
  EXPECT_THROW(sample_histogram(Histogram{}, 0.5), ValidationError);
}

TEST(Laplace, InverseCdfExamples) {
  EXPECT_DOUBLE_EQ(laplace_inverse_cdf(2.0, 0.5), 0.0);
  EXPECT_NEAR(laplace_inverse_cdf(2.0, 0.9), 2.0 * std::log(5.0), 1e-12);
  EXPECT_NEAR(laplace_inverse_cdf(2.0, 0.9), 3.2189, 1e-4);
  EXPECT_EQ(std::llround(laplace_inverse_cdf(2.0, 0.9)), 3);
  EXPECT_NEAR(laplace_inverse_cdf(2.0, 0.1), -3.2189, 1e-4);
}

TEST(Laplace, DstarNoiseRoundsTheInverseCdf) {
  ObfuscationParams p;
  p.epsilon = 0.5;
  p.sensitivity = 1;
  EXPECT_DOUBLE_EQ(p.laplace_scale(), 2.0);
  Rng a(17), b(17);
  for (int k = 0; k < 1000; ++k) EXPECT_EQ(dstar_noise(p, 0, a), std::llround(laplace_inverse_cdf(2.0, b.uniform())));
}

TEST(Laplace, MeanAbsoluteDeviationMatchesScale) {
  Rng rng(2024);
  double sum = 0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) sum += std::abs(laplace_inverse_cdf(2.0, rng.uniform()));
  EXPECT_NEAR(sum / n, 2.0, 0.01);
}

TEST(Laplace, RecursiveMechanismGrowsWithStep) {
  ObfuscationParams p;
  p.noise_mechanism = NoiseMechanism::RecursiveReference;
  p.epsilon = 0.5;
  p.sensitivity = 500;
  auto mad = [&](std::uint64_t step) {
    Rng rng(3);
    double s = 0;
    for (int k = 0; k < 20000; ++k) s += std::abs(static_cast<double>(dstar_noise(p, step, rng)));
    return s / 20000;
  };
  // Step 0 draws one level of scale b * log2(1024) = 10000.
  EXPECT_NEAR(mad(0), 10000, 300);
  EXPECT_GT(mad(100), mad(0));
  EXPECT_EQ(noise_mechanism_from_string("recursive"), NoiseMechanism::RecursiveReference);
  EXPECT_THROW(noise_mechanism_from_string("gauss"), ValidationError);
}

TEST(Obfuscate, TwoPacketBufferExample) {
  const Trace t{{pkt(+1, 100, 0), pkt(+1, 200, 10)}};
  const auto p = no_padding();
  const auto o = obfuscate_trace_with(t, p, [](Direction d) {
    return d == Direction::Outgoing ? ScriptedNoise{{-30, 40}} : ScriptedNoise{};
  });
  const auto& out = o.outgoing.packets;
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].wire_size, 70);
  EXPECT_EQ(out[0].real_payload, (std::vector<PayloadChunk>{{0, 70}}));
  EXPECT_EQ(out[0].pad_bytes, 0);
  EXPECT_EQ(out[1].wire_size, 240);
  EXPECT_EQ(out[1].real_payload, (std::vector<PayloadChunk>{{0, 30}, {1, 200}}));
  EXPECT_EQ(out[1].pad_bytes, 10);
  EXPECT_EQ(out[0].real_bytes() + out[1].real_bytes(), 300);
  EXPECT_TRUE(o.incoming.packets.empty());

  const auto m = defense_metrics(t, o);
  EXPECT_DOUBLE_EQ(m.latency_per_packet, 5.0);
  EXPECT_DOUBLE_EQ(m.latency_per_trace, 0.0);
  EXPECT_DOUBLE_EQ(m.latency_per_trace_pct, 0.0);
  EXPECT_DOUBLE_EQ(m.bandwidth_overhead_bytes, 0.01);
  EXPECT_NEAR(m.bandwidth_overhead_pct, 100.0 * 10 / 300, 1e-12);
  EXPECT_EQ(fixed(m.bandwidth_overhead_pct, 2), "3.33");
}

TEST(Obfuscate, BufferDrainsBeforeLengthRounding) {
  // Negative noise on the last real packet leaves bytes that a tail dummy carries.
  const Trace t{{pkt(+1, 100, 0), pkt(+1, 200, 10), pkt(+1, 50, 20)}};
  auto p = no_padding();
  p.stats = dataset_stats(corpus());  // dummy sizes; every outgoing bin lies above 40 B
  const auto o = obfuscate_trace_with(t, p, [](Direction) { return ScriptedNoise{{0, 0, -40}}; });
  const auto& out = o.outgoing.packets;
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(o.outgoing.pre_extension_count, 4u);
  EXPECT_TRUE(out[3].is_dummy);
  EXPECT_EQ(out[3].real_payload, (std::vector<PayloadChunk>{{2, 40}}));
  expect_conservation(t, o);
}

TEST(Obfuscate, IdentityLimit) {
  const Trace t{{pkt(+1, 100, 0), pkt(-1, 900, 3), pkt(-1, 1400, 4), pkt(+1, 80, 9), pkt(-1, 60, 12), pkt(-1, 700, 15)}};
  const auto o = obfuscate_trace_with(t, no_padding(), zero_noise());
  EXPECT_EQ(to_wire_trace(o), t);
  for (Direction d : {Direction::Outgoing, Direction::Incoming})
    for (const auto& w : o.wire(d).packets) {
      EXPECT_EQ(w.pad_bytes, 0);
      EXPECT_FALSE(w.is_dummy);
    }
  const auto m = defense_metrics(t, o);
  EXPECT_DOUBLE_EQ(m.latency_per_packet, 0);
  EXPECT_DOUBLE_EQ(m.latency_per_trace, 0);
  EXPECT_DOUBLE_EQ(m.bandwidth_overhead_bytes, 0);
  EXPECT_DOUBLE_EQ(m.bandwidth_overhead_pct, 0);
}

TEST(Obfuscate, ThreePacketsPerDirectionRoundToFour) {
  const Trace t{{pkt(+1, 100, 0), pkt(-1, 900, 3), pkt(+1, 300, 40), pkt(-1, 1400, 80), pkt(+1, 80, 90), pkt(-1, 600, 200)}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto o = obfuscate_trace(t, with_stats(0.05, seed));
    expect_length_law(o);
    expect_conservation(t, o);
    for (Direction d : {Direction::Outgoing, Direction::Incoming}) EXPECT_GE(o.wire(d).final_count, 4u);
  }
}

TEST(Obfuscate, InvariantsOnGeneratedTraces) {
  const auto& d = corpus();
  for (double eps : {0.005, 0.05, 0.5})
    for (std::uint64_t seed : {1u, 2u}) {
      const auto obf = obfuscate_dataset(d, with_stats(eps, seed));
      ASSERT_EQ(obf.size(), d.size());
      for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& t = d.traces[i].trace;
        expect_conservation(t, obf[i]);
        expect_length_law(obf[i]);
        // The j-th real emission of a direction is its j-th real packet, sent on time.
        for (Direction dir : {Direction::Outgoing, Direction::Incoming}) {
          std::vector<Tick> real_times, sent;
          for (const auto& p : t.packets)
            if (p.direction == dir) real_times.push_back(p.timestamp);
          for (const auto& w : obf[i].wire(dir).packets) {
            EXPECT_GE(w.wire_size, 60);
            EXPECT_LE(w.wire_size, 1514);
            if (!w.is_dummy) sent.push_back(w.send_time);
          }
          EXPECT_EQ(sent, real_times);
        }
      }
    }
}

TEST(Obfuscate, AdaptivePaddingAloneAddsNoLatency) {
  const auto& d = corpus();
  auto p = with_stats(0.05, 5);
  for (std::size_t i = 0; i < d.size(); ++i) {
    p.seed = i;
    const auto o = obfuscate_trace_with(d.traces[i].trace, p, zero_noise());
    const auto m = defense_metrics(d.traces[i].trace, o);
    EXPECT_DOUBLE_EQ(m.latency_per_packet, 0);
    EXPECT_DOUBLE_EQ(m.latency_per_trace, 0);
    EXPECT_GT(m.wire_bytes, m.real_bytes);
  }
}

TEST(Obfuscate, Deterministic) {
  const auto& d = corpus();
  const auto p = with_stats(0.05, 9);
  EXPECT_EQ(obfuscate_dataset(d, p), obfuscate_dataset(d, p));
}

TEST(Obfuscate, RecursiveMechanismConserves) {
  auto p = with_stats(0.5, 4);
  p.noise_mechanism = NoiseMechanism::RecursiveReference;
  const auto& d = corpus();
  for (std::size_t i = 0; i < 10; ++i) {
    const auto o = obfuscate_trace(d.traces[i].trace, p);
    expect_conservation(d.traces[i].trace, o);
    expect_length_law(o);
  }
}

TEST(Obfuscate, Errors) {
  const auto t = vcfp::testing::worked_trace();
  ObfuscationParams p;
  EXPECT_THROW(obfuscate_trace(t, p), ValidationError);  // padding needs stats
  p = with_stats(0.05, 1);
  p.epsilon = 0;
  EXPECT_THROW(obfuscate_trace(t, p), ValidationError);
  p = with_stats(0.05, 1);
  p.min_wire_size = 2000;
  EXPECT_THROW(obfuscate_trace(t, p), ValidationError);
  p = with_stats(0.05, 1);
  EXPECT_THROW(obfuscate_trace(Trace{{pkt(+1, 5, 2), pkt(+1, 5, 1)}}, p), ValidationError);

  // Outgoing-only statistics cannot size incoming dummies.
  Dataset out_only;
  out_only.num_classes = 1;
  out_only.traces.push_back({Trace{{pkt(+1, 100, 0), pkt(+1, 200, 3), pkt(+1, 300, 90)}}, 0, CommandCategory::Single, 0, true});
  p.stats = dataset_stats(out_only);
  try {
    obfuscate_trace(Trace{{pkt(-1, 250, 0), pkt(-1, 250, 1), pkt(-1, 250, 2)}}, p);
    FAIL() << "expected an error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("incoming"), std::string::npos) << e.what();
  }
}

TEST(Metrics, RejectsMismatchedPair) {
  // Two outgoing, one incoming: already a power of two per direction, so no dummies.
  const Trace t{{pkt(+1, 20, 0.5), pkt(-1, 250, 5.3), pkt(+1, 100, 6.7)}};
  const auto o = obfuscate_trace_with(t, no_padding(), zero_noise());
  Trace other = t;
  other.packets[0].size += 1;
  EXPECT_THROW(defense_metrics(other, o), ValidationError);
}

TEST(Metrics, AggregateWeightsPacketsAndBytes) {
  DefenseMetrics a, b;
  a.latency_per_packet = 10;
  a.real_packets = 1;
  a.real_bytes = 100;
  a.wire_bytes = 200;
  a.latency_per_trace = 4;
  b.latency_per_packet = 1;
  b.real_packets = 3;
  b.real_bytes = 300;
  b.wire_bytes = 300;
  b.latency_per_trace = 2;
  const auto m = aggregate({a, b});
  EXPECT_DOUBLE_EQ(m.latency_per_packet, (10.0 + 3.0) / 4);
  EXPECT_DOUBLE_EQ(m.latency_per_trace, 3.0);
  EXPECT_DOUBLE_EQ(m.bandwidth_overhead_pct, 25.0);
}

TEST(Report, CostRowFormat) {
  DefenseMetrics m;
  m.latency_per_packet = 16.5;
  m.latency_per_trace = 136.0;
  m.latency_per_trace_pct = 2.6;
  m.bandwidth_overhead_bytes = 55.82;
  m.bandwidth_overhead_pct = 138.7;
  EXPECT_EQ(format_cost_row(m), "16.5 ms / 136.0 ms (2.6%) / 55.82 KB (138.7%)");
  const auto table = render_cost_table({{0.005, m}});
  EXPECT_NE(table.find("0.005"), std::string::npos);
  EXPECT_NE(table.find("55.82 (138.7%)"), std::string::npos);
}
