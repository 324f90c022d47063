#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <vcfp/synthgen.hpp>
#include <vcfp/trace.hpp>

namespace vcfp::testing {

inline Packet pkt(int dir, std::int64_t size, double ms) {
  return {dir > 0 ? Direction::Outgoing : Direction::Incoming, size, ms_to_ticks(ms)};
}

// The four-packet trace used throughout the worked examples.
inline Trace worked_trace() { return Trace{{pkt(+1, 20, 0.5), pkt(+1, 50, 2.1), pkt(-1, 250, 5.3), pkt(+1, 100, 6.7)}}; }

inline Dataset one_trace_dataset(Trace t, int num_classes = 1) {
  Dataset d;
  d.num_classes = num_classes;
  d.traces.push_back({std::move(t), 0, CommandCategory::Single, 0, true});
  return d;
}

inline Dataset small_dataset(int classes, int per_class, std::uint64_t seed, double noise = 1.0) {
  GenConfig cfg;
  cfg.num_classes = classes;
  cfg.traces_per_class = per_class;
  cfg.seed = seed;
  cfg.noise_level = noise;
  return generate_dataset(cfg, cfg.time_epochs);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("vcfp_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace vcfp::testing
