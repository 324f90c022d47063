#pragma once

// On-disk formats.
//
//   dataset    JSON Lines, one trace per line:
//                {"command_id", "category", "voice_id", "monitored",
//                 "packets": [[direction, size, timestamp_tenths_ms], ...]}
//              plus a sibling "<stem>.manifest.json".
//   obfuscated same line layout; packets carry
//                [direction, wire_size, send_time, is_dummy, pad_bytes,
//                 [[origin_index, bytes], ...]]
//              and the line adds "original" and per-direction counts.
//   tensors    16-byte little-endian header: "VCFP", u16 version,
//              u16 reserved (0), u32 rows, u32 cols; then rows*cols f32.
//   labels     rows little-endian u32, no header.
//   probs      CSV "row,class_0,...,class_{C-1}".

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcfp/classifiers.hpp"
#include "vcfp/defense.hpp"
#include "vcfp/error.hpp"
#include "vcfp/eval.hpp"
#include "vcfp/matrix.hpp"
#include "vcfp/preprocess.hpp"
#include "vcfp/trace.hpp"

namespace vcfp {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::uint16_t kTensorFormatVersion = 1;
inline constexpr std::array<char, 4> kTensorMagic{'V', 'C', 'F', 'P'};

namespace fs = std::filesystem;

inline fs::path manifest_path(const fs::path& data) {
  fs::path p = data;
  return p.replace_extension(".manifest.json");
}

inline std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, mode | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  return f;
}

inline std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return f;
}

inline nlohmann::json read_json(const fs::path& path) {
  auto f = open_in(path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Datasets

inline nlohmann::json packets_to_json(const Trace& t) {
  auto a = nlohmann::json::array();
  for (const auto& p : t.packets) a.push_back({sign(p.direction), p.size, p.timestamp});
  return a;
}

inline Trace packets_from_json(const nlohmann::json& a) {
  Trace t;
  if (!a.is_array()) throw ValidationError("packets must be an array");
  for (const auto& e : a) {
    if (!e.is_array() || (e.size() != 3 && e.size() != 6)) throw ValidationError("packet entry must be a 3- or 6-element array");
    Packet p;
    p.direction = static_cast<Direction>(e.at(0).get<int>());
    p.size = e.at(1).get<std::int64_t>();
    p.timestamp = e.at(2).get<Tick>();
    t.packets.push_back(p);
  }
  return t;
}

inline nlohmann::json labels_to_json(const LabeledTrace& lt) {
  return {{"command_id", lt.command_id},
          {"category", std::string(to_string(lt.category))},
          {"voice_id", lt.voice_id},
          {"monitored", lt.monitored}};
}

inline nlohmann::json counts_of(const Dataset& d) {
  std::vector<std::size_t> per_class(static_cast<std::size_t>(std::max(d.num_classes, 0)), 0);
  for (const auto& t : d.traces)
    if (t.command_id >= 0 && t.command_id < d.num_classes) ++per_class[static_cast<std::size_t>(t.command_id)];
  return {{"traces", d.size()}, {"per_class", per_class}};
}

inline void write_dataset(const Dataset& d, const fs::path& path) {
  {
    auto f = open_out(path);
    for (const auto& lt : d.traces) {
      auto line = labels_to_json(lt);
      line["packets"] = packets_to_json(lt.trace);
      f << line.dump() << '\n';
    }
    if (!f) throw IoError("write failed for '" + path.string() + "'");
  }
  write_json(manifest_path(path), {{"format_version", kDatasetFormatVersion},
                                   {"num_classes", d.num_classes},
                                   {"counts", counts_of(d)},
                                   {"provenance", d.manifest}});
}

inline Dataset read_dataset(const fs::path& path) {
  const auto manifest = read_json(manifest_path(path));
  Dataset d;
  try {
    if (manifest.at("format_version").get<int>() != kDatasetFormatVersion)
      throw ValidationError("unsupported dataset format version");
    d.num_classes = manifest.at("num_classes").get<int>();
    d.manifest = manifest.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path(path).string() + ": " + e.what());
  }

  auto f = open_in(path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledTrace lt;
      lt.command_id = j.at("command_id").get<int>();
      lt.category = category_from_string(j.at("category").get<std::string>());
      lt.voice_id = j.at("voice_id").get<int>();
      lt.monitored = j.at("monitored").get<bool>();
      lt.trace = packets_from_json(j.at("packets"));
      const auto v = validate_labeled(lt, d.num_classes);
      if (!v.ok()) throw ValidationError(describe(v));
      d.traces.push_back(std::move(lt));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (counts_of(d) != manifest.at("counts"))
    throw ValidationError(path.string() + ": manifest counts do not match file contents");
  return d;
}

// ---------------------------------------------------------------------------
// Obfuscated traces

inline nlohmann::json wire_to_json(const DirectionWire& w) {
  auto a = nlohmann::json::array();
  for (const auto& p : w.packets) {
    auto payload = nlohmann::json::array();
    for (const auto& c : p.real_payload) payload.push_back({c.origin, c.bytes});
    a.push_back({sign(p.direction), p.wire_size, p.send_time, p.is_dummy ? 1 : 0, p.pad_bytes, payload});
  }
  return a;
}

// Packets of both directions are merged by send time in the "packets" array,
// so the file also reads as an ordinary dataset of wire traces.
inline void write_obfuscated(const Dataset& source, const std::vector<ObfuscatedTrace>& obf, const fs::path& path,
                             const nlohmann::json& provenance) {
  if (source.size() != obf.size()) throw ValidationError("obfuscated trace count differs from dataset size");
  Dataset wire_only;
  wire_only.num_classes = source.num_classes;
  {
    auto f = open_out(path);
    for (std::size_t i = 0; i < obf.size(); ++i) {
      const auto& o = obf[i];
      auto line = labels_to_json(source.traces[i]);
      auto merged = nlohmann::json::array();
      const auto out = wire_to_json(o.outgoing), in = wire_to_json(o.incoming);
      std::size_t a = 0, b = 0;
      while (a < out.size() || b < in.size()) {
        const bool take_a = b >= in.size() || (a < out.size() && out[a][2].get<Tick>() <= in[b][2].get<Tick>());
        merged.push_back(take_a ? out[a++] : in[b++]);
      }
      line["packets"] = merged;
      line["original"] = packets_to_json(o.original);
      line["counts"] = {{"outgoing", {o.outgoing.pre_extension_count, o.outgoing.final_count}},
                        {"incoming", {o.incoming.pre_extension_count, o.incoming.final_count}}};
      f << line.dump() << '\n';
      wire_only.traces.push_back(source.traces[i]);
    }
    if (!f) throw IoError("write failed for '" + path.string() + "'");
  }
  write_json(manifest_path(path), {{"format_version", kDatasetFormatVersion},
                                   {"num_classes", source.num_classes},
                                   {"counts", counts_of(wire_only)},
                                   {"provenance", provenance}});
}

inline std::vector<ObfuscatedTrace> read_obfuscated(const fs::path& path) {
  auto f = open_in(path);
  std::vector<ObfuscatedTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ObfuscatedTrace o;
      o.original = packets_from_json(j.at("original"));
      for (const auto& e : j.at("packets")) {
        if (e.size() != 6) throw ValidationError("obfuscated packet entry must have 6 elements");
        WirePacket w;
        w.direction = static_cast<Direction>(e[0].get<int>());
        w.wire_size = e[1].get<std::int64_t>();
        w.send_time = e[2].get<Tick>();
        w.is_dummy = e[3].get<int>() != 0;
        w.pad_bytes = e[4].get<std::int64_t>();
        for (const auto& c : e[5]) w.real_payload.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::int64_t>()});
        (w.direction == Direction::Incoming ? o.incoming : o.outgoing).packets.push_back(std::move(w));
      }
      const auto& counts = j.at("counts");
      o.outgoing.pre_extension_count = counts.at("outgoing").at(0).get<std::size_t>();
      o.outgoing.final_count = counts.at("outgoing").at(1).get<std::size_t>();
      o.incoming.pre_extension_count = counts.at("incoming").at(0).get<std::size_t>();
      o.incoming.final_count = counts.at("incoming").at(1).get<std::size_t>();
      out.push_back(std::move(o));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensors and labels

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

inline std::string slurp(const fs::path& path) {
  auto f = open_in(path, std::ios::in | std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void spit(const fs::path& path, const std::string& bytes) {
  auto f = open_out(path, std::ios::out | std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

struct Tensor {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline std::string encode_tensor(const Tensor& t) {
  if (t.values.size() != static_cast<std::size_t>(t.rows) * t.cols) throw ValidationError("tensor payload does not match its shape");
  std::string buf(kTensorMagic.begin(), kTensorMagic.end());
  detail::put_le<std::uint16_t>(buf, kTensorFormatVersion);
  detail::put_le<std::uint16_t>(buf, 0);
  detail::put_le<std::uint32_t>(buf, t.rows);
  detail::put_le<std::uint32_t>(buf, t.cols);
  buf.reserve(buf.size() + 4 * t.values.size());
  for (float x : t.values) detail::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(x));
  return buf;
}

inline Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 16) throw ValidationError("tensor file shorter than its 16-byte header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kTensorMagic.data(), 4) != 0) throw ValidationError("tensor file has a bad magic number");
  if (detail::get_le<std::uint16_t>(p + 4) != kTensorFormatVersion) throw ValidationError("unsupported tensor format version");
  Tensor t;
  t.rows = detail::get_le<std::uint32_t>(p + 8);
  t.cols = detail::get_le<std::uint32_t>(p + 12);
  const std::size_t n = static_cast<std::size_t>(t.rows) * t.cols;
  if (bytes.size() != 16 + 4 * n) throw ValidationError("tensor payload length does not match header dimensions");
  t.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.values[i] = std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 16 + 4 * i));
  return t;
}

inline void write_tensor(const fs::path& path, const Tensor& t) { detail::spit(path, encode_tensor(t)); }
inline Tensor read_tensor(const fs::path& path) { return decode_tensor(detail::slurp(path)); }

inline void write_labels(const fs::path& path, const std::vector<std::uint32_t>& labels) {
  std::string buf;
  buf.reserve(4 * labels.size());
  for (auto l : labels) detail::put_le<std::uint32_t>(buf, l);
  detail::spit(path, buf);
}

inline std::vector<std::uint32_t> read_labels(const fs::path& path) {
  const auto bytes = detail::slurp(path);
  if (bytes.size() % 4 != 0) throw ValidationError("label file length is not a multiple of 4");
  std::vector<std::uint32_t> out(bytes.size() / 4);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::get_le<std::uint32_t>(p + 4 * i);
  return out;
}

// Rows follow dataset order.
inline Tensor build_tensor(const Dataset& d, const PreprocessConfig& cfg, const Scaler& scaler) {
  Tensor t;
  t.rows = static_cast<std::uint32_t>(d.size());
  t.cols = static_cast<std::uint32_t>(cfg.length);
  t.values.reserve(d.size() * cfg.length);
  for (const auto& lt : d.traces)
    for (double x : encode_row(lt.trace, cfg, scaler)) t.values.push_back(static_cast<float>(x));
  return t;
}

inline void export_tensors(const Dataset& d, const PreprocessConfig& cfg, const Scaler& scaler, const fs::path& tensor_path,
                           const fs::path& label_path) {
  write_tensor(tensor_path, build_tensor(d, cfg, scaler));
  std::vector<std::uint32_t> labels;
  for (const auto& lt : d.traces) labels.push_back(static_cast<std::uint32_t>(lt.command_id));
  write_labels(label_path, labels);
}

// ---------------------------------------------------------------------------
// Probability files

inline constexpr double kProbSumTolerance = 1e-6;

inline std::string prob_string(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline void write_probabilities(const fs::path& path, const ProbMatrix& p) {
  auto f = open_out(path);
  f << "row";
  for (std::size_t c = 0; c < p.cols; ++c) f << ",class_" << c;
  f << '\n';
  for (std::size_t i = 0; i < p.rows; ++i) {
    f << i;
    for (std::size_t c = 0; c < p.cols; ++c) f << ',' << prob_string(p(i, c));
    f << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline ProbMatrix import_probabilities(const fs::path& path, std::size_t expected_rows, std::size_t expected_classes) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw ValidationError(path.string() + ": missing header");
  std::string expected_header = "row";
  for (std::size_t c = 0; c < expected_classes; ++c) expected_header += ",class_" + std::to_string(c);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw ValidationError(path.string() + ": header does not describe " + std::to_string(expected_classes) + " classes");

  ProbMatrix p(expected_rows, expected_classes);
  std::size_t r = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (r >= expected_rows) throw ValidationError(path.string() + ": more than " + std::to_string(expected_rows) + " rows");
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != expected_classes + 1)
      throw ValidationError(path.string() + ": row " + std::to_string(r) + " has " + std::to_string(cells.size() - 1) + " values");
    double sum = 0;
    for (std::size_t c = 0; c < expected_classes; ++c) {
      double x = 0;
      const auto& s = cells[c + 1];
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
      if (ec != std::errc() || ptr != s.data() + s.size() || !(x >= 0))
        throw ValidationError(path.string() + ": row " + std::to_string(r) + " has an invalid probability '" + s + "'");
      p(r, c) = x;
      sum += x;
    }
    if (std::abs(sum - 1.0) > kProbSumTolerance)
      throw ValidationError(path.string() + ": row " + std::to_string(r) + " sums to " + prob_string(sum) + ", not 1");
    for (std::size_t c = 0; c < expected_classes; ++c) p(r, c) /= sum;
    ++r;
  }
  if (r != expected_rows)
    throw ValidationError(path.string() + ": expected " + std::to_string(expected_rows) + " rows, found " + std::to_string(r));
  return p;
}

// ---------------------------------------------------------------------------
// JSON views of the remaining artifacts

inline nlohmann::json histogram_to_json(const Histogram& h) {
  return {{"bin_edges", h.bin_edges}, {"bin_mass", h.bin_mass}, {"empty", h.empty()}};
}

inline Histogram histogram_from_json(const nlohmann::json& j) {
  Histogram h{j.at("bin_edges").get<std::vector<double>>(), j.at("bin_mass").get<std::vector<double>>()};
  if (h.bin_edges.size() != h.bin_mass.size() + 1) throw ValidationError("histogram edges and masses disagree");
  return h;
}

inline nlohmann::json stats_to_json(const SummaryStats& s) {
  return {{"packet_size_hist_in", histogram_to_json(s.packet_size_hist_in)},
          {"packet_size_hist_out", histogram_to_json(s.packet_size_hist_out)},
          {"interarrival_hist_burst", histogram_to_json(s.interarrival_hist_burst)},
          {"interarrival_hist_gap", histogram_to_json(s.interarrival_hist_gap)},
          {"max_abs_size", s.max_abs_size},
          {"burst_gap_threshold_ms", s.burst_gap_threshold_ms}};
}

inline SummaryStats stats_from_json(const nlohmann::json& j) {
  try {
    SummaryStats s;
    s.packet_size_hist_in = histogram_from_json(j.at("packet_size_hist_in"));
    s.packet_size_hist_out = histogram_from_json(j.at("packet_size_hist_out"));
    s.interarrival_hist_burst = histogram_from_json(j.at("interarrival_hist_burst"));
    s.interarrival_hist_gap = histogram_from_json(j.at("interarrival_hist_gap"));
    s.max_abs_size = j.at("max_abs_size").get<std::int64_t>();
    s.burst_gap_threshold_ms = j.at("burst_gap_threshold_ms").get<double>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed stats document: ") + e.what());
  }
}

inline nlohmann::json scaler_to_json(const Scaler& s) { return {{"min", s.min}, {"max", s.max}}; }

inline Scaler scaler_from_json(const nlohmann::json& j) {
  Scaler s{j.at("min").get<double>(), j.at("max").get<double>()};
  if (!(s.min < s.max)) throw ValidationError("degenerate scaler: min must be below max");
  return s;
}

inline nlohmann::json split_to_json(const SplitPlan& p) {
  auto folds = nlohmann::json::array();
  for (int f = 0; f < p.fold_count; ++f)
    folds.push_back({{"train", p.indices(f, Role::Train)},
                     {"validation", p.indices(f, Role::Validation)},
                     {"test", p.indices(f, Role::Test)}});
  return {{"fold_count", p.fold_count}, {"fold_of", p.fold_of}, {"folds", folds}};
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json cats = nlohmann::json::object();
  for (const auto& [c, a] : r.per_category_accuracy) cats[std::string(to_string(c))] = a;
  nlohmann::json j = {{"accuracy", r.accuracy},
                      {"per_fold_accuracies", r.per_fold_accuracies},
                      {"fold_variance", r.fold_variance},
                      {"total", r.total},
                      {"confusion", r.confusion},
                      {"per_category_accuracy", cats}};
  if (r.openworld) {
    const auto& o = *r.openworld;
    j["openworld"] = {{"acc", o.acc}, {"tpr", o.tpr}, {"fpr", o.fpr}, {"tp", o.tp},
                      {"fp", o.fp},   {"tn", o.tn},   {"fn", o.fn},   {"threshold", o.threshold}};
  }
  return j;
}

inline nlohmann::json metrics_to_json(const DefenseMetrics& m) {
  return {{"latency_per_packet_ms", m.latency_per_packet},
          {"latency_per_trace_ms", m.latency_per_trace},
          {"latency_per_trace_pct", m.latency_per_trace_pct},
          {"bandwidth_overhead_kb", m.bandwidth_overhead_bytes},
          {"bandwidth_overhead_pct", m.bandwidth_overhead_pct},
          {"real_packets", m.real_packets},
          {"real_bytes", m.real_bytes},
          {"wire_bytes", m.wire_bytes}};
}

inline constexpr const char* kMetricsCsvHeader =
    "trace,latency_per_packet_ms,latency_per_trace_ms,latency_per_trace_pct,bandwidth_overhead_kb,bandwidth_overhead_pct";

inline void write_metrics_csv(const fs::path& path, const std::vector<DefenseMetrics>& rows) {
  auto f = open_out(path);
  f << kMetricsCsvHeader << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i];
    f << i << ',' << prob_string(m.latency_per_packet) << ',' << prob_string(m.latency_per_trace) << ','
      << prob_string(m.latency_per_trace_pct) << ',' << prob_string(m.bandwidth_overhead_bytes) << ','
      << prob_string(m.bandwidth_overhead_pct) << '\n';
  }
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace vcfp
