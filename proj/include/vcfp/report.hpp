#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vcfp/defense.hpp"
#include "vcfp/eval.hpp"

namespace vcfp {

inline std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline std::string percent(double fraction, int digits = 2) { return fixed(100.0 * fraction, digits) + "%"; }

// Plain-text table with a header rule; the first column is left aligned.
inline std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());

  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < width.size(); ++c) {
      const std::string cell = c < cells.size() ? cells[c] : "";
      const std::string pad(width[c] - cell.size(), ' ');
      os << (c ? "  " : "") << (c == 0 ? cell + pad : pad + cell);
    }
    os << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return os.str();
}

// "16.5 ms / 136.0 ms (2.6%) / 55.82 KB (138.7%)"
inline std::string format_cost_row(const DefenseMetrics& m) {
  return fixed(m.latency_per_packet, 1) + " ms / " + fixed(m.latency_per_trace, 1) + " ms (" +
         fixed(m.latency_per_trace_pct, 1) + "%) / " + fixed(m.bandwidth_overhead_bytes, 2) + " KB (" +
         fixed(m.bandwidth_overhead_pct, 1) + "%)";
}

inline std::string render_cost_table(const std::vector<std::pair<double, DefenseMetrics>>& rows) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [eps, m] : rows) {
    char e[32];
    std::snprintf(e, sizeof e, "%g", eps);
    cells.push_back({e, fixed(m.latency_per_packet, 1), fixed(m.latency_per_trace, 1) + " (" + fixed(m.latency_per_trace_pct, 1) + "%)",
                     fixed(m.bandwidth_overhead_bytes, 2) + " (" + fixed(m.bandwidth_overhead_pct, 1) + "%)"});
  }
  return render_table({"epsilon", "per packet (ms)", "per trace (ms)", "overhead (KB)"}, cells);
}

inline std::string render_category_table(const std::vector<std::pair<std::string, EvalReport>>& models) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& [name, r] : models) {
    std::vector<std::string> row{name};
    for (auto c : {CommandCategory::Single, CommandCategory::TimeSensitive, CommandCategory::Multiple}) {
      auto it = r.per_category_accuracy.find(c);
      row.push_back(it == r.per_category_accuracy.end() ? "-" : percent(it->second));
    }
    row.push_back(percent(r.accuracy));
    cells.push_back(std::move(row));
  }
  return render_table({"model", "single", "time_sensitive", "multiple", "overall"}, cells);
}

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;  // (dataset size, accuracy in [0, 1])
};

// Accuracy against number of training traces, one polyline per series.
inline std::string accuracy_plot_svg(const std::vector<PlotSeries>& series, const std::string& title) {
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  double xmax = 1;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) xmax = std::max(xmax, x);
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y) { return H - B - (H - T - B) * std::clamp(y, 0.0, 1.0); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double y = k / 5.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
       << static_cast<int>(100 * y) << "%</text>\n";
    const double x = xmax * k / 5.0;
    os << "<text x=\"" << px(x) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << static_cast<long>(x) << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << "Number of traces per class</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 18 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Accuracy</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[s].points) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << W - R - 150 << "\" y=\"" << T + 16 * (s + 1) << "\" fill=\"" << color
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << series[s].name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace vcfp
