#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "mpgvae/errors.hpp"

namespace mpgvae {

// Minimal hand-built SVG charts. The CSV files next to these are the
// machine-readable truth; the charts exist so a run can be eyeballed
// without a plotting stack.

struct Series {
  std::string name;
  std::vector<double> values;
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  return palette[i % 5];
}

struct ChartFrame {
  double x0 = 60, y0 = 40, w = 540, h = 300;  // plot area inside a 640x400 canvas

  double x(double t) const { return x0 + t * w; }          // t in [0,1]
  double y(double t) const { return y0 + (1.0 - t) * h; }  // t in [0,1], origin at bottom
};

inline void svg_open(std::string& out, const std::string& title) {
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + title +
         "</text>\n";
}

inline void svg_axes(std::string& out, const ChartFrame& f, double lo, double hi) {
  out += "<line x1=\"" + svg_num(f.x0) + "\" y1=\"" + svg_num(f.y0) + "\" x2=\"" +
         svg_num(f.x0) + "\" y2=\"" + svg_num(f.y0 + f.h) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + svg_num(f.x0) + "\" y1=\"" + svg_num(f.y0 + f.h) + "\" x2=\"" +
         svg_num(f.x0 + f.w) + "\" y2=\"" + svg_num(f.y0 + f.h) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double v = lo + t * (hi - lo);
    out += "<text x=\"" + svg_num(f.x0 - 6) + "\" y=\"" + svg_num(f.y(t) + 4) +
           "\" text-anchor=\"end\">" + svg_num(v) + "</text>\n";
    out += "<line x1=\"" + svg_num(f.x0 - 3) + "\" y1=\"" + svg_num(f.y(t)) + "\" x2=\"" +
           svg_num(f.x0) + "\" y2=\"" + svg_num(f.y(t)) + "\" stroke=\"black\"/>\n";
  }
}

}  // namespace detail

// One polyline per series over a shared 1..n x-axis (epoch number).
inline std::string svg_line_chart(const std::string& title, const std::string& x_label,
                                  const std::vector<Series>& series) {
  if (series.empty() || series.front().values.empty())
    throw ContractViolation("svg_line_chart: nothing to plot");
  const std::size_t n = series.front().values.size();
  for (const Series& s : series)
    if (s.values.size() != n)
      throw ContractViolation("svg_line_chart: series lengths differ");

  double lo = series[0].values[0], hi = lo;
  for (const Series& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }

  detail::ChartFrame f;
  std::string out;
  detail::svg_open(out, title);
  detail::svg_axes(out, f, lo, hi);
  out += "<text x=\"" + detail::svg_num(f.x0 + f.w / 2) + "\" y=\"385\" "
         "text-anchor=\"middle\">" + x_label + "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    std::string pts;
    for (std::size_t i = 0; i < n; ++i) {
      const double tx = n == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(n - 1);
      const double ty = (s.values[i] - lo) / (hi - lo);
      pts += detail::svg_num(f.x(tx)) + "," + detail::svg_num(f.y(ty)) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::series_color(si)) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = 40.0 + 16.0 * static_cast<double>(si);
    out += "<rect x=\"545\" y=\"" + detail::svg_num(ly) + "\" width=\"10\" height=\"10\" fill=\"" +
           detail::series_color(si) + "\"/>\n";
    out += "<text x=\"560\" y=\"" + detail::svg_num(ly + 9) + "\">" + s.name + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// One bar per labeled value.
inline std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                                 const std::vector<double>& values) {
  if (labels.empty() || labels.size() != values.size())
    throw ContractViolation("svg_bar_chart: need matching non-empty labels and values");
  double hi = 0.0;
  for (double v : values) hi = std::max(hi, v);
  if (hi < 1e-12) hi = 1.0;

  detail::ChartFrame f;
  std::string out;
  detail::svg_open(out, title);
  detail::svg_axes(out, f, 0.0, hi);
  const double slot = f.w / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double bw = slot * 0.6;
    const double bx = f.x0 + slot * (static_cast<double>(i) + 0.2);
    const double ty = values[i] / hi;
    out += "<rect x=\"" + detail::svg_num(bx) + "\" y=\"" + detail::svg_num(f.y(ty)) +
           "\" width=\"" + detail::svg_num(bw) + "\" height=\"" +
           detail::svg_num(f.h * ty) + "\" fill=\"" + detail::series_color(i % 3) + "\"/>\n";
    out += "<text x=\"" + detail::svg_num(bx + bw / 2) + "\" y=\"" +
           detail::svg_num(f.y0 + f.h + 16) + "\" text-anchor=\"middle\" font-size=\"10\">" +
           labels[i] + "</text>\n";
    out += "<text x=\"" + detail::svg_num(bx + bw / 2) + "\" y=\"" +
           detail::svg_num(f.y(ty) - 4) + "\" text-anchor=\"middle\" font-size=\"10\">" +
           detail::svg_num(values[i]) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mpgvae
