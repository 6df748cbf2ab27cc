#pragma once

// Minimal deterministic SVG emission for the report plots: line charts,
// grouped bar charts, and heatmaps. No plotting dependency; identical inputs
// produce identical bytes, so rendered reports can be golden-tested.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lenslab/common.hpp"

namespace lenslab {

// 256-entry viridis ramp (8-bit sRGB hex)
inline std::span<const std::string_view> color_ramp() {
  static constexpr std::string_view ramp[] = {
      "#440154", "#440256", "#450457", "#450559", "#46075a", "#46085c", "#460a5d", "#460b5e",
      "#470d60", "#470e61", "#471063", "#471164", "#471365", "#481467", "#481668", "#481769",
      "#48186a", "#481a6c", "#481b6d", "#481c6e", "#481d6f", "#481f70", "#482071", "#482173",
      "#482374", "#482475", "#482576", "#482677", "#482878", "#482979", "#472a7a", "#472c7a",
      "#472d7b", "#472e7c", "#472f7d", "#46307e", "#46327e", "#46337f", "#463480", "#453581",
      "#453781", "#453882", "#443983", "#443a83", "#443b84", "#433d84", "#433e85", "#423f85",
      "#424086", "#424186", "#414287", "#414487", "#404588", "#404688", "#3f4788", "#3f4889",
      "#3e4989", "#3e4a89", "#3e4c8a", "#3d4d8a", "#3d4e8a", "#3c4f8a", "#3c508b", "#3b518b",
      "#3b528b", "#3a538b", "#3a548c", "#39558c", "#39568c", "#38588c", "#38598c", "#375a8c",
      "#375b8d", "#365c8d", "#365d8d", "#355e8d", "#355f8d", "#34608d", "#34618d", "#33628d",
      "#33638d", "#32648e", "#32658e", "#31668e", "#31678e", "#31688e", "#30698e", "#306a8e",
      "#2f6b8e", "#2f6c8e", "#2e6d8e", "#2e6e8e", "#2e6f8e", "#2d708e", "#2d718e", "#2c718e",
      "#2c728e", "#2c738e", "#2b748e", "#2b758e", "#2a768e", "#2a778e", "#2a788e", "#29798e",
      "#297a8e", "#297b8e", "#287c8e", "#287d8e", "#277e8e", "#277f8e", "#27808e", "#26818e",
      "#26828e", "#26828e", "#25838e", "#25848e", "#25858e", "#24868e", "#24878e", "#23888e",
      "#23898e", "#238a8d", "#228b8d", "#228c8d", "#228d8d", "#218e8d", "#218f8d", "#21908d",
      "#21918c", "#20928c", "#20928c", "#20938c", "#1f948c", "#1f958b", "#1f968b", "#1f978b",
      "#1f988b", "#1f998a", "#1f9a8a", "#1e9b8a", "#1e9c89", "#1e9d89", "#1f9e89", "#1f9f88",
      "#1fa088", "#1fa188", "#1fa187", "#1fa287", "#20a386", "#20a486", "#21a585", "#21a685",
      "#22a785", "#22a884", "#23a983", "#24aa83", "#25ab82", "#25ac82", "#26ad81", "#27ad81",
      "#28ae80", "#29af7f", "#2ab07f", "#2cb17e", "#2db27d", "#2eb37c", "#2fb47c", "#31b57b",
      "#32b67a", "#34b679", "#35b779", "#37b878", "#38b977", "#3aba76", "#3bbb75", "#3dbc74",
      "#3fbc73", "#40bd72", "#42be71", "#44bf70", "#46c06f", "#48c16e", "#4ac16d", "#4cc26c",
      "#4ec36b", "#50c46a", "#52c569", "#54c568", "#56c667", "#58c765", "#5ac864", "#5cc863",
      "#5ec962", "#60ca60", "#63cb5f", "#65cb5e", "#67cc5c", "#69cd5b", "#6ccd5a", "#6ece58",
      "#70cf57", "#73d056", "#75d054", "#77d153", "#7ad151", "#7cd250", "#7fd34e", "#81d34d",
      "#84d44b", "#86d549", "#89d548", "#8bd646", "#8ed645", "#90d743", "#93d741", "#95d840",
      "#98d83e", "#9bd93c", "#9dd93b", "#a0da39", "#a2da37", "#a5db36", "#a8db34", "#aadc32",
      "#addc30", "#b0dd2f", "#b2dd2d", "#b5de2b", "#b8de29", "#bade28", "#bddf26", "#c0df25",
      "#c2df23", "#c5e021", "#c8e020", "#cae11f", "#cde11d", "#d0e11c", "#d2e21b", "#d5e21a",
      "#d8e219", "#dae319", "#dde318", "#dfe318", "#e2e418", "#e5e419", "#e7e419", "#eae51a",
      "#ece51b", "#efe51c", "#f1e51d", "#f4e61e", "#f6e620", "#f8e621", "#fbe723", "#fde725"
  };
  return {ramp, std::size(ramp)};
}

// t in [0,1] (clamped) -> ramp entry
inline std::string_view ramp_color(double t) {
  if (std::isnan(t)) t = 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const auto ramp = color_ramp();
  return ramp[static_cast<size_t>(std::lround(t * 255.0))];
}

struct Series {
  std::string label;
  std::vector<double> xs, ys;  // xs optional for bar groups (ys only)
};

struct ChartOpts {
  int width = 640;
  int height = 420;
  std::string title, x_label, y_label;
};

namespace detail {

// pixel coordinate: fixed two decimals so emitted bytes are stable
inline std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline void xml_escape_into(std::string& out, std::string_view s) {
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  xml_escape_into(out, s);
  return out;
}

// series palette (colorblind-safe-ish, fixed order)
inline constexpr std::string_view kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                                                "#66ccee", "#aa3377", "#888888"};

inline std::string_view series_color(size_t i) { return kPalette[i % std::size(kPalette)]; }

struct AxisScale {
  double lo = 0.0, hi = 1.0;      // data range
  double p0 = 0.0, p1 = 1.0;      // pixel range
  double to_px(double v) const { return p0 + (v - lo) / (hi - lo) * (p1 - p0); }
};

// round a raw step to the 1/2/5 ladder
inline double nice_step(double span, int target) {
  const double raw = span / std::max(1, target);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (raw <= m * mag * (1.0 + 1e-9)) return m * mag;
  }
  return 10.0 * mag;
}

inline std::vector<double> ticks(double lo, double hi, int target = 5) {
  const double step = nice_step(hi - lo, target);
  std::vector<double> out;
  double t = std::ceil(lo / step - 1e-9) * step;
  for (; t <= hi + step * 1e-9; t += step) out.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
  return out;
}

// widen degenerate ranges so scales stay finite
inline void pad_range(double& lo, double& hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi))) throw std::invalid_argument("non-finite data range");
  if (hi - lo < 1e-12) {
    const double pad = std::max(0.5, std::abs(lo) * 0.05);
    lo -= pad;
    hi += pad;
  }
}

inline void open_svg(std::string& o, const ChartOpts& opt) {
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) +
       "\" height=\"" + std::to_string(opt.height) + "\" viewBox=\"0 0 " +
       std::to_string(opt.width) + " " + std::to_string(opt.height) + "\">\n";
  o += "<rect width=\"" + std::to_string(opt.width) + "\" height=\"" +
       std::to_string(opt.height) + "\" fill=\"#ffffff\"/>\n";
  if (!opt.title.empty())
    o += "<text x=\"" + px(opt.width / 2.0) +
         "\" y=\"16\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\">" +
         xml_escape(opt.title) + "</text>\n";
}

inline void axis_labels(std::string& o, const ChartOpts& opt) {
  if (!opt.x_label.empty())
    o += "<text x=\"" + px(opt.width / 2.0) + "\" y=\"" + px(opt.height - 6.0) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">" +
         xml_escape(opt.x_label) + "</text>\n";
  if (!opt.y_label.empty())
    o += "<text x=\"14\" y=\"" + px(opt.height / 2.0) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\" transform=\"rotate(-90 14 " +
         px(opt.height / 2.0) + ")\">" + xml_escape(opt.y_label) + "</text>\n";
}

inline void draw_axes(std::string& o, const AxisScale& x, const AxisScale& y,
                      bool x_ticks = true) {
  o += "<line x1=\"" + px(x.p0) + "\" y1=\"" + px(y.p0) + "\" x2=\"" + px(x.p1) + "\" y2=\"" +
       px(y.p0) + "\" stroke=\"#000000\"/>\n";
  o += "<line x1=\"" + px(x.p0) + "\" y1=\"" + px(y.p0) + "\" x2=\"" + px(x.p0) + "\" y2=\"" +
       px(y.p1) + "\" stroke=\"#000000\"/>\n";
  for (double t : ticks(y.lo, y.hi)) {
    const double yy = y.to_px(t);
    o += "<line x1=\"" + px(x.p0 - 4) + "\" y1=\"" + px(yy) + "\" x2=\"" + px(x.p0) + "\" y2=\"" +
         px(yy) + "\" stroke=\"#000000\"/>\n";
    o += "<text x=\"" + px(x.p0 - 7) + "\" y=\"" + px(yy + 3.5) +
         "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">" + fmt_float(t) +
         "</text>\n";
  }
  if (!x_ticks) return;
  for (double t : ticks(x.lo, x.hi)) {
    const double xx = x.to_px(t);
    o += "<line x1=\"" + px(xx) + "\" y1=\"" + px(y.p0) + "\" x2=\"" + px(xx) + "\" y2=\"" +
         px(y.p0 + 4) + "\" stroke=\"#000000\"/>\n";
    o += "<text x=\"" + px(xx) + "\" y=\"" + px(y.p0 + 16) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">" + fmt_float(t) +
         "</text>\n";
  }
}

inline void legend(std::string& o, std::span<const Series> series, double x0, double y0) {
  double y = y0;
  for (size_t i = 0; i < series.size(); ++i) {
    if (series[i].label.empty()) continue;
    o += "<rect x=\"" + px(x0) + "\" y=\"" + px(y) +
         "\" width=\"10\" height=\"10\" fill=\"" + std::string(series_color(i)) + "\"/>\n";
    o += "<text x=\"" + px(x0 + 14) + "\" y=\"" + px(y + 9) +
         "\" font-family=\"monospace\" font-size=\"10\">" + xml_escape(series[i].label) +
         "</text>\n";
    y += 14;
  }
}

}  // namespace detail

// polyline chart; every series needs matching xs/ys of length >= 1
inline std::string svg_line_chart(const ChartOpts& opt, std::span<const Series> series) {
  if (series.empty()) throw std::invalid_argument("svg_line_chart: no series");
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& s : series) {
    if (s.xs.size() != s.ys.size() || s.xs.empty())
      throw std::invalid_argument("svg_line_chart: series \"" + s.label + "\" has bad shape");
    for (double v : s.xs) { xlo = std::min(xlo, v); xhi = std::max(xhi, v); }
    for (double v : s.ys) { ylo = std::min(ylo, v); yhi = std::max(yhi, v); }
  }
  detail::pad_range(xlo, xhi);
  detail::pad_range(ylo, yhi);
  const detail::AxisScale x{xlo, xhi, 56.0, opt.width - 16.0};
  const detail::AxisScale y{ylo, yhi, opt.height - 44.0, 28.0};
  std::string o;
  detail::open_svg(o, opt);
  detail::draw_axes(o, x, y);
  for (size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    o += "<polyline fill=\"none\" stroke=\"" + std::string(detail::series_color(i)) +
         "\" stroke-width=\"1.5\" points=\"";
    for (size_t j = 0; j < s.xs.size(); ++j) {
      if (j) o += ' ';
      o += detail::px(x.to_px(s.xs[j])) + "," + detail::px(y.to_px(s.ys[j]));
    }
    o += "\"/>\n";
  }
  detail::legend(o, series, x.p1 - 150.0, 30.0);
  detail::axis_labels(o, opt);
  o += "</svg>\n";
  return o;
}

// grouped bars: one bar per (category, group); group g supplies ys only
inline std::string svg_bar_chart(const ChartOpts& opt, std::span<const std::string> categories,
                                 std::span<const Series> groups) {
  if (categories.empty() || groups.empty())
    throw std::invalid_argument("svg_bar_chart: nothing to draw");
  for (const auto& g : groups)
    if (g.ys.size() != categories.size())
      throw std::invalid_argument("svg_bar_chart: group \"" + g.label +
                                  "\" does not cover every category");
  double ylo = 0.0, yhi = -1e300;
  for (const auto& g : groups)
    for (double v : g.ys) { ylo = std::min(ylo, v); yhi = std::max(yhi, v); }
  yhi = std::max(yhi, 0.0);
  detail::pad_range(ylo, yhi);
  const detail::AxisScale x{0.0, double(categories.size()), 56.0, opt.width - 16.0};
  const detail::AxisScale y{ylo, yhi, opt.height - 44.0, 28.0};
  std::string o;
  detail::open_svg(o, opt);
  detail::draw_axes(o, x, y, /*x_ticks=*/false);
  const double slot = (x.p1 - x.p0) / categories.size();
  const double bar = slot * 0.8 / groups.size();
  const double y0 = y.to_px(std::max(0.0, ylo));
  for (size_t c = 0; c < categories.size(); ++c) {
    for (size_t g = 0; g < groups.size(); ++g) {
      const double v = groups[g].ys[c];
      const double xx = x.p0 + slot * c + slot * 0.1 + bar * g;
      const double yy = y.to_px(v);
      o += "<rect x=\"" + detail::px(xx) + "\" y=\"" + detail::px(std::min(yy, y0)) +
           "\" width=\"" + detail::px(bar) + "\" height=\"" + detail::px(std::abs(y0 - yy)) +
           "\" fill=\"" + std::string(detail::series_color(g)) + "\"/>\n";
    }
    o += "<text x=\"" + detail::px(x.p0 + slot * (c + 0.5)) + "\" y=\"" +
         detail::px(y.p0 + 16) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">" +
         detail::xml_escape(categories[c]) + "</text>\n";
  }
  detail::legend(o, groups, x.p1 - 150.0, 30.0);
  detail::axis_labels(o, opt);
  o += "</svg>\n";
  return o;
}

// cell (r, c) colored by the ramp over [min, max]; row 0 drawn at the top
inline std::string svg_heatmap(const ChartOpts& opt, const Mat<double>& m) {
  if (m.rows < 1 || m.cols < 1) throw std::invalid_argument("svg_heatmap: empty matrix");
  double lo = 1e300, hi = -1e300;
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) { lo = std::min(lo, m.at(r, c)); hi = std::max(hi, m.at(r, c)); }
  detail::pad_range(lo, hi);
  const double x0 = 56.0, x1 = opt.width - 76.0, y0 = 28.0, y1 = opt.height - 44.0;
  const double cw = (x1 - x0) / m.cols, ch = (y1 - y0) / m.rows;
  std::string o;
  detail::open_svg(o, opt);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) {
      const double t = (m.at(r, c) - lo) / (hi - lo);
      o += "<rect x=\"" + detail::px(x0 + cw * c) + "\" y=\"" + detail::px(y0 + ch * r) +
           "\" width=\"" + detail::px(cw) + "\" height=\"" + detail::px(ch) + "\" fill=\"" +
           std::string(ramp_color(t)) + "\"/>\n";
    }
  // color-bar legend: 64 slabs plus range labels
  const double bx = opt.width - 60.0, bw = 14.0;
  for (int i = 0; i < 64; ++i) {
    const double t = (63 - i) / 63.0;
    o += "<rect x=\"" + detail::px(bx) + "\" y=\"" + detail::px(y0 + (y1 - y0) * i / 64.0) +
         "\" width=\"" + detail::px(bw) + "\" height=\"" + detail::px((y1 - y0) / 64.0 + 0.5) +
         "\" fill=\"" + std::string(ramp_color(t)) + "\"/>\n";
  }
  o += "<text x=\"" + detail::px(bx + bw + 4) + "\" y=\"" + detail::px(y0 + 8) +
       "\" font-family=\"monospace\" font-size=\"10\">" + fmt_float(hi) + "</text>\n";
  o += "<text x=\"" + detail::px(bx + bw + 4) + "\" y=\"" + detail::px(y1) +
       "\" font-family=\"monospace\" font-size=\"10\">" + fmt_float(lo) + "</text>\n";
  detail::axis_labels(o, opt);
  o += "</svg>\n";
  return o;
}

}  // namespace lenslab
