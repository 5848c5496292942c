#pragma once

// Static log-log figures. Output depends only on (records, PlotSpec): no
// timestamps, fixed number formatting, series ordered by group value.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdlab/run_record.hpp"

namespace sgdlab {

class PlotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PlotSpec {
  std::string x_field = "temperature";
  std::string y_field = "w1_final";
  std::string group_by = "P";
  // Plotted coordinates are x * g^x_rescale_exponent and y * g^y_rescale_exponent,
  // g being the value of `rescale_field` (defaults to group_by).
  std::string rescale_field;
  double x_rescale_exponent = 0.0;
  double y_rescale_exponent = 0.0;
  bool log_x = true;
  bool log_y = true;
  std::string output_path = "plot.svg";
  std::string title;

  void validate() const {
    for (const auto* f : {&x_field, &y_field, &group_by})
      if (!is_record_field(*f)) throw PlotError("unknown record field '" + *f + "'");
    if (!rescale_field.empty() && !is_record_field(rescale_field))
      throw PlotError("unknown record field '" + rescale_field + "'");
  }
};

struct PlotPoint {
  double group = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct PlotOutput {
  std::string svg_path;
  std::string csv_path;
  std::size_t series = 0;
  std::size_t points = 0;
};

namespace detail {

inline std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* series_color(std::size_t i) {
  static const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                         "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};
  return kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
}

struct Axis {
  bool log = true;
  double lo = 0.0, hi = 1.0;  // in transformed units
  double to_unit(double v) const { return log ? std::log10(v) : v; }
};

inline Axis make_axis(const std::vector<double>& vals, bool log) {
  Axis a;
  a.log = log;
  double lo = INFINITY, hi = -INFINITY;
  for (double v : vals) {
    lo = std::min(lo, a.to_unit(v));
    hi = std::max(hi, a.to_unit(v));
  }
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = log ? 0.0 : 0.05 * (hi - lo);
  a.lo = lo - pad;
  a.hi = hi + pad;
  return a;
}

}  // namespace detail

/// Selects and rescales the points of a plot, sorted by (group, x).
inline std::vector<PlotPoint> plot_points(const std::vector<RunRecord>& records, const PlotSpec& spec) {
  spec.validate();
  const std::string& rf = spec.rescale_field.empty() ? spec.group_by : spec.rescale_field;
  std::vector<PlotPoint> pts;
  for (const auto& r : records) {
    if (r.diverged) continue;
    PlotPoint p;
    p.group = record_field(r, spec.group_by);
    const double g = record_field(r, rf);
    p.x = record_field(r, spec.x_field);
    p.y = record_field(r, spec.y_field);
    if (spec.x_rescale_exponent != 0.0) p.x *= std::pow(g, spec.x_rescale_exponent);
    if (spec.y_rescale_exponent != 0.0) p.y *= std::pow(g, spec.y_rescale_exponent);
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    if ((spec.log_x && p.x <= 0.0) || (spec.log_y && p.y <= 0.0)) continue;
    pts.push_back(p);
  }
  std::sort(pts.begin(), pts.end(), [](const PlotPoint& a, const PlotPoint& b) {
    return a.group != b.group ? a.group < b.group : (a.x != b.x ? a.x < b.x : a.y < b.y);
  });
  return pts;
}

inline std::string render_svg(const std::vector<PlotPoint>& pts, const PlotSpec& spec) {
  if (pts.empty()) throw PlotError("plot: no points left after filtering");
  constexpr double W = 640, H = 480, L = 80, R = 130, T = 40, B = 60;
  std::vector<double> xs, ys;
  for (const auto& p : pts) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  const detail::Axis ax = detail::make_axis(xs, spec.log_x), ay = detail::make_axis(ys, spec.log_y);
  auto px = [&](double v) { return L + (ax.to_unit(v) - ax.lo) / (ax.hi - ax.lo) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ay.to_unit(v) - ay.lo) / (ay.hi - ay.lo) * (H - T - B); };
  using detail::fmt;
  const char* cf = "%.2f";

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  s << "<!-- x=" << spec.x_field << " y=" << spec.y_field << " group=" << spec.group_by
    << " x_rescale=" << fmt(spec.x_rescale_exponent) << " y_rescale=" << fmt(spec.y_rescale_exponent) << " -->\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  // Ticks: decades on log axes, 5 even ticks otherwise.
  auto ticks = [](const detail::Axis& a) {
    std::vector<double> t;
    if (a.log) {
      for (double e = std::ceil(a.lo); e <= a.hi + 1e-9; e += 1.0) t.push_back(std::pow(10.0, e));
    } else {
      for (int i = 0; i <= 4; ++i) t.push_back(a.lo + (a.hi - a.lo) * i / 4.0);
    }
    return t;
  };
  s << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (double v : ticks(ax))
    s << "<line x1=\"" << fmt(px(v), cf) << "\" y1=\"" << H - B << "\" x2=\"" << fmt(px(v), cf) << "\" y2=\""
      << H - B + 5 << "\" stroke=\"black\"/><text x=\"" << fmt(px(v), cf) << "\" y=\"" << H - B + 18
      << "\" text-anchor=\"middle\">" << fmt(v, "%.3g") << "</text>\n";
  for (double v : ticks(ay))
    s << "<line x1=\"" << L - 5 << "\" y1=\"" << fmt(py(v), cf) << "\" x2=\"" << L << "\" y2=\"" << fmt(py(v), cf)
      << "\" stroke=\"black\"/><text x=\"" << L - 8 << "\" y=\"" << fmt(py(v) + 4, cf)
      << "\" text-anchor=\"end\">" << fmt(v, "%.3g") << "</text>\n";
  auto label = [&](const std::string& field, double e) {
    std::string l = field;
    if (e != 0.0) l += " * " + (spec.rescale_field.empty() ? spec.group_by : spec.rescale_field) + "^" + fmt(e);
    return detail::xml_escape(l);
  };
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
    << label(spec.x_field, spec.x_rescale_exponent) << "</text>\n";
  s << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << label(spec.y_field, spec.y_rescale_exponent) << "</text>\n";
  if (!spec.title.empty())
    s << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << detail::xml_escape(spec.title) << "</text>\n";
  s << "</g>\n";

  std::size_t series = 0;
  for (std::size_t i = 0; i < pts.size();) {
    std::size_t j = i;
    while (j < pts.size() && pts[j].group == pts[i].group) ++j;
    const char* color = detail::series_color(series);
    s << "<g class=\"series\" data-group=\"" << fmt(pts[i].group) << "\">\n";
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (std::size_t k = i; k < j; ++k) s << (k > i ? " " : "") << fmt(px(pts[k].x), cf) << ',' << fmt(py(pts[k].y), cf);
    s << "\"/>\n";
    for (std::size_t k = i; k < j; ++k)
      s << "<circle class=\"marker\" cx=\"" << fmt(px(pts[k].x), cf) << "\" cy=\"" << fmt(py(pts[k].y), cf)
        << "\" r=\"3\" fill=\"" << color << "\"><!-- " << fmt(pts[k].x, "%.9g") << ' ' << fmt(pts[k].y, "%.9g")
        << " --></circle>\n";
    const double ly = T + 14 + 16 * static_cast<double>(series);
    s << "<circle cx=\"" << W - R + 16 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << color
      << "\"/><text x=\"" << W - R + 26 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << detail::xml_escape(spec.group_by) << '=' << fmt(pts[i].group) << "</text>\n";
    s << "</g>\n";
    ++series;
    i = j;
  }
  s << "</svg>\n";
  return s.str();
}

inline void write_plot_csv(const std::vector<PlotPoint>& pts, const PlotSpec& spec, std::ostream& out) {
  out << spec.group_by << ",x,y\n";
  for (const auto& p : pts) out << detail::fmt(p.group, "%.17g") << ',' << detail::fmt(p.x, "%.17g") << ','
                                << detail::fmt(p.y, "%.17g") << '\n';
}

/// Writes the SVG to spec.output_path and the plotted table next to it with a .csv extension.
inline PlotOutput emit_loglog_svg(const std::vector<RunRecord>& records, const PlotSpec& spec) {
  if (records.empty()) throw PlotError("plot: no records");
  const auto pts = plot_points(records, spec);
  const std::string svg = render_svg(pts, spec);
  PlotOutput out;
  out.svg_path = spec.output_path;
  out.csv_path = std::filesystem::path(spec.output_path).replace_extension(".csv").string();
  out.points = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (i == 0 || pts[i].group != pts[i - 1].group) ++out.series;
  {
    std::ofstream f(out.svg_path, std::ios::binary);
    if (!f) throw PlotError("cannot write '" + out.svg_path + "'");
    f << svg;
  }
  std::ofstream c(out.csv_path, std::ios::binary);
  if (!c) throw PlotError("cannot write '" + out.csv_path + "'");
  write_plot_csv(pts, spec, c);
  return out;
}

}  // namespace sgdlab
