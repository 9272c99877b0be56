#pragma once

// Minimal static SVG charts: trajectory overlays, CDF curves and bar charts.

#include "ftin/core.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace ftin::plot {

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool step = false;  // draw as a right-continuous staircase
};

struct Axes {
  std::string title, xlabel, ylabel;
  bool equal_aspect = false;
  std::vector<Series> series;
};

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

// Renders one panel into the box (x0, y0, w, h).
inline std::string render_axes(const Axes& ax, double x0, double y0, double w, double h) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : ax.series) {
    for (double v : s.x) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax - xmin < 1e-12) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-12) ymin -= 0.5, ymax += 0.5;
  const double ml = 60, mr = 20, mt = 30, mb = 45;
  const double pw = w - ml - mr, ph = h - mt - mb;
  double sx = pw / (xmax - xmin), sy = ph / (ymax - ymin);
  if (ax.equal_aspect) {
    const double s = std::min(sx, sy);
    xmin -= (pw / s - (xmax - xmin)) / 2;
    ymin -= (ph / s - (ymax - ymin)) / 2;
    xmax = xmin + pw / s;
    ymax = ymin + ph / s;
    sx = sy = s;
  }
  auto X = [&](double v) { return x0 + ml + (v - xmin) * sx; };
  auto Y = [&](double v) { return y0 + mt + ph - (v - ymin) * sy; };

  std::string out;
  out += "<rect x=\"" + fmt(x0 + ml) + "\" y=\"" + fmt(y0 + mt) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 4.0, yv = ymin + (ymax - ymin) * k / 4.0;
    out += "<text x=\"" + fmt(X(xv)) + "\" y=\"" + fmt(y0 + mt + ph + 16) + "\" font-size=\"11\" text-anchor=\"middle\">" +
           fmt(xv) + "</text>\n";
    out += "<text x=\"" + fmt(x0 + ml - 6) + "\" y=\"" + fmt(Y(yv) + 4) + "\" font-size=\"11\" text-anchor=\"end\">" + fmt(yv) +
           "</text>\n";
  }
  out += "<text x=\"" + fmt(x0 + ml + pw / 2) + "\" y=\"" + fmt(y0 + 18) + "\" font-size=\"14\" text-anchor=\"middle\">" +
         escape(ax.title) + "</text>\n";
  out += "<text x=\"" + fmt(x0 + ml + pw / 2) + "\" y=\"" + fmt(y0 + h - 8) + "\" font-size=\"12\" text-anchor=\"middle\">" +
         escape(ax.xlabel) + "</text>\n";
  out += "<text x=\"" + fmt(x0 + 14) + "\" y=\"" + fmt(y0 + mt + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 " +
         fmt(x0 + 14) + " " + fmt(y0 + mt + ph / 2) + ")\">" + escape(ax.ylabel) + "</text>\n";
  for (std::size_t i = 0; i < ax.series.size(); ++i) {
    const auto& s = ax.series[i];
    std::string pts;
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (s.step && k > 0) pts += fmt(X(s.x[k])) + "," + fmt(Y(s.y[k - 1])) + " ";
      pts += fmt(X(s.x[k])) + "," + fmt(Y(s.y[k])) + " ";
    }
    out += "<polyline fill=\"none\" stroke=\"" + std::string(palette(i)) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    const double ly = y0 + mt + 14 + 16 * static_cast<double>(i);
    out += "<line x1=\"" + fmt(x0 + ml + 8) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" + fmt(x0 + ml + 28) + "\" y2=\"" + fmt(ly - 4) +
           "\" stroke=\"" + palette(i) + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt(x0 + ml + 32) + "\" y=\"" + fmt(ly) + "\" font-size=\"11\">" + escape(s.label) + "</text>\n";
  }
  return out;
}

// Panels laid out left to right.
inline void write_svg(const std::filesystem::path& path, const std::vector<Axes>& panels, double panel_w = 480, double panel_h = 400) {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(panel_w * static_cast<double>(panels.size())) +
                    "\" height=\"" + fmt(panel_h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < panels.size(); ++i) out += render_axes(panels[i], panel_w * static_cast<double>(i), 0, panel_w, panel_h);
  out += "</svg>\n";
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << out;
}

}  // namespace ftin::plot
