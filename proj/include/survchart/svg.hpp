#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "survchart/chartcore.hpp"

namespace survchart {
namespace svg_detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Frame {
  static constexpr double W = 800, H = 450;
  static constexpr double L = 62, R = 18, T = 34, B = 46;
  double x0, x1, y0, y1;

  double px(double x) const { return L + (x - x0) / (x1 - x0) * (W - L - R); }
  double py(double y) const { return H - B - (y - y0) / (y1 - y0) * (H - T - B); }
};

inline Frame make_frame(double tmin, double tmax, double vmin, double vmax) {
  if (tmax <= tmin) tmax = tmin + 1.0;
  vmin = std::min(vmin, 0.0);
  vmax = std::max(vmax, 0.0);
  double pad = 0.05 * (vmax - vmin);
  if (pad <= 0) pad = 1.0;
  return Frame{tmin, tmax, vmin - pad, vmax + pad};
}

inline void axes(std::string& s, const Frame& f, const std::string& title) {
  s += "<rect x='0' y='0' width='800' height='450' fill='white'/>\n";
  for (int i = 0; i <= 5; ++i) {
    double xv = f.x0 + (f.x1 - f.x0) * i / 5.0;
    double yv = f.y0 + (f.y1 - f.y0) * i / 5.0;
    double xp = f.px(xv), yp = f.py(yv);
    s += "<line x1='" + fmt(xp) + "' y1='" + fmt(Frame::H - Frame::B) + "' x2='" + fmt(xp) +
         "' y2='" + fmt(Frame::T) + "' stroke='#eee'/>\n";
    s += "<line x1='" + fmt(Frame::L) + "' y1='" + fmt(yp) + "' x2='" +
         fmt(Frame::W - Frame::R) + "' y2='" + fmt(yp) + "' stroke='#eee'/>\n";
    s += "<text x='" + fmt(xp) + "' y='" + fmt(Frame::H - Frame::B + 18) +
         "' font-size='12' text-anchor='middle' fill='#444'>" + fmt(xv) + "</text>\n";
    s += "<text x='" + fmt(Frame::L - 8) + "' y='" + fmt(yp + 4) +
         "' font-size='12' text-anchor='end' fill='#444'>" + fmt(yv) + "</text>\n";
  }
  s += "<line x1='" + fmt(Frame::L) + "' y1='" + fmt(Frame::H - Frame::B) + "' x2='" +
       fmt(Frame::W - Frame::R) + "' y2='" + fmt(Frame::H - Frame::B) + "' stroke='#333'/>\n";
  s += "<line x1='" + fmt(Frame::L) + "' y1='" + fmt(Frame::H - Frame::B) + "' x2='" +
       fmt(Frame::L) + "' y2='" + fmt(Frame::T) + "' stroke='#333'/>\n";
  s += "<text x='" + fmt((Frame::L + Frame::W - Frame::R) / 2) + "' y='" +
       fmt(Frame::H - 10) + "' font-size='13' text-anchor='middle' fill='#222'>time</text>\n";
  s += "<text x='" + fmt(Frame::W / 2) + "' y='20' font-size='15' text-anchor='middle' "
       "fill='#111'>" + title + "</text>\n";
}

inline void polyline(std::string& s, const Frame& f, double start, const std::vector<ChartPoint>& pts,
                     const char* color) {
  std::string d = "M" + fmt(f.px(start)) + " " + fmt(f.py(0.0));
  for (const auto& p : pts) d += " L" + fmt(f.px(p.t)) + " " + fmt(f.py(p.value));
  s += "<path d='" + d + "' fill='none' stroke='";
  s += color;
  s += "' stroke-width='1.6'/>\n";
}

inline void hline(std::string& s, const Frame& f, double h) {
  double yp = f.py(h);
  s += "<line x1='" + fmt(Frame::L) + "' y1='" + fmt(yp) + "' x2='" + fmt(Frame::W - Frame::R) +
       "' y2='" + fmt(yp) + "' stroke='#c0392b' stroke-dasharray='6 4'/>\n";
  s += "<text x='" + fmt(Frame::W - Frame::R - 4) + "' y='" + fmt(yp - 5) +
       "' font-size='12' text-anchor='end' fill='#c0392b'>h = " + fmt(h) + "</text>\n";
}

} // namespace svg_detail

inline std::string chart_svg(const Chart& chart, std::optional<double> h = std::nullopt) {
  using namespace svg_detail;
  if (!h) h = chart.h;
  double tmax = chart.start_time, vmin = 0, vmax = 0;
  for (const auto& p : chart.points) {
    tmax = std::max(tmax, p.t);
    vmin = std::min(vmin, p.value);
    vmax = std::max(vmax, p.value);
  }
  if (h) {
    vmin = std::min(vmin, *h);
    vmax = std::max(vmax, *h);
  }
  Frame f = make_frame(chart.start_time, tmax, vmin, vmax);
  std::string s = "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 800 450' "
                  "font-family='sans-serif'>\n";
  axes(s, f, chart_kind_name(chart.kind) + std::string(" chart"));
  polyline(s, f, chart.start_time, chart.points,
           is_lower_chart(chart.kind) ? "#b03a2e" : "#2e6da4");
  if (h) hline(s, f, *h);
  s += "</svg>\n";
  return s;
}

inline std::string chart_svg(const ChartPair& pair, std::optional<double> h = std::nullopt) {
  using namespace svg_detail;
  std::optional<double> hu = h ? h : pair.upper.h;
  std::optional<double> hl = h ? std::optional<double>(-*h) : pair.lower.h;
  double tmax = pair.upper.start_time, vmin = 0, vmax = 0;
  for (const Chart* c : {&pair.upper, &pair.lower})
    for (const auto& p : c->points) {
      tmax = std::max(tmax, p.t);
      vmin = std::min(vmin, p.value);
      vmax = std::max(vmax, p.value);
    }
  if (hu) vmax = std::max(vmax, *hu);
  if (hl) vmin = std::min(vmin, *hl);
  Frame f = make_frame(pair.upper.start_time, tmax, vmin, vmax);
  std::string s = "<svg xmlns='http://www.w3.org/2000/svg' viewBox='0 0 800 450' "
                  "font-family='sans-serif'>\n";
  axes(s, f, "two-sided bk chart");
  polyline(s, f, pair.upper.start_time, pair.upper.points, "#2e6da4");
  polyline(s, f, pair.lower.start_time, pair.lower.points, "#b03a2e");
  if (hu) hline(s, f, *hu);
  if (hl) hline(s, f, *hl);
  s += "</svg>\n";
  return s;
}

} // namespace survchart
