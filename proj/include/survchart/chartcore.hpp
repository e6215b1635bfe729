#pragma once

#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "survchart/csv.hpp"

namespace survchart {

enum class ChartKind { bernoulli, bernoulli_lower, bk, bk_lower, cgr };

inline bool is_lower_chart(ChartKind k) {
  return k == ChartKind::bernoulli_lower || k == ChartKind::bk_lower;
}

inline std::string chart_kind_name(ChartKind k) {
  switch (k) {
    case ChartKind::bernoulli: return "bernoulli";
    case ChartKind::bernoulli_lower: return "bernoulli_lower";
    case ChartKind::bk: return "bk";
    case ChartKind::bk_lower: return "bk_lower";
    case ChartKind::cgr: return "cgr";
  }
  throw std::logic_error("unreachable");
}

inline ChartKind chart_kind_from_name(const std::string& s) {
  if (s == "bernoulli") return ChartKind::bernoulli;
  if (s == "bernoulli_lower") return ChartKind::bernoulli_lower;
  if (s == "bk") return ChartKind::bk;
  if (s == "bk_lower") return ChartKind::bk_lower;
  if (s == "cgr") return ChartKind::cgr;
  throw std::invalid_argument("unknown chart kind '" + s + "'");
}

struct ChartPoint {
  double t = 0.0;
  double value = 0.0;

  bool operator==(const ChartPoint&) const = default;
};

// A monitored statistic over time for one unit. The chart starts at value 0
// at start_time; points hold its value at evaluation times (strictly
// increasing). theta_hat carries the running MLE trace for CGR charts only.
struct Chart {
  ChartKind kind = ChartKind::bernoulli;
  double start_time = 0.0;
  std::vector<ChartPoint> points;
  std::vector<double> theta_hat; // parallel to points for cgr, else empty
  std::optional<double> h;       // control limit used during construction

  bool operator==(const Chart&) const = default;
};

// Upper and lower halves of a two-sided chart share the same time grid.
struct ChartPair {
  Chart upper;
  Chart lower;
};

namespace chart_detail {
inline std::optional<std::size_t> find_col(const std::vector<std::string>& header,
                                           const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}
} // namespace chart_detail

inline void check_h_sign(ChartKind kind, double h) {
  if (is_lower_chart(kind)) {
    if (!(h < 0)) throw std::invalid_argument("control limit must be negative for a lower chart");
  } else {
    if (!(h > 0)) throw std::invalid_argument("control limit must be positive for an upper chart");
  }
}

// Time from start_time until the chart first crosses h (value >= h for
// upper charts, <= h for lower), +inf when it never does.
inline double runlength(const Chart& c, double h) {
  check_h_sign(c.kind, h);
  bool lower = is_lower_chart(c.kind);
  for (const auto& pt : c.points) {
    if (lower ? pt.value <= h : pt.value >= h) return pt.t - c.start_time;
  }
  return std::numeric_limits<double>::infinity();
}

inline double runlength(const ChartPair& pair, double h_upper, double h_lower) {
  return std::min(runlength(pair.upper, h_upper), runlength(pair.lower, h_lower));
}

// Extreme chart value over the window [t0, t1]: max for upper charts, min
// for lower ones. The implicit starting value 0 counts whenever the window
// is non-degenerate, so a chart with no points in the window yields 0.
inline double chart_max(const Chart& c, double t0, double t1) {
  if (!(t0 <= t1)) throw std::invalid_argument("chart_max: empty window");
  bool lower = is_lower_chart(c.kind);
  double best = 0.0;
  for (const auto& pt : c.points) {
    if (pt.t < t0 || pt.t > t1) continue;
    best = lower ? std::min(best, pt.value) : std::max(best, pt.value);
  }
  return best;
}

// ---------------------------------------------------------------------------
// serialization

inline nlohmann::ordered_json chart_to_json(const Chart& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["kind"] = chart_kind_name(c.kind);
  j["start_time"] = c.start_time;
  if (c.h) j["h"] = *c.h;
  auto pts = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    nlohmann::ordered_json p = nlohmann::ordered_json::object();
    p["t"] = c.points[i].t;
    p["value"] = c.points[i].value;
    if (!c.theta_hat.empty()) p["theta_hat"] = c.theta_hat[i];
    pts.push_back(std::move(p));
  }
  j["points"] = std::move(pts);
  return j;
}

inline Chart chart_from_json(const nlohmann::ordered_json& j) {
  Chart c;
  c.kind = chart_kind_from_name(j.at("kind").get<std::string>());
  c.start_time = j.at("start_time").get<double>();
  if (j.contains("h")) c.h = j.at("h").get<double>();
  for (const auto& p : j.at("points")) {
    c.points.push_back({p.at("t").get<double>(), p.at("value").get<double>()});
    if (p.contains("theta_hat")) c.theta_hat.push_back(p.at("theta_hat").get<double>());
  }
  if (!c.theta_hat.empty() && c.theta_hat.size() != c.points.size())
    throw std::invalid_argument("chart: theta_hat must accompany every point");
  return c;
}

inline nlohmann::ordered_json chart_to_json(const ChartPair& pair) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["kind"] = "bk_twosided";
  j["upper"] = chart_to_json(pair.upper);
  j["lower"] = chart_to_json(pair.lower);
  return j;
}

// CSV form: time,value[,theta_hat]. A metadata comment line preserves chart
// kind and start time so the file can be fed back to `runlength`.
inline void chart_to_csv(const Chart& c, std::ostream& out) {
  out << "# kind=" << chart_kind_name(c.kind) << " start_time=" << csv::format_double(c.start_time);
  if (c.h) out << " h=" << csv::format_double(*c.h);
  out << '\n';
  out << "time,value";
  if (!c.theta_hat.empty()) out << ",theta_hat";
  out << '\n';
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    out << csv::format_double(c.points[i].t) << ',' << csv::format_double(c.points[i].value);
    if (!c.theta_hat.empty()) out << ',' << csv::format_double(c.theta_hat[i]);
    out << '\n';
  }
}

inline void chart_to_csv(const ChartPair& pair, std::ostream& out) {
  out << "# kind=bk_twosided start_time=" << csv::format_double(pair.upper.start_time) << '\n';
  out << "time,upper,lower\n";
  for (std::size_t i = 0; i < pair.upper.points.size(); ++i)
    out << csv::format_double(pair.upper.points[i].t) << ','
        << csv::format_double(pair.upper.points[i].value) << ','
        << csv::format_double(pair.lower.points[i].value) << '\n';
}

// Reads the CSV form back. Foreign files without the metadata comment get
// kind/start_time from the caller's defaults (start_time falls back to the
// first point's time).
inline Chart chart_from_csv(std::istream& in,
                            std::optional<ChartKind> kind_override = std::nullopt,
                            std::optional<double> start_override = std::nullopt) {
  csv::Table t = csv::read(in);
  Chart c;
  bool have_kind = false, have_start = false;
  for (const auto& comment : t.comments) {
    std::istringstream ss(comment);
    std::string tok;
    while (ss >> tok) {
      if (tok.rfind("kind=", 0) == 0) {
        c.kind = chart_kind_from_name(tok.substr(5));
        have_kind = true;
      } else if (tok.rfind("start_time=", 0) == 0) {
        c.start_time = csv::parse_double(tok.substr(11), "start_time", 1);
        have_start = true;
      } else if (tok.rfind("h=", 0) == 0) {
        c.h = csv::parse_double(tok.substr(2), "h", 1);
      }
    }
  }
  if (kind_override) {
    c.kind = *kind_override;
    have_kind = true;
  }
  if (start_override) {
    c.start_time = *start_override;
    have_start = true;
  }
  auto c_time = chart_detail::find_col(t.header, "time");
  auto c_value = chart_detail::find_col(t.header, "value");
  if (!c_time || !c_value)
    throw std::invalid_argument("chart csv: expected 'time' and 'value' columns");
  auto c_theta = chart_detail::find_col(t.header, "theta_hat");
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    c.points.push_back({csv::parse_double(row[*c_time], "time", i + 2),
                        csv::parse_double(row[*c_value], "value", i + 2)});
    if (c_theta) c.theta_hat.push_back(csv::parse_double(row[*c_theta], "theta_hat", i + 2));
  }
  if (!have_kind && c_theta) c.kind = ChartKind::cgr;
  if (!have_start && !c.points.empty()) c.start_time = c.points.front().t;
  return c;
}

} // namespace survchart
