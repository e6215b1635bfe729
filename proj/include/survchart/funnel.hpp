#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "survchart/dataset.hpp"
#include "survchart/riskadjust.hpp"
#include "survchart/stats.hpp"

namespace survchart {

// Exact-binomial-free funnel limits: normal approximation around p0 with
// sd sqrt(p0 (1-p0) / n), clamped to [0, 1].
struct FunnelBounds {
  double lower = 0.0;
  double upper = 1.0;
};

inline FunnelBounds funnel_bounds(double p0, double n, double conflev) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("funnel_bounds: p0 must be in (0,1)");
  if (!(n > 0)) throw std::invalid_argument("funnel_bounds: n must be positive");
  if (!(conflev > 0.0 && conflev < 1.0))
    throw std::invalid_argument("funnel_bounds: conflev must be in (0,1)");
  double z = -normal_quantile((1.0 - conflev) / 2.0);
  double half = z * std::sqrt(p0 * (1.0 - p0) / n);
  return {std::max(0.0, p0 - half), std::min(1.0, p0 + half)};
}

struct FunnelRow {
  std::string unit;
  double observed = 0.0;  // failures within the follow-up window
  double expected = 0.0;  // sum of model probabilities (or n * p0)
  std::size_t numtotal = 0;
  double p = 0.0;         // (observed / expected) * p0, risk-adjusted proportion
  // classification per confidence level: "worse" / "in-control" / "better"
  std::vector<std::string> classification;
};

struct FunnelSummary {
  double p0 = 0.0;
  std::vector<double> conflevs;
  std::vector<FunnelRow> rows;
};

// Funnel comparison of units at chronological time `ctime`. Patients count
// only when their follow-up window closed by then (entrytime + followup <=
// ctime). The outcome is failure within `followup` from entry. With a
// logistic risk model the expected count is the sum of predicted
// probabilities; otherwise it is n * p0.
inline FunnelSummary funnel_summary(const Dataset& data,
                                    const std::optional<LogisticModel>& model, double followup,
                                    std::optional<double> ctime = std::nullopt,
                                    std::optional<double> p0_override = std::nullopt,
                                    std::vector<double> conflevs = {0.95, 0.99}) {
  if (!(followup > 0)) throw std::invalid_argument("funnel_summary: followup must be positive");
  if (conflevs.empty()) throw std::invalid_argument("funnel_summary: no confidence levels");
  for (double c : conflevs)
    if (!(c > 0 && c < 1))
      throw std::invalid_argument("funnel_summary: confidence levels must be in (0,1)");

  std::optional<LinearPredictor> lp;
  if (model) lp = LinearPredictor::resolve(model->coefficients, data);

  std::vector<std::size_t> included;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    if (ctime && data.records[i].entrytime + followup > *ctime) continue;
    included.push_back(i);
  }
  if (included.empty())
    throw std::invalid_argument("funnel_summary: no patients with a closed follow-up window");

  std::size_t pooled_failures = 0;
  for (std::size_t i : included) {
    const auto& r = data.records[i];
    pooled_failures += (r.survtime <= followup && r.censorid == 1);
  }
  double p0 = p0_override ? *p0_override
                          : static_cast<double>(pooled_failures) / included.size();
  if (!(p0 > 0.0 && p0 < 1.0))
    throw std::invalid_argument("funnel_summary: baseline proportion must be in (0,1); got " +
                                std::to_string(p0));

  FunnelSummary out;
  out.p0 = p0;
  out.conflevs = conflevs;
  for (const auto& unit : data.units()) {
    FunnelRow row;
    row.unit = unit;
    long double expected = 0.0L;
    for (std::size_t i : included) {
      const auto& r = data.records[i];
      if (r.unit != unit) continue;
      ++row.numtotal;
      row.observed += (r.survtime <= followup && r.censorid == 1);
      if (model) expected += detail::sigmoid(model->intercept + (*lp)(r));
    }
    if (row.numtotal == 0) continue; // unit fully outside the window
    if (model) {
      row.expected = static_cast<double>(expected);
      if (row.expected <= 0.0 && row.observed > 0)
        throw std::invalid_argument("funnel_summary: unit '" + unit +
                                    "' has zero expected count but observed failures");
      row.p = row.expected > 0.0 ? row.observed / row.expected * p0 : 0.0;
    } else {
      row.expected = row.numtotal * p0;
      row.p = row.observed / static_cast<double>(row.numtotal);
    }
    for (double conflev : conflevs) {
      FunnelBounds b = funnel_bounds(p0, static_cast<double>(row.numtotal), conflev);
      if (row.p > b.upper)
        row.classification.push_back("worse");
      else if (row.p < b.lower)
        row.classification.push_back("better");
      else
        row.classification.push_back("in-control");
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline std::string format_conflev(double c) { return csv::format_double(c); }

inline void funnel_to_csv(const FunnelSummary& s, std::ostream& out) {
  out << "unit,observed,expected,numtotal,p";
  for (double c : s.conflevs) out << ',' << format_conflev(c);
  out << '\n';
  for (const auto& row : s.rows) {
    out << row.unit << ',' << csv::format_double(row.observed) << ','
        << csv::format_double(row.expected) << ',' << row.numtotal << ','
        << csv::format_double(row.p);
    for (const auto& cls : row.classification) out << ',' << cls;
    out << '\n';
  }
}

// Plot-ready data: one (n, p) point per unit plus the bound curves sampled
// over the observed volume range.
inline void funnel_plot_data_csv(const FunnelSummary& s, std::ostream& out,
                                 std::size_t curve_samples = 256) {
  out << "type,unit,conflev,n,value\n";
  std::size_t max_n = 1;
  for (const auto& row : s.rows) max_n = std::max(max_n, row.numtotal);
  for (const auto& row : s.rows)
    out << "point," << row.unit << ",," << row.numtotal << ',' << csv::format_double(row.p)
        << '\n';
  for (double conflev : s.conflevs) {
    for (std::size_t k = 0; k < curve_samples; ++k) {
      double n = 1.0 + (static_cast<double>(max_n) - 1.0) * k / (curve_samples - 1);
      FunnelBounds b = funnel_bounds(s.p0, n, conflev);
      out << "lower,," << format_conflev(conflev) << ',' << csv::format_double(n) << ','
          << csv::format_double(b.lower) << '\n';
      out << "upper,," << format_conflev(conflev) << ',' << csv::format_double(n) << ','
          << csv::format_double(b.upper) << '\n';
    }
  }
}

} // namespace survchart
