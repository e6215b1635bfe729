#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "survchart/chartcore.hpp"
#include "survchart/dataset.hpp"
#include "survchart/riskadjust.hpp"

namespace survchart {

namespace detail {

struct HazardRef {
  const NamedCoefs* beta;
  const CumHazard* h0;
};

inline HazardRef hazard_model_ref(const AnyModel& m) {
  if (const auto* cm = std::get_if<CoxModel>(&m)) return {&cm->coefficients, &cm->baseline};
  if (const auto* mm = std::get_if<ManualModel>(&m)) {
    if (mm->baseline) return {&mm->coefficients, &*mm->baseline};
    throw std::invalid_argument("model has no baseline cumulative hazard");
  }
  throw std::invalid_argument("chart needs a cox model or a manual model with a baseline");
}

// chronological failure times that count: observed events within the
// truncation window C from entry
inline std::vector<double> counted_failure_times(const Dataset& data, std::optional<double> C) {
  std::vector<double> f;
  for (const auto& r : data.records) {
    if (r.censorid != 1) continue;
    if (C && r.survtime > *C) continue;
    f.push_back(r.entrytime + r.survtime);
  }
  std::sort(f.begin(), f.end());
  return f;
}

// evaluation grid: the supplied inspection times augmented with every
// counted failure time up to the last of them; failure times alone
// otherwise; truncated at stoptime
inline std::vector<double> chart_grid(const std::vector<double>& failures,
                                      const std::optional<std::vector<double>>& ctimes,
                                      std::optional<double> stoptime) {
  std::vector<double> grid;
  if (ctimes && !ctimes->empty()) {
    grid = *ctimes;
    std::sort(grid.begin(), grid.end());
    double tmax = grid.back();
    for (double f : failures)
      if (f <= tmax) grid.push_back(f);
    std::sort(grid.begin(), grid.end());
  } else {
    grid = failures;
  }
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (stoptime) {
    auto it = std::upper_bound(grid.begin(), grid.end(), *stoptime);
    grid.erase(it, grid.end());
  }
  return grid;
}

} // namespace detail

struct BKSpec {
  double theta1 = 0.0; // hypothesized log hazard ratio, nonzero
  AnyModel model;
  std::optional<std::vector<double>> ctimes;
  std::optional<double> C;        // truncation of each subject's window
  std::optional<double> stoptime;
  bool twosided = false;
};

// One-sided CUSUM for a prespecified hazard ratio e^{theta1}:
//   BK(t) = max over restart times s in {0} u {failure times <= t} of
//           theta1 * N(s,t) - (e^{theta1} - 1) * Lambda(s,t)
// computed by the clamped recursion over a grid holding every counted
// failure time. theta1 < 0 mirrors to a lower chart with min(0, .).
inline Chart bk_cusum(const Dataset& data, const BKSpec& spec,
                      std::optional<double> h = std::nullopt) {
  if (!(spec.theta1 != 0.0) || !std::isfinite(spec.theta1))
    throw std::invalid_argument("bk_cusum: theta1 must be nonzero and finite");
  if (spec.C && !(*spec.C > 0)) throw std::invalid_argument("bk_cusum: C must be positive");
  detail::HazardRef mod = detail::hazard_model_ref(spec.model);
  LinearPredictor lp = LinearPredictor::resolve(*mod.beta, data);

  const bool lower = spec.theta1 < 0;
  Chart chart;
  chart.kind = lower ? ChartKind::bk_lower : ChartKind::bk;
  chart.start_time = data.records.empty() ? 0.0 : data.min_entrytime();
  if (h) {
    check_h_sign(chart.kind, *h);
    chart.h = h;
  }

  std::vector<double> failures = detail::counted_failure_times(data, spec.C);
  std::vector<double> grid = detail::chart_grid(failures, spec.ctimes, spec.stoptime);
  if (grid.empty()) return chart;

  const std::size_t n = data.records.size();
  std::vector<double> rr(n), prev_h0(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) rr[i] = std::exp(lp(data.records[i]));

  const double drift = std::exp(spec.theta1) - 1.0;
  double value = 0.0;
  std::size_t fpos = 0;
  for (double t : grid) {
    // exposure accumulated since the previous grid time, summed in record order
    double dlam = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double cur = (*mod.h0)(detail::at_risk_time(data.records[i], t, spec.C));
      dlam += rr[i] * (cur - prev_h0[i]);
      prev_h0[i] = cur;
    }
    std::size_t dn = 0;
    while (fpos < failures.size() && failures[fpos] <= t) {
      dn += failures[fpos] == t;
      ++fpos;
    }
    double inc = spec.theta1 * static_cast<double>(dn) - drift * dlam;
    value = lower ? std::min(0.0, value + inc) : std::max(0.0, value + inc);
    chart.points.push_back({t, value});
    if (h && (lower ? value <= *h : value >= *h)) break;
  }
  return chart;
}

// Upper and lower charts for |theta1| and -|theta1| on the shared grid.
// With h both sides stop at the first crossing of +h / -h.
inline ChartPair bk_cusum_twosided(const Dataset& data, const BKSpec& spec,
                                   std::optional<double> h = std::nullopt) {
  if (h && !(*h > 0))
    throw std::invalid_argument("bk_cusum_twosided: h must be positive (applied as +h/-h)");
  BKSpec up = spec;
  up.theta1 = std::abs(spec.theta1);
  up.twosided = false;
  BKSpec down = up;
  down.theta1 = -up.theta1;

  ChartPair pair{bk_cusum(data, up), bk_cusum(data, down)};
  if (h) {
    pair.upper.h = *h;
    pair.lower.h = -*h;
    std::size_t cut = pair.upper.points.size();
    for (std::size_t i = 0; i < pair.upper.points.size(); ++i) {
      if (pair.upper.points[i].value >= *h || pair.lower.points[i].value <= -*h) {
        cut = i + 1;
        break;
      }
    }
    pair.upper.points.resize(std::min(cut, pair.upper.points.size()));
    pair.lower.points.resize(std::min(cut, pair.lower.points.size()));
  }
  return pair;
}

} // namespace survchart
