#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survchart/dataset.hpp"
#include "survchart/riskadjust.hpp"

namespace survchart {

// Suggested monitoring setup derived from a baseline window: risk models,
// arrival rate, horizon and baseline failure fraction, with the usual
// defaults filled in.
struct AssistBundle {
  double theta = 0.0;
  double psi = 0.0;
  double time = 0.0;
  double alpha = 0.05;
  double maxtheta = 6.0;
  std::optional<double> followup;
  std::optional<double> p0;
  std::optional<LogisticModel> glm;
  std::optional<CoxModel> cox;
};

struct AssistOptions {
  std::vector<std::string> covariates; // empty = no risk adjustment
  std::optional<double> followup;
  std::optional<double> theta;
  std::optional<double> time;
  std::optional<double> alpha;
  std::optional<double> maxtheta;
};

namespace detail {

// Mean of the per-unit arrival-rate estimates, skipping units whose span is
// degenerate (fewer than two arrivals).
inline double pooled_arrival_rate(const Dataset& d) {
  struct Span {
    double lo = 0, hi = 0;
    std::size_t n = 0;
  };
  std::map<std::string, Span> spans;
  for (const auto& r : d.records) {
    Span& s = spans[r.unit];
    if (s.n == 0) {
      s.lo = s.hi = r.entrytime;
    } else {
      s.lo = std::min(s.lo, r.entrytime);
      s.hi = std::max(s.hi, r.entrytime);
    }
    ++s.n;
  }
  double sum = 0;
  std::size_t k = 0;
  for (const auto& [unit, s] : spans) {
    if (s.n < 2 || s.hi <= s.lo) continue;
    sum += static_cast<double>(s.n) / (s.hi - s.lo);
    ++k;
  }
  if (k == 0)
    throw std::invalid_argument("parameter_assist: cannot estimate an arrival rate (every unit "
                                "has fewer than two distinct arrival times)");
  return sum / static_cast<double>(k);
}

} // namespace detail

inline AssistBundle parameter_assist(const Dataset& baseline, const Dataset& data,
                                     const AssistOptions& opts = {}) {
  if (baseline.records.empty())
    throw std::invalid_argument("parameter_assist: baseline data is empty");
  if (opts.followup && !(*opts.followup > 0))
    throw std::invalid_argument("parameter_assist: followup must be positive");
  if (opts.alpha && !(*opts.alpha > 0 && *opts.alpha < 1))
    throw std::invalid_argument("parameter_assist: alpha must be in (0,1)");
  for (const auto& name : opts.covariates) {
    if (std::find(baseline.covariate_names.begin(), baseline.covariate_names.end(), name) ==
        baseline.covariate_names.end())
      throw std::invalid_argument("parameter_assist: covariate '" + name +
                                  "' not present in the baseline data");
    if (std::find(data.covariate_names.begin(), data.covariate_names.end(), name) ==
        data.covariate_names.end())
      throw std::invalid_argument("parameter_assist: covariate '" + name +
                                  "' not present in the monitored data");
  }

  AssistBundle b;
  b.theta = opts.theta ? *opts.theta : std::log(2.0);
  b.alpha = opts.alpha ? *opts.alpha : 0.05;
  b.maxtheta = opts.maxtheta ? *opts.maxtheta : 6.0;
  b.followup = opts.followup;
  b.time = opts.time ? *opts.time : baseline.max_entrytime();
  b.psi = detail::pooled_arrival_rate(baseline);

  if (b.followup) {
    std::size_t failures = 0;
    for (const auto& r : baseline.records)
      failures += r.survtime <= *b.followup && r.censorid == 1;
    b.p0 = static_cast<double>(failures) / static_cast<double>(baseline.records.size());
  }

  if (!opts.covariates.empty()) {
    b.cox = fit_coxph(baseline, opts.covariates);
    if (b.followup) b.glm = fit_logistic(baseline, opts.covariates, *b.followup);
  }
  return b;
}

} // namespace survchart
