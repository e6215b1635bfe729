#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "survchart/chartcore.hpp"
#include "survchart/dataset.hpp"
#include "survchart/riskadjust.hpp"

namespace survchart {

// Parametrizations, in the order they are resolved:
//   (1) risk model + theta      -- per-subject baseline probabilities
//   (2) p0 + theta              -- constant baseline probability
//   (3) p0 + p1                 -- theta implied by the odds ratio
struct BernoulliSpec {
  std::optional<AnyModel> model; // logistic, or manual with an intercept
  std::optional<double> theta;
  std::optional<double> p0;
  std::optional<double> p1;
  std::optional<double> followup;
};

namespace detail {

inline void validate_bernoulli_spec(const BernoulliSpec& s) {
  if (s.model && s.p0)
    throw std::invalid_argument("bernoulli: give a risk model or a fixed p0, not both");
  if (!s.model && !s.p0)
    throw std::invalid_argument("bernoulli: needs a risk model or a fixed p0");
  if (s.p0 && !(*s.p0 > 0.0 && *s.p0 < 1.0))
    throw std::invalid_argument("bernoulli: p0 must be in (0,1)");
  if (s.p1) {
    if (!s.p0) throw std::invalid_argument("bernoulli: p1 requires a fixed p0");
    if (s.theta) throw std::invalid_argument("bernoulli: give theta or p1, not both");
    if (!(*s.p1 > 0.0 && *s.p1 < 1.0))
      throw std::invalid_argument("bernoulli: p1 must be in (0,1)");
  } else if (!s.theta) {
    throw std::invalid_argument("bernoulli: needs theta (or p0/p1)");
  }
  if (s.theta && !std::isfinite(*s.theta))
    throw std::invalid_argument("bernoulli: theta must be finite");
  if (s.model && !std::holds_alternative<LogisticModel>(*s.model) &&
      !(std::holds_alternative<ManualModel>(*s.model) &&
        std::get<ManualModel>(*s.model).intercept))
    throw std::invalid_argument("bernoulli: model must be logistic or manual with an intercept");
}

inline double bernoulli_theta(const BernoulliSpec& s) {
  if (s.theta) return *s.theta;
  // odds-ratio form: theta = log( p1 (1-p0) / (p0 (1-p1)) )
  return std::log(*s.p1 * (1.0 - *s.p0) / (*s.p0 * (1.0 - *s.p1)));
}

} // namespace detail

// Log-likelihood ratio increment for one binary outcome with baseline
// failure probability q: W = x*theta + log(1 / (1 - q + e^theta q)).
inline double bernoulli_weight(const BernoulliSpec& spec, bool failure,
                               std::optional<double> q = std::nullopt) {
  detail::validate_bernoulli_spec(spec);
  double prob = q ? *q : (spec.p0 ? *spec.p0 : 0.0);
  if (!q && spec.model)
    throw std::invalid_argument("bernoulli_weight: model parametrization needs a probability");
  if (!(prob > 0.0 && prob < 1.0))
    throw std::invalid_argument("bernoulli_weight: probability must be in (0,1)");
  double theta = detail::bernoulli_theta(spec);
  double w = std::log(1.0 / (1.0 - prob + std::exp(theta) * prob));
  if (failure) w += theta;
  return w;
}

// Risk-adjusted Bernoulli CUSUM. Outcomes are failure-within-followup,
// one chart step per patient at entrytime + followup, in entry order.
// S_n = max(0, S_{n-1} + W_n) for theta > 0, the min(0, .) mirror image for
// theta < 0.
inline Chart bernoulli_cusum(const Dataset& data, const BernoulliSpec& spec,
                             std::optional<double> stoptime = std::nullopt,
                             std::optional<double> h = std::nullopt) {
  detail::validate_bernoulli_spec(spec);
  double theta = detail::bernoulli_theta(spec);

  double followup = 0.0;
  if (spec.followup) {
    followup = *spec.followup;
  } else if (spec.model && std::holds_alternative<LogisticModel>(*spec.model)) {
    followup = std::get<LogisticModel>(*spec.model).followup;
  } else {
    throw std::invalid_argument("bernoulli_cusum: follow-up window required");
  }
  if (!(followup > 0)) throw std::invalid_argument("bernoulli_cusum: followup must be positive");

  // per-record probability source, resolved once
  double intercept = 0.0;
  LinearPredictor lp;
  if (spec.model) {
    if (const auto* glm = std::get_if<LogisticModel>(&*spec.model)) {
      intercept = glm->intercept;
      lp = LinearPredictor::resolve(glm->coefficients, data);
    } else {
      const auto& mm = std::get<ManualModel>(*spec.model);
      intercept = *mm.intercept;
      lp = LinearPredictor::resolve(mm.coefficients, data);
    }
  }

  Chart chart;
  chart.kind = theta < 0 ? ChartKind::bernoulli_lower : ChartKind::bernoulli;
  chart.start_time = data.records.empty() ? 0.0 : data.min_entrytime();
  if (h) {
    check_h_sign(chart.kind, *h);
    chart.h = h;
  }

  // patients whose outcome is still unknown make the chart undefined
  std::vector<std::size_t> indeterminate;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.survtime < followup && r.censorid == 0) indeterminate.push_back(i);
  }
  if (!indeterminate.empty()) {
    std::string msg = "bernoulli_cusum: outcome indeterminate (censored before followup) for " +
                      std::to_string(indeterminate.size()) + " record(s):";
    for (std::size_t k = 0; k < indeterminate.size() && k < 10; ++k)
      msg += " " + std::to_string(indeterminate[k] + 1);
    if (indeterminate.size() > 10) msg += " ...";
    throw std::invalid_argument(msg);
  }

  const double etheta = std::exp(theta);
  double s = 0.0;
  double pending_time = 0.0;
  bool pending = false;
  bool crossed = false;
  auto flush = [&]() {
    if (!pending) return;
    chart.points.push_back({pending_time, s});
    pending = false;
    if (h && (theta < 0 ? s <= *h : s >= *h)) crossed = true;
  };

  for (std::size_t i : data.order_by_entry()) {
    const auto& r = data.records[i];
    double t = r.entrytime + followup;
    if (stoptime && t > *stoptime) continue;
    if (pending && t != pending_time) {
      flush();
      if (crossed) break;
    }
    bool x = r.survtime <= followup && r.censorid == 1;
    double q = spec.p0 ? *spec.p0 : detail::sigmoid(intercept + lp(r));
    double w = std::log(1.0 / (1.0 - q + etheta * q)) + (x ? theta : 0.0);
    s = theta < 0 ? std::min(0.0, s + w) : std::max(0.0, s + w);
    pending_time = t;
    pending = true;
  }
  if (!crossed) flush();
  return chart;
}

} // namespace survchart
