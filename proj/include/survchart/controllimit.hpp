#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "survchart/bernoulli.hpp"
#include "survchart/bkcusum.hpp"
#include "survchart/cgrcusum.hpp"
#include "survchart/chartcore.hpp"
#include "survchart/dataset.hpp"
#include "survchart/parallel.hpp"
#include "survchart/riskadjust.hpp"
#include "survchart/rng.hpp"

namespace survchart {

enum class MonitorKind { bernoulli, bk, cgr };

inline MonitorKind monitor_kind_from_name(const std::string& s) {
  if (s == "bernoulli") return MonitorKind::bernoulli;
  if (s == "bk") return MonitorKind::bk;
  if (s == "cgr") return MonitorKind::cgr;
  throw std::invalid_argument("unknown chart kind '" + s + "' (expected bernoulli, bk or cgr)");
}

// In-control simulation setup: unit volume psi over [0, time], covariates
// resampled from baseline_data, outcomes drawn from the risk model itself.
struct SimConfig {
  double time = 0.0;
  double psi = 0.0;
  double alpha = 0.05;
  std::size_t n_sim = 0; // 0 = kind default (200; 20 for cgr)
  int h_precision = 2;   // significant digits of the reported limit
  Dataset baseline_data;
  std::optional<AnyModel> model;
  std::optional<double> theta;
  std::optional<double> p0;
  std::optional<double> p1;
  std::optional<double> followup;
  double maxtheta = 6.0;
  std::uint64_t seed = 1;
};

struct ControlLimitResult {
  double h = 0.0;
  double alpha = 0.0;
  double achieved_alpha = 0.0;
  std::size_t n_sim = 0;
  std::uint64_t seed = 0;
  std::vector<double> maxima; // chart extremum per simulated unit
};

namespace detail {

inline double resolve_followup(const SimConfig& cfg) {
  if (cfg.followup) return *cfg.followup;
  if (cfg.model)
    if (const auto* glm = std::get_if<LogisticModel>(&*cfg.model)) return glm->followup;
  throw std::invalid_argument("control limit: follow-up window required");
}

inline void validate_sim_config(MonitorKind kind, const SimConfig& cfg) {
  if (!(cfg.time > 0)) throw std::invalid_argument("control limit: time must be positive");
  if (!(cfg.psi > 0)) throw std::invalid_argument("control limit: psi must be positive");
  if (!(cfg.alpha > 0 && cfg.alpha < 1))
    throw std::invalid_argument("control limit: alpha must be in (0,1)");
  if (cfg.h_precision < 1 || cfg.h_precision > 10)
    throw std::invalid_argument("control limit: h_precision out of range");
  if (cfg.baseline_data.records.empty())
    throw std::invalid_argument("control limit: baseline data is empty");
  switch (kind) {
    case MonitorKind::bernoulli: {
      BernoulliSpec spec{cfg.model, cfg.theta, cfg.p0, cfg.p1, cfg.followup};
      validate_bernoulli_spec(spec);
      resolve_followup(cfg);
      break;
    }
    case MonitorKind::bk:
      if (!cfg.theta || *cfg.theta == 0.0)
        throw std::invalid_argument("control limit: bk needs a nonzero theta");
      if (!cfg.model) throw std::invalid_argument("control limit: bk needs a hazard model");
      hazard_model_ref(*cfg.model);
      break;
    case MonitorKind::cgr:
      if (!(cfg.maxtheta > 1.0))
        throw std::invalid_argument("control limit: cgr needs maxtheta > 1");
      if (cfg.theta && *cfg.theta < 0)
        throw std::invalid_argument("control limit: the cgr chart is upper-sided");
      if (!cfg.model) throw std::invalid_argument("control limit: cgr needs a hazard model");
      hazard_model_ref(*cfg.model);
      break;
  }
}

inline bool sim_is_hazard_kind(MonitorKind kind) { return kind != MonitorKind::bernoulli; }

} // namespace detail

// One synthetic in-control unit. All draws come from a counter-based stream
// keyed by (seed, unit_index): arrival gaps first, then per patient a
// baseline row and an outcome variate, so results do not depend on thread
// scheduling or evaluation order.
inline Dataset simulate_inctrl_unit(const SimConfig& cfg, MonitorKind kind,
                                    std::uint64_t unit_index) {
  detail::validate_sim_config(kind, cfg);
  CounterRng rng(cfg.seed, unit_index);

  std::vector<double> entries;
  for (double t = rng.exponential(cfg.psi); t <= cfg.time; t += rng.exponential(cfg.psi))
    entries.push_back(t);

  Dataset out;
  out.covariate_names = cfg.baseline_data.covariate_names;
  out.records.reserve(entries.size());

  const std::size_t n_rows = cfg.baseline_data.records.size();
  if (detail::sim_is_hazard_kind(kind)) {
    detail::HazardRef mod = detail::hazard_model_ref(*cfg.model);
    LinearPredictor lp = LinearPredictor::resolve(*mod.beta, cfg.baseline_data);
    for (double entry : entries) {
      const PatientRecord& src = cfg.baseline_data.records[rng.below(n_rows)];
      PatientRecord r;
      r.entrytime = entry;
      r.unit = "1";
      r.covariates = src.covariates;
      double rr = std::exp(lp(src));
      double target = -std::log(rng.uniform01()) / rr;
      double x = mod.h0->inverse(target);
      if (std::isfinite(x)) {
        r.survtime = x;
        r.censorid = 1;
      } else {
        // beyond the baseline table: at risk through the horizon
        r.survtime = cfg.time - entry;
        r.censorid = 0;
      }
      out.records.push_back(std::move(r));
    }
  } else {
    double followup = detail::resolve_followup(cfg);
    double intercept = 0.0;
    LinearPredictor lp;
    if (cfg.model) {
      if (const auto* glm = std::get_if<LogisticModel>(&*cfg.model)) {
        intercept = glm->intercept;
        lp = LinearPredictor::resolve(glm->coefficients, cfg.baseline_data);
      } else {
        const auto& mm = std::get<ManualModel>(*cfg.model);
        if (!mm.intercept)
          throw std::invalid_argument("control limit: manual model needs an intercept");
        intercept = *mm.intercept;
        lp = LinearPredictor::resolve(mm.coefficients, cfg.baseline_data);
      }
    }
    for (double entry : entries) {
      const PatientRecord& src = cfg.baseline_data.records[rng.below(n_rows)];
      PatientRecord r;
      r.entrytime = entry;
      r.unit = "1";
      r.covariates = src.covariates;
      double q = cfg.p0 ? *cfg.p0 : detail::sigmoid(intercept + lp(src));
      r.survtime = followup;
      r.censorid = rng.bernoulli(q) ? 1 : 0;
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

// Extreme chart value over [0, time] for one simulated unit (max for upper
// charts, min for lower ones).
inline double simulated_chart_extremum(const SimConfig& cfg, MonitorKind kind,
                                       std::uint64_t unit_index) {
  Dataset data = simulate_inctrl_unit(cfg, kind, unit_index);
  Chart chart;
  switch (kind) {
    case MonitorKind::bernoulli: {
      BernoulliSpec spec{cfg.model, cfg.theta, cfg.p0, cfg.p1, cfg.followup};
      if (!spec.followup) spec.followup = detail::resolve_followup(cfg);
      chart = bernoulli_cusum(data, spec);
      break;
    }
    case MonitorKind::bk: {
      BKSpec spec;
      spec.theta1 = *cfg.theta;
      spec.model = *cfg.model;
      spec.C = cfg.followup;
      chart = bk_cusum(data, spec);
      break;
    }
    case MonitorKind::cgr: {
      CGRSpec spec;
      spec.model = *cfg.model;
      spec.maxtheta = cfg.maxtheta;
      spec.C = cfg.followup;
      chart = cgr_cusum(data, spec);
      break;
    }
  }
  return chart_max(chart, 0.0, cfg.time);
}

namespace detail {

inline double pow10i(int k) { return std::pow(10.0, k); }

// largest number with `digits` significant digits that is <= x (x > 0)
inline double sig_floor(double x, int digits) {
  int e = static_cast<int>(std::floor(std::log10(x)));
  int shift = e - digits + 1;
  double m;
  if (shift >= 0) {
    double scale = pow10i(shift);
    m = std::floor(x / scale);
    while ((m + 1) * scale <= x) m += 1;
    while (m * scale > x) m -= 1;
    return m * scale;
  }
  double div = pow10i(-shift);
  m = std::floor(x * div);
  while ((m + 1) / div <= x) m += 1;
  while (m / div > x) m -= 1;
  return m / div;
}

// smallest number with `digits` significant digits strictly greater than q
inline double sig_ceil_strict(double q, int digits) {
  int e = static_cast<int>(std::floor(std::log10(q)));
  int shift = e - digits + 1;
  if (shift >= 0) {
    double scale = pow10i(shift);
    double m = std::floor(q / scale);
    while (m * scale > q) m -= 1;
    while ((m + 1) * scale <= q) m += 1;
    return (m + 1) * scale;
  }
  double div = pow10i(-shift);
  double m = std::floor(q * div);
  while (m / div > q) m -= 1;
  while ((m + 1) / div <= q) m += 1;
  return (m + 1) / div;
}

} // namespace detail

// Smallest value on the h_precision-significant-digit grid whose exceedance
// fraction among the simulated extrema is at most alpha. Lower-sided charts
// mirror through negation.
inline double pick_control_limit(std::vector<double> extrema, double alpha, int digits,
                                 bool lower_sided) {
  if (extrema.empty()) throw std::invalid_argument("pick_control_limit: no simulated extrema");
  if (lower_sided)
    for (double& v : extrema) v = -v;
  std::sort(extrema.begin(), extrema.end());
  const std::size_t n = extrema.size();
  if (extrema.back() <= 0.0)
    throw std::runtime_error("control limit: insufficient events to calibrate (all chart "
                             "extrema are zero)");
  std::size_t k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
  if (k >= n) k = n - 1;
  double q = extrema[n - 1 - k]; // (k+1)-th largest must stay below h
  double h;
  if (q > 0.0) {
    h = detail::sig_ceil_strict(q, digits);
  } else {
    // at most k positive extrema: the smallest positive one, rounded down,
    // already clears the target fraction
    double mpos = 0.0;
    for (double v : extrema)
      if (v > 0.0) {
        mpos = v;
        break;
      }
    h = detail::sig_floor(mpos, digits);
  }
  return lower_sided ? -h : h;
}

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

inline std::size_t default_n_sim(MonitorKind kind) {
  return kind == MonitorKind::cgr ? 20 : 200;
}

inline ControlLimitResult control_limit(MonitorKind kind, const SimConfig& cfg,
                                        unsigned workers = 0,
                                        const ProgressFn& progress = {}) {
  detail::validate_sim_config(kind, cfg);
  std::size_t n_sim = cfg.n_sim ? cfg.n_sim : default_n_sim(kind);

  ControlLimitResult res;
  res.alpha = cfg.alpha;
  res.n_sim = n_sim;
  res.seed = cfg.seed;
  res.maxima.assign(n_sim, 0.0);

  std::atomic<std::size_t> done{0};
  parallel_for(n_sim, workers, [&](std::size_t i) {
    res.maxima[i] = simulated_chart_extremum(cfg, kind, i);
    if (progress) progress(done.fetch_add(1) + 1, n_sim);
  });

  bool lower = kind != MonitorKind::cgr && cfg.theta && *cfg.theta < 0;
  res.h = pick_control_limit(res.maxima, cfg.alpha, cfg.h_precision, lower);
  std::size_t signals = 0;
  for (double v : res.maxima) signals += lower ? v <= res.h : v >= res.h;
  res.achieved_alpha = static_cast<double>(signals) / static_cast<double>(n_sim);
  return res;
}

inline nlohmann::ordered_json control_limit_to_json(const ControlLimitResult& r) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  j["h"] = r.h;
  j["alpha"] = r.alpha;
  j["achieved_alpha"] = r.achieved_alpha;
  j["n_sim"] = r.n_sim;
  j["seed"] = r.seed;
  j["maxima"] = r.maxima;
  return j;
}

} // namespace survchart
