#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survchart/dataset.hpp"
#include "survchart/parallel.hpp"
#include "survchart/riskadjust.hpp"
#include "survchart/rng.hpp"

namespace survchart {

// Marginals for the synthetic patient mix. Only the beta*Z scale matters for
// the chart math; these are configurable stand-ins, not claims about any
// particular registry.
struct CovariateSampler {
  double age_mean = 65.0, age_sd = 10.0, age_min = 18.0;
  double bmi_mean = 26.0, bmi_sd = 4.0, bmi_min = 15.0;
  double p_male = 0.5;
};

struct GenConfig {
  std::size_t n_units = 45;
  std::vector<double> psi_levels = {0.5, 1.0, 1.5}; // equal share of units each
  double entry_horizon = 730.0;
  double baseline_rate = 0.01; // constant hazard, per time unit
  NamedCoefs beta = {{"age", 0.003}, {"BMI", 0.02}, {"sex", 0.2}};
  double theta_sd = 0.4; // per-unit log hazard ratio ~ Normal(0, theta_sd^2)
  std::optional<double> followup_cap; // administrative censoring, off by default
  CovariateSampler sampler;
  std::uint64_t seed = 1;
};

namespace detail {

inline void validate_gen_config(const GenConfig& cfg) {
  if (cfg.n_units == 0) throw std::invalid_argument("datagen: n_units must be positive");
  if (cfg.psi_levels.empty()) throw std::invalid_argument("datagen: psi_levels is empty");
  for (double p : cfg.psi_levels)
    if (!(p > 0)) throw std::invalid_argument("datagen: psi levels must be positive");
  if (cfg.n_units % cfg.psi_levels.size() != 0)
    throw std::invalid_argument("datagen: n_units must divide evenly over psi_levels");
  if (!(cfg.baseline_rate > 0)) throw std::invalid_argument("datagen: baseline_rate must be positive");
  if (!(cfg.theta_sd >= 0)) throw std::invalid_argument("datagen: theta_sd must be nonnegative");
  if (!(cfg.entry_horizon > 0)) throw std::invalid_argument("datagen: entry_horizon must be positive");
  if (cfg.followup_cap && !(*cfg.followup_cap > 0))
    throw std::invalid_argument("datagen: followup_cap must be positive");
  const CovariateSampler& s = cfg.sampler;
  if (!(s.age_sd >= 0) || !(s.bmi_sd >= 0))
    throw std::invalid_argument("datagen: sampler standard deviations must be nonnegative");
  if (!(s.p_male >= 0 && s.p_male <= 1))
    throw std::invalid_argument("datagen: p_male must be in [0,1]");
}

} // namespace detail

inline const std::vector<std::string>& surgery_covariate_names() {
  static const std::vector<std::string> names = {"exptheta", "psival", "age", "sex", "BMI"};
  return names;
}

// One unit, deterministic in (seed, unit 0-based index). Draw order is fixed:
// theta, then every arrival gap, then per patient age, BMI, sex, U.
inline Dataset generate_unit(const GenConfig& cfg, std::size_t unit_index) {
  detail::validate_gen_config(cfg);
  if (unit_index >= cfg.n_units) throw std::invalid_argument("datagen: unit index out of range");
  const std::size_t per_level = cfg.n_units / cfg.psi_levels.size();
  const double psi = cfg.psi_levels[unit_index / per_level];
  const std::string unit_name = std::to_string(unit_index + 1);

  CounterRng rng(cfg.seed, unit_index);
  const double theta = rng.normal(0.0, cfg.theta_sd);
  const double exptheta = std::exp(theta);

  std::vector<double> entries;
  for (double t = rng.exponential(psi); t <= cfg.entry_horizon; t += rng.exponential(psi))
    entries.push_back(t);

  double b_age = 0, b_bmi = 0, b_sex = 0;
  for (const auto& [name, coef] : cfg.beta) {
    if (name == "age") b_age = coef;
    else if (name == "BMI") b_bmi = coef;
    else if (name == "sex") b_sex = coef;
    else throw std::invalid_argument("datagen: beta names a covariate it cannot generate: '" + name + "'");
  }

  Dataset out;
  out.covariate_names = surgery_covariate_names();
  out.records.reserve(entries.size());
  const CovariateSampler& s = cfg.sampler;
  for (double entry : entries) {
    double age = rng.normal_at_least(s.age_mean, s.age_sd, s.age_min);
    double bmi = rng.normal_at_least(s.bmi_mean, s.bmi_sd, s.bmi_min);
    double sex = rng.bernoulli(s.p_male) ? 1.0 : 0.0;
    double u = rng.uniform01();
    double rate = cfg.baseline_rate * std::exp(theta + b_age * age + b_bmi * bmi + b_sex * sex);
    double x = -std::log(u) / rate;

    PatientRecord r;
    r.entrytime = entry;
    r.unit = unit_name;
    if (cfg.followup_cap && x > *cfg.followup_cap) {
      r.survtime = *cfg.followup_cap;
      r.censorid = 0;
    } else {
      r.survtime = x;
      r.censorid = 1;
    }
    r.covariates = {exptheta, psi, age, sex, bmi};
    out.records.push_back(std::move(r));
  }
  return out;
}

inline Dataset generate_surgery_data(const GenConfig& cfg, unsigned workers = 0) {
  detail::validate_gen_config(cfg);
  std::vector<Dataset> parts(cfg.n_units);
  parallel_for(cfg.n_units, workers, [&](std::size_t i) { parts[i] = generate_unit(cfg, i); });
  Dataset out;
  out.covariate_names = surgery_covariate_names();
  std::size_t total = 0;
  for (const Dataset& p : parts) total += p.records.size();
  out.records.reserve(total);
  for (Dataset& p : parts)
    for (PatientRecord& r : p.records) out.records.push_back(std::move(r));
  return out;
}

} // namespace survchart
