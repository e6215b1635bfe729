#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "survchart/dataset.hpp"

namespace survchart {

using NamedCoefs = std::vector<std::pair<std::string, double>>;

// ---------------------------------------------------------------------------
// cumulative hazard representations

// Right-continuous step function with H(x) = 0 left of the first time and
// constant extension past the last one.
struct StepFn {
  std::vector<double> times;  // strictly increasing
  std::vector<double> values; // nondecreasing cumulative values

  double at(double x) const {
    // number of step times <= x
    auto it = std::upper_bound(times.begin(), times.end(), x);
    if (it == times.begin()) return 0.0;
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }

  // generalized inverse: smallest x with H(x) >= y, +inf beyond the table
  double inverse(double y) const {
    if (y <= 0.0) return 0.0;
    auto it = std::lower_bound(values.begin(), values.end(), y);
    if (it == values.end()) return std::numeric_limits<double>::infinity();
    return times[static_cast<std::size_t>(it - values.begin())];
  }

  bool operator==(const StepFn&) const = default;
};

class CumHazard {
public:
  CumHazard() : rate_(0.0), is_rate_(true) {}
  static CumHazard from_rate(double rate) {
    if (!(rate > 0.0) || !std::isfinite(rate))
      throw std::invalid_argument("baseline rate must be positive and finite");
    CumHazard h;
    h.rate_ = rate;
    h.is_rate_ = true;
    return h;
  }
  static CumHazard from_table(StepFn table) {
    if (table.times.size() != table.values.size() || table.times.empty())
      throw std::invalid_argument("baseline table must have matching nonempty times/values");
    for (std::size_t i = 0; i < table.times.size(); ++i) {
      if (!std::isfinite(table.times[i]) || !std::isfinite(table.values[i]) ||
          table.values[i] < 0.0)
        throw std::invalid_argument("baseline table entries must be finite and nonnegative");
      if (i > 0 && !(table.times[i] > table.times[i - 1]))
        throw std::invalid_argument("baseline table times must be strictly increasing");
      if (i > 0 && table.values[i] < table.values[i - 1])
        throw std::invalid_argument("baseline table values must be nondecreasing");
    }
    CumHazard h;
    h.is_rate_ = false;
    h.table_ = std::move(table);
    return h;
  }

  bool is_rate() const { return is_rate_; }
  double rate() const { return rate_; }
  const StepFn& table() const { return table_; }

  double operator()(double x) const {
    if (x <= 0.0) return 0.0;
    return is_rate_ ? rate_ * x : table_.at(x);
  }

  double inverse(double y) const {
    if (y <= 0.0) return 0.0;
    return is_rate_ ? y / rate_ : table_.inverse(y);
  }

  // largest attainable value (inf for the rate form)
  double sup() const {
    if (is_rate_) return std::numeric_limits<double>::infinity();
    return table_.values.back();
  }

  bool operator==(const CumHazard&) const = default;

private:
  double rate_;
  bool is_rate_;
  StepFn table_;
};

// ---------------------------------------------------------------------------
// model types

struct LogisticModel {
  double intercept = 0.0;
  NamedCoefs coefficients;
  double followup = 0.0;
  bool converged = false;
  double p0_marginal = 0.0;

  bool operator==(const LogisticModel&) const = default;
};

struct CoxModel {
  NamedCoefs coefficients;
  CumHazard baseline;
  bool converged = false;

  bool operator==(const CoxModel&) const = default;
};

// User-specified stand-in: with an intercept it can serve wherever a fitted
// logistic model does, with a baseline wherever a Cox model does.
struct ManualModel {
  NamedCoefs coefficients;
  std::optional<double> intercept;
  std::optional<CumHazard> baseline;

  bool operator==(const ManualModel&) const = default;
};

using AnyModel = std::variant<LogisticModel, CoxModel, ManualModel>;

// ---------------------------------------------------------------------------
// predictions

using Covariates = std::vector<std::pair<std::string, double>>;

namespace detail {
inline double dot_named(const NamedCoefs& beta, const Covariates& covs) {
  double s = 0.0;
  for (const auto& [name, b] : beta) {
    bool found = false;
    for (const auto& [cname, v] : covs) {
      if (cname == name) {
        s += b * v;
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("missing covariate '" + name + "'");
  }
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + e^x) without overflow
inline double log1pexp(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}
} // namespace detail

inline double predict_prob(const LogisticModel& m, const Covariates& covs) {
  return detail::sigmoid(m.intercept + detail::dot_named(m.coefficients, covs));
}

inline double predict_prob(const ManualModel& m, const Covariates& covs) {
  if (!m.intercept)
    throw std::invalid_argument("manual model has no intercept; cannot predict a probability");
  return detail::sigmoid(*m.intercept + detail::dot_named(m.coefficients, covs));
}

inline double relative_risk(const CoxModel& m, const Covariates& covs) {
  return std::exp(detail::dot_named(m.coefficients, covs));
}

inline double relative_risk(const ManualModel& m, const Covariates& covs) {
  return std::exp(detail::dot_named(m.coefficients, covs));
}

// Coefficient names resolved once against dataset columns, for tight loops
// over records.
struct LinearPredictor {
  std::vector<std::pair<std::size_t, double>> terms;

  static LinearPredictor resolve(const NamedCoefs& beta, const Dataset& d) {
    LinearPredictor lp;
    lp.terms.reserve(beta.size());
    for (const auto& [name, b] : beta) {
      auto idx = d.column_index(name);
      if (!idx) throw std::invalid_argument("missing covariate '" + name + "'");
      lp.terms.emplace_back(*idx, b);
    }
    return lp;
  }

  double operator()(const PatientRecord& r) const {
    double s = 0.0;
    for (const auto& [idx, b] : terms) s += b * r.covariates[idx];
    return s;
  }
};

namespace detail {
inline const CumHazard& model_baseline(const CoxModel& m) { return m.baseline; }
inline const CumHazard& model_baseline(const ManualModel& m) {
  if (!m.baseline)
    throw std::invalid_argument("manual model has no baseline cumulative hazard");
  return *m.baseline;
}

// time on study accumulated by a subject up to chronological time t,
// truncated at C from entry when given
inline double at_risk_time(const PatientRecord& r, double t, std::optional<double> C) {
  double cap = r.survtime;
  if (C) cap = std::min(cap, *C);
  return std::clamp(t - r.entrytime, 0.0, cap);
}
} // namespace detail

// Cumulative intensity e^{Z beta} * H0(a_i(t)) a subject has accumulated by
// chronological time t; a_i clamps the on-study time to [0, min(X_i, C)].
template <class Model>
double subject_cum_intensity(const Model& m, const PatientRecord& r,
                             const std::vector<std::string>& covariate_names, double t,
                             std::optional<double> C = std::nullopt) {
  const CumHazard& h0 = detail::model_baseline(m);
  Covariates covs;
  covs.reserve(covariate_names.size());
  for (std::size_t i = 0; i < covariate_names.size(); ++i)
    covs.emplace_back(covariate_names[i], r.covariates[i]);
  double rr = relative_risk(m, covs);
  return rr * h0(detail::at_risk_time(r, t, C));
}

// ---------------------------------------------------------------------------
// logistic regression (IRLS)

namespace detail {

struct DesignMatrix {
  std::vector<std::size_t> cols;   // dataset column index per covariate
  std::vector<double> means;       // column means used for centering
  Eigen::MatrixXd xc;              // centered values, n x p
};

inline DesignMatrix build_centered_design(const Dataset& d,
                                          const std::vector<std::string>& subset,
                                          const char* who) {
  DesignMatrix dm;
  const std::size_t n = d.records.size();
  const std::size_t p = subset.size();
  dm.xc.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t j = 0; j < p; ++j) {
    auto idx = d.column_index(subset[j]);
    if (!idx)
      throw std::invalid_argument(std::string(who) + ": missing covariate '" + subset[j] + "'");
    dm.cols.push_back(*idx);
    long double mean = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      double v = d.records[i].covariates[*idx];
      if (!std::isfinite(v))
        throw std::invalid_argument(std::string(who) + ": non-finite value in covariate '" +
                                    subset[j] + "'");
      mean += v;
    }
    mean /= static_cast<long double>(n);
    dm.means.push_back(static_cast<double>(mean));
    long double ss = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      double v = d.records[i].covariates[*idx] - dm.means[j];
      dm.xc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      ss += static_cast<long double>(v) * v;
    }
    if (ss / static_cast<long double>(n) < 1e-24)
      throw std::invalid_argument(std::string(who) + ": covariate '" + subset[j] +
                                  "' has zero variance (degenerate design)");
  }
  return dm;
}

} // namespace detail

inline LogisticModel fit_logistic(const Dataset& d, const std::vector<std::string>& subset,
                                  double followup) {
  if (!(followup > 0.0)) throw std::invalid_argument("fit_logistic: followup must be positive");
  const std::size_t n = d.records.size();
  if (n == 0) throw std::invalid_argument("fit_logistic: dataset is empty");

  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::size_t failures = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = d.records[i];
    bool fail = r.survtime <= followup && r.censorid == 1;
    y[static_cast<Eigen::Index>(i)] = fail ? 1.0 : 0.0;
    failures += fail;
  }
  if (failures == 0 || failures == n)
    throw std::invalid_argument("fit_logistic: outcome is constant; intercept is unbounded");

  detail::DesignMatrix dm = detail::build_centered_design(d, subset, "fit_logistic");
  const std::size_t p = subset.size();
  const Eigen::Index ni = static_cast<Eigen::Index>(n);
  const Eigen::Index pi = static_cast<Eigen::Index>(p);

  // parameters on the centered scale: [intercept, beta...]
  Eigen::VectorXd par = Eigen::VectorXd::Zero(pi + 1);
  auto loglik = [&](const Eigen::VectorXd& b) {
    long double ll = 0.0L;
    Eigen::VectorXd eta = (dm.xc * b.tail(pi)).array() + b[0];
    for (Eigen::Index i = 0; i < ni; ++i)
      ll += static_cast<long double>(y[i] * eta[i]) - detail::log1pexp(eta[i]);
    return static_cast<double>(ll);
  };

  bool converged = false;
  double ll_old = loglik(par);
  Eigen::VectorXd prob(ni);
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::VectorXd eta = (dm.xc * par.tail(pi)).array() + par[0];
    for (Eigen::Index i = 0; i < ni; ++i) prob[i] = detail::sigmoid(eta[i]);
    Eigen::VectorXd resid = y - prob;

    Eigen::VectorXd score(pi + 1);
    score[0] = resid.sum();
    score.tail(pi) = dm.xc.transpose() * resid;
    if (score.lpNorm<Eigen::Infinity>() < 1e-8) {
      converged = true;
      break;
    }

    Eigen::VectorXd w = prob.array() * (1.0 - prob.array());
    Eigen::MatrixXd info(pi + 1, pi + 1);
    info(0, 0) = w.sum();
    Eigen::VectorXd xw = dm.xc.transpose() * w;
    info.block(0, 1, 1, pi) = xw.transpose();
    info.block(1, 0, pi, 1) = xw;
    info.block(1, 1, pi, pi) = dm.xc.transpose() * w.asDiagonal() * dm.xc;

    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("fit_logistic: rank-deficient design");
    Eigen::VectorXd step = llt.solve(score);

    // step-halving keeps the likelihood nondecreasing
    double scale = 1.0;
    Eigen::VectorXd cand;
    double ll_new = 0.0;
    for (int half = 0; half < 30; ++half) {
      cand = par + scale * step;
      ll_new = loglik(cand);
      if (ll_new >= ll_old - 1e-12 * std::abs(ll_old)) break;
      scale *= 0.5;
    }
    par = cand;
    ll_old = ll_new;

    double b0 = par[0];
    for (std::size_t j = 0; j < p; ++j) b0 -= dm.means[j] * par[static_cast<Eigen::Index>(j) + 1];
    double worst = std::abs(b0);
    for (Eigen::Index j = 1; j <= pi; ++j) worst = std::max(worst, std::abs(par[j]));
    if (worst > 30.0)
      throw std::invalid_argument(
          "fit_logistic: coefficients diverging (complete or quasi-complete separation)");
  }

  LogisticModel m;
  m.followup = followup;
  m.converged = converged;
  m.intercept = par[0];
  for (std::size_t j = 0; j < p; ++j) {
    m.intercept -= dm.means[j] * par[static_cast<Eigen::Index>(j) + 1];
    m.coefficients.emplace_back(subset[j], par[static_cast<Eigen::Index>(j) + 1]);
  }
  Eigen::VectorXd eta = (dm.xc * par.tail(pi)).array() + par[0];
  long double psum = 0.0L;
  for (Eigen::Index i = 0; i < ni; ++i) psum += detail::sigmoid(eta[i]);
  m.p0_marginal = static_cast<double>(psum / static_cast<long double>(n));
  return m;
}

// ---------------------------------------------------------------------------
// Cox proportional hazards (Breslow ties, Breslow baseline)

inline CoxModel fit_coxph(const Dataset& d, const std::vector<std::string>& subset) {
  const std::size_t n = d.records.size();
  if (n == 0) throw std::invalid_argument("fit_coxph: dataset is empty");
  std::size_t events = 0;
  for (const auto& r : d.records) events += r.censorid == 1;
  if (events == 0) throw std::invalid_argument("fit_coxph: no observed events");

  detail::DesignMatrix dm = subset.empty()
                                ? detail::DesignMatrix{}
                                : detail::build_centered_design(d, subset, "fit_coxph");
  const std::size_t p = subset.size();
  const Eigen::Index pi = static_cast<Eigen::Index>(p);

  // records ordered by follow-up time, largest first; the risk set at an
  // event time is a prefix of this order
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return d.records[a].survtime > d.records[b].survtime;
  });

  // distinct event times, descending, with their event record indices
  std::vector<double> evtime;
  std::vector<std::vector<std::size_t>> evgroup;
  {
    std::vector<std::size_t> ev;
    for (std::size_t i : order)
      if (d.records[i].censorid == 1) ev.push_back(i);
    for (std::size_t i : ev) {
      double t = d.records[i].survtime;
      if (evtime.empty() || evtime.back() != t) {
        evtime.push_back(t);
        evgroup.emplace_back();
      }
      evgroup.back().push_back(i);
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(pi);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));

  auto update_eta = [&](const Eigen::VectorXd& b) {
    if (p) eta = dm.xc * b;
  };

  // one sweep over the risk sets: partial log likelihood, score and
  // information under the current eta
  auto sweep = [&](long double& ll, Eigen::VectorXd& score, Eigen::MatrixXd& info,
                   std::vector<double>* s0_at_event) {
    ll = 0.0L;
    if (p) {
      score.setZero();
      info.setZero();
    }
    long double s0 = 0.0L;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(pi);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(pi, pi);
    std::size_t next = 0;
    for (std::size_t k = 0; k < evtime.size(); ++k) {
      double t = evtime[k];
      while (next < n && d.records[order[next]].survtime >= t) {
        std::size_t i = order[next];
        double w = std::exp(eta[static_cast<Eigen::Index>(i)]);
        s0 += w;
        if (p) {
          auto zi = dm.xc.row(static_cast<Eigen::Index>(i));
          s1 += w * zi.transpose();
          s2.noalias() += w * zi.transpose() * zi;
        }
        ++next;
      }
      double dk = static_cast<double>(evgroup[k].size());
      double s0d = static_cast<double>(s0);
      if (s0_at_event) (*s0_at_event)[k] = s0d;
      ll -= static_cast<long double>(dk) * std::log(s0d);
      for (std::size_t i : evgroup[k]) ll += eta[static_cast<Eigen::Index>(i)];
      if (p) {
        Eigen::VectorXd zbar = s1 / s0d;
        for (std::size_t i : evgroup[k])
          score += dm.xc.row(static_cast<Eigen::Index>(i)).transpose();
        score -= dk * zbar;
        info.noalias() += dk * (s2 / s0d - zbar * zbar.transpose());
      }
    }
  };

  bool converged = p == 0;
  if (p) {
    long double ll_old;
    Eigen::VectorXd score(pi);
    Eigen::MatrixXd info(pi, pi);
    update_eta(beta);
    sweep(ll_old, score, info, nullptr);
    for (int iter = 0; iter < 50 && !converged; ++iter) {
      if (score.lpNorm<Eigen::Infinity>() < 1e-8) {
        converged = true;
        break;
      }
      Eigen::LLT<Eigen::MatrixXd> llt(info);
      if (llt.info() != Eigen::Success)
        throw std::invalid_argument("fit_coxph: rank-deficient design");
      Eigen::VectorXd step = llt.solve(score);

      double scale = 1.0;
      long double ll_new = 0.0L;
      Eigen::VectorXd cand;
      for (int half = 0; half < 30; ++half) {
        cand = beta + scale * step;
        update_eta(cand);
        sweep(ll_new, score, info, nullptr);
        if (ll_new >= ll_old - 1e-12 * std::abs(static_cast<double>(ll_old))) break;
        scale *= 0.5;
      }
      beta = cand;
      ll_old = ll_new;
      if (beta.lpNorm<Eigen::Infinity>() > 30.0)
        throw std::invalid_argument("fit_coxph: coefficients diverging");
    }
    if (!converged) {
      // final score may already be small enough even at the iteration cap
      long double ll;
      update_eta(beta);
      sweep(ll, score, info, nullptr);
      converged = score.lpNorm<Eigen::Infinity>() < 1e-8;
    }
    if (!converged) throw std::runtime_error("fit_coxph: did not converge in 50 iterations");
  }

  // Breslow baseline: H0(t) = sum_{event times <= t} d_k / S0(t_k),
  // mapped back to the uncentered covariate scale
  std::vector<double> s0_at_event(evtime.size());
  {
    long double ll;
    Eigen::VectorXd score(pi);
    Eigen::MatrixXd info(pi, pi);
    update_eta(beta);
    sweep(ll, score, info, &s0_at_event);
  }
  double offset = 0.0;
  for (std::size_t j = 0; j < p; ++j) offset += dm.means[j] * beta[static_cast<Eigen::Index>(j)];
  double scale = std::exp(-offset);

  StepFn h0;
  h0.times.resize(evtime.size());
  h0.values.resize(evtime.size());
  long double cum = 0.0L;
  for (std::size_t k = 0; k < evtime.size(); ++k) {
    std::size_t kk = evtime.size() - 1 - k; // ascending time
    cum += static_cast<long double>(evgroup[kk].size()) / s0_at_event[kk] * scale;
    h0.times[k] = evtime[kk];
    h0.values[k] = static_cast<double>(cum);
  }

  CoxModel m;
  m.converged = converged;
  m.baseline = CumHazard::from_table(std::move(h0));
  for (std::size_t j = 0; j < p; ++j)
    m.coefficients.emplace_back(subset[j], beta[static_cast<Eigen::Index>(j)]);
  return m;
}

// ---------------------------------------------------------------------------
// JSON serialization (exact double round-trip via shortest representation)

namespace detail {
inline nlohmann::ordered_json coefs_to_json(const NamedCoefs& c) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [name, v] : c) j[name] = v;
  return j;
}
inline NamedCoefs coefs_from_json(const nlohmann::ordered_json& j) {
  NamedCoefs out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out.emplace_back(it.key(), it.value().get<double>());
  return out;
}
inline nlohmann::ordered_json baseline_to_json(const CumHazard& h) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (h.is_rate()) {
    j["rate"] = h.rate();
  } else {
    j["times"] = h.table().times;
    j["values"] = h.table().values;
  }
  return j;
}
inline CumHazard baseline_from_json(const nlohmann::ordered_json& j) {
  if (j.contains("rate")) return CumHazard::from_rate(j.at("rate").get<double>());
  StepFn fn;
  fn.times = j.at("times").get<std::vector<double>>();
  fn.values = j.at("values").get<std::vector<double>>();
  return CumHazard::from_table(std::move(fn));
}
} // namespace detail

inline nlohmann::ordered_json model_to_json(const AnyModel& model) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  if (const auto* m = std::get_if<LogisticModel>(&model)) {
    j["kind"] = "logistic";
    j["intercept"] = m->intercept;
    j["coefficients"] = detail::coefs_to_json(m->coefficients);
    j["followup"] = m->followup;
    j["p0_marginal"] = m->p0_marginal;
    j["converged"] = m->converged;
  } else if (const auto* m = std::get_if<CoxModel>(&model)) {
    j["kind"] = "cox";
    j["coefficients"] = detail::coefs_to_json(m->coefficients);
    j["baseline"] = detail::baseline_to_json(m->baseline);
    j["converged"] = m->converged;
  } else {
    const auto& m = std::get<ManualModel>(model);
    j["kind"] = "manual";
    j["coefficients"] = detail::coefs_to_json(m.coefficients);
    if (m.intercept) j["intercept"] = *m.intercept;
    if (m.baseline) j["baseline"] = detail::baseline_to_json(*m.baseline);
  }
  return j;
}

inline AnyModel model_from_json(const nlohmann::ordered_json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "logistic") {
    LogisticModel m;
    m.intercept = j.at("intercept").get<double>();
    m.coefficients = detail::coefs_from_json(j.at("coefficients"));
    m.followup = j.at("followup").get<double>();
    if (!(m.followup > 0)) throw std::invalid_argument("logistic model: followup must be > 0");
    if (j.contains("p0_marginal")) m.p0_marginal = j.at("p0_marginal").get<double>();
    if (j.contains("converged")) m.converged = j.at("converged").get<bool>();
    return m;
  }
  if (kind == "cox") {
    CoxModel m;
    m.coefficients = detail::coefs_from_json(j.at("coefficients"));
    m.baseline = detail::baseline_from_json(j.at("baseline"));
    if (j.contains("converged")) m.converged = j.at("converged").get<bool>();
    return m;
  }
  if (kind == "manual") {
    ManualModel m;
    m.coefficients = detail::coefs_from_json(j.at("coefficients"));
    if (j.contains("intercept")) m.intercept = j.at("intercept").get<double>();
    if (j.contains("baseline")) m.baseline = detail::baseline_from_json(j.at("baseline"));
    return m;
  }
  throw std::invalid_argument("unknown model kind '" + kind + "'");
}

} // namespace survchart
