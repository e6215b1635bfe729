#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "survchart/csv.hpp"

namespace survchart {

// One subject: chronological entry time S_i, follow-up time X_i measured
// from entry, event indicator (1 = failure observed at S_i + X_i,
// 0 = censored), an opaque unit label, and covariate values aligned with
// Dataset::covariate_names.
struct PatientRecord {
  double entrytime = 0.0;
  double survtime = 0.0;
  int censorid = 1;
  std::string unit;
  std::vector<double> covariates;
};

struct Dataset {
  std::vector<PatientRecord> records;
  std::vector<std::string> covariate_names;

  std::optional<std::size_t> column_index(const std::string& name) const {
    for (std::size_t i = 0; i < covariate_names.size(); ++i)
      if (covariate_names[i] == name) return i;
    return std::nullopt;
  }

  // unit labels in order of first appearance
  std::vector<std::string> units() const {
    std::vector<std::string> out;
    for (const auto& r : records)
      if (std::find(out.begin(), out.end(), r.unit) == out.end()) out.push_back(r.unit);
    return out;
  }

  Dataset subset_unit(const std::string& unit) const {
    Dataset d;
    d.covariate_names = covariate_names;
    for (const auto& r : records)
      if (r.unit == unit) d.records.push_back(r);
    return d;
  }

  template <class Pred>
  Dataset filter(Pred&& keep) const {
    Dataset d;
    d.covariate_names = covariate_names;
    for (const auto& r : records)
      if (keep(r)) d.records.push_back(r);
    return d;
  }

  double min_entrytime() const {
    if (records.empty()) throw std::invalid_argument("dataset is empty");
    double m = records.front().entrytime;
    for (const auto& r : records) m = std::min(m, r.entrytime);
    return m;
  }

  double max_entrytime() const {
    if (records.empty()) throw std::invalid_argument("dataset is empty");
    double m = records.front().entrytime;
    for (const auto& r : records) m = std::max(m, r.entrytime);
    return m;
  }

  // record indices ordered by entry time; ties keep input order
  std::vector<std::size_t> order_by_entry() const {
    std::vector<std::size_t> idx(records.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].entrytime < records[b].entrytime;
    });
    return idx;
  }
};

// Column-name mapping applied when reading a CSV. Only columns listed in
// `covariates` are ingested as covariates; anything else unrecognized is
// dropped.
struct Schema {
  std::string entrytime = "entrytime";
  std::string survtime = "survtime";
  std::string censorid = "censorid";
  std::string unit = "unit";
  std::vector<std::string> covariates;
};

namespace detail {
inline std::optional<std::size_t> find_col(const std::vector<std::string>& header,
                                           const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  return std::nullopt;
}
} // namespace detail

// Reads a dataset. Entry and survival columns are required; a missing
// censorid column means every failure was observed (all 1); a missing unit
// column collapses everything into one implicit unit "1". Row numbers in
// error messages count from 1 at the header.
inline Dataset parse_dataset(std::istream& in, const Schema& schema = {}) {
  csv::Table t = csv::read(in);
  auto c_entry = detail::find_col(t.header, schema.entrytime);
  auto c_surv = detail::find_col(t.header, schema.survtime);
  if (!c_entry) throw std::invalid_argument("missing required column '" + schema.entrytime + "'");
  if (!c_surv) throw std::invalid_argument("missing required column '" + schema.survtime + "'");
  auto c_cens = detail::find_col(t.header, schema.censorid);
  auto c_unit = detail::find_col(t.header, schema.unit);

  std::vector<std::size_t> c_cov;
  for (const auto& name : schema.covariates) {
    auto c = detail::find_col(t.header, name);
    if (!c) throw std::invalid_argument("missing covariate column '" + name + "'");
    c_cov.push_back(*c);
  }

  Dataset d;
  d.covariate_names = schema.covariates;
  d.records.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    std::size_t rowno = i + 2; // header is row 1
    PatientRecord r;
    r.entrytime = csv::parse_double(row[*c_entry], schema.entrytime, rowno);
    r.survtime = csv::parse_double(row[*c_surv], schema.survtime, rowno);
    if (r.survtime < 0)
      throw std::invalid_argument("row " + std::to_string(rowno) + ": negative survival time");
    if (c_cens) {
      double cv = csv::parse_double(row[*c_cens], schema.censorid, rowno);
      if (cv != 0.0 && cv != 1.0)
        throw std::invalid_argument("row " + std::to_string(rowno) +
                                    ": censorid must be 0 or 1");
      r.censorid = static_cast<int>(cv);
    } else {
      r.censorid = 1;
    }
    r.unit = c_unit ? row[*c_unit] : std::string("1");
    if (r.unit.empty())
      throw std::invalid_argument("row " + std::to_string(rowno) + ": empty unit label");
    r.covariates.reserve(c_cov.size());
    for (std::size_t k = 0; k < c_cov.size(); ++k) {
      const std::string& cell = row[c_cov[k]];
      if (cell.empty())
        throw std::invalid_argument("row " + std::to_string(rowno) + ": missing value in column '" +
                                    schema.covariates[k] + "'");
      r.covariates.push_back(csv::parse_double(cell, schema.covariates[k], rowno));
    }
    d.records.push_back(std::move(r));
  }
  return d;
}

inline void write_csv(const Dataset& d, std::ostream& out, const Schema& schema = {}) {
  out << schema.entrytime << ',' << schema.survtime << ',' << schema.censorid << ','
      << schema.unit;
  for (const auto& name : d.covariate_names) out << ',' << name;
  out << '\n';
  for (const auto& r : d.records) {
    out << csv::format_double(r.entrytime) << ',' << csv::format_double(r.survtime) << ','
        << r.censorid << ',' << r.unit;
    for (double v : r.covariates) out << ',' << csv::format_double(v);
    out << '\n';
  }
}

// Poisson arrival-rate estimate per unit: number of arrivals divided by the
// entry-time span. Undefined when a unit has fewer than two distinct entry
// times.
struct ArrivalEstimate {
  std::string unit;
  double psi_hat = 0.0;
  std::size_t n = 0;
  double span = 0.0;
};

inline std::vector<ArrivalEstimate> arrival_rate(const Dataset& d) {
  if (d.records.empty()) throw std::invalid_argument("arrival_rate: dataset is empty");
  std::vector<ArrivalEstimate> out;
  for (const auto& unit : d.units()) {
    double lo = 0, hi = 0;
    std::size_t n = 0;
    bool first = true;
    for (const auto& r : d.records) {
      if (r.unit != unit) continue;
      ++n;
      if (first) {
        lo = hi = r.entrytime;
        first = false;
      } else {
        lo = std::min(lo, r.entrytime);
        hi = std::max(hi, r.entrytime);
      }
    }
    if (n < 2 || hi <= lo)
      throw std::invalid_argument("arrival_rate: undefined arrival span for unit '" + unit + "'");
    out.push_back({unit, static_cast<double>(n) / (hi - lo), n, hi - lo});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ArrivalEstimate& a, const ArrivalEstimate& b) {
                     return a.psi_hat < b.psi_hat;
                   });
  return out;
}

} // namespace survchart
