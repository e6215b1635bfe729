#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "survchart/bkcusum.hpp"
#include "survchart/chartcore.hpp"
#include "survchart/dataset.hpp"
#include "survchart/parallel.hpp"
#include "survchart/riskadjust.hpp"

namespace survchart {

enum class CgrMethod { matrix, rescan };

struct CGRSpec {
  AnyModel model;
  std::optional<std::vector<double>> ctimes;
  double maxtheta = 6.0; // cap on the estimated hazard ratio e^{theta}
  std::optional<double> C;
  std::optional<double> stoptime;
  CgrMethod method = CgrMethod::matrix;
};

// Capped nonnegative MLE of the log hazard ratio given N observed events
// against cumulative intensity Lambda.
inline double cgr_mle(double n_events, double lambda, double maxtheta) {
  if (!(maxtheta > 1.0)) throw std::invalid_argument("cgr_mle: maxtheta must exceed 1");
  if (n_events < 0 || lambda < 0) throw std::invalid_argument("cgr_mle: negative input");
  if (n_events == 0.0) return 0.0;
  double cap = std::log(maxtheta);
  if (lambda <= 0.0) return cap;
  return std::min(cap, std::max(0.0, std::log(n_events / lambda)));
}

// Per-subject cumulative intensities and failure indicators on the
// evaluation grid, subjects ordered by entry time.
struct IntensityMatrix {
  std::vector<std::size_t> order;  // record index per row, entry order
  std::vector<double> times;       // evaluation grid
  std::vector<double> lambda;      // n x m, row i holds Lambda_i(t_k)
  std::vector<double> failure_time; // chronological counted failure, +inf if none
  std::size_t rows = 0, cols = 0;

  double lam(std::size_t i, std::size_t k) const { return lambda[i * cols + k]; }
};

inline IntensityMatrix build_intensity_matrix(const Dataset& data, const CGRSpec& spec,
                                              unsigned workers = 1) {
  detail::HazardRef mod = detail::hazard_model_ref(spec.model);
  LinearPredictor lp = LinearPredictor::resolve(*mod.beta, data);

  IntensityMatrix im;
  im.order = data.order_by_entry();
  std::vector<double> failures = detail::counted_failure_times(data, spec.C);
  im.times = detail::chart_grid(failures, spec.ctimes, spec.stoptime);
  im.rows = im.order.size();
  im.cols = im.times.size();
  im.lambda.assign(im.rows * im.cols, 0.0);
  im.failure_time.assign(im.rows, std::numeric_limits<double>::infinity());

  parallel_for(im.rows, workers, [&](std::size_t i) {
    const PatientRecord& r = data.records[im.order[i]];
    double rr = std::exp(lp(r));
    if (r.censorid == 1 && (!spec.C || r.survtime <= *spec.C))
      im.failure_time[i] = r.entrytime + r.survtime;
    for (std::size_t k = 0; k < im.cols; ++k)
      im.lambda[i * im.cols + k] =
          rr * (*mod.h0)(detail::at_risk_time(r, im.times[k], spec.C));
  });
  return im;
}

namespace detail {

struct CgrCell {
  double value = 0.0;
  double theta = 0.0;
};

// Scan restart candidates nu = n..1 (suffix sums run from the latest
// entrant down, so ties resolve to the smallest nu). Identical arithmetic
// is used by both evaluation methods, keeping them bit-for-bit equal.
inline CgrCell cgr_scan(const std::vector<double>& lam_at_t,
                        const std::vector<double>& n_at_t, double maxtheta) {
  CgrCell best;
  double sum_lam = 0.0;
  double sum_n = 0.0;
  bool first = true;
  for (std::size_t j = lam_at_t.size(); j-- > 0;) {
    sum_lam += lam_at_t[j];
    sum_n += n_at_t[j];
    double th = cgr_mle(sum_n, sum_lam, maxtheta);
    double val = th * sum_n - (std::exp(th) - 1.0) * sum_lam;
    if (first || val >= best.value) {
      best.value = val;
      best.theta = th;
      first = false;
    }
  }
  if (best.value < 0.0) best = CgrCell{}; // all-empty suffixes only
  return best;
}

} // namespace detail

// CGR-CUSUM: at each grid time, the generalized likelihood ratio
//   max over nu of  theta_hat N_{>=nu}(t) - (e^{theta_hat} - 1) Lambda_{>=nu}(t)
// over suffixes of the entry-ordered subjects, with theta_hat the capped
// nonnegative MLE for that suffix. The matrix method precomputes all
// per-subject intensities; rescan recomputes them per grid time.
inline Chart cgr_cusum(const Dataset& data, const CGRSpec& spec,
                       std::optional<double> h = std::nullopt, unsigned workers = 1) {
  if (!(spec.maxtheta > 1.0)) throw std::invalid_argument("cgr_cusum: maxtheta must exceed 1");
  if (spec.C && !(*spec.C > 0)) throw std::invalid_argument("cgr_cusum: C must be positive");
  detail::HazardRef mod = detail::hazard_model_ref(spec.model);
  LinearPredictor lp = LinearPredictor::resolve(*mod.beta, data);

  Chart chart;
  chart.kind = ChartKind::cgr;
  chart.start_time = data.records.empty() ? 0.0 : data.min_entrytime();
  if (h) {
    check_h_sign(chart.kind, *h);
    chart.h = h;
  }

  if (spec.method == CgrMethod::matrix) {
    IntensityMatrix im = build_intensity_matrix(data, spec, workers);
    if (im.cols == 0) return chart;
    std::vector<detail::CgrCell> cells(im.cols);
    auto eval_time = [&](std::size_t k) {
      std::vector<double> lam(im.rows), nev(im.rows);
      for (std::size_t i = 0; i < im.rows; ++i) {
        lam[i] = im.lam(i, k);
        nev[i] = im.failure_time[i] <= im.times[k] ? 1.0 : 0.0;
      }
      cells[k] = detail::cgr_scan(lam, nev, spec.maxtheta);
    };
    if (h) {
      // with a control limit only the matrix build parallelizes; the scan
      // walks forward so it can stop at the first crossing
      for (std::size_t k = 0; k < im.cols; ++k) {
        eval_time(k);
        chart.points.push_back({im.times[k], cells[k].value});
        chart.theta_hat.push_back(cells[k].theta);
        if (cells[k].value >= *h) break;
      }
    } else {
      parallel_for(im.cols, workers, eval_time);
      for (std::size_t k = 0; k < im.cols; ++k) {
        chart.points.push_back({im.times[k], cells[k].value});
        chart.theta_hat.push_back(cells[k].theta);
      }
    }
    return chart;
  }

  // rescan method: nothing cached between grid times
  std::vector<std::size_t> order = data.order_by_entry();
  std::vector<double> failures = detail::counted_failure_times(data, spec.C);
  std::vector<double> grid = detail::chart_grid(failures, spec.ctimes, spec.stoptime);
  if (grid.empty()) return chart;
  const std::size_t n = order.size();

  std::vector<double> rr(n), ftime(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const PatientRecord& r = data.records[order[i]];
    rr[i] = std::exp(lp(r));
    if (r.censorid == 1 && (!spec.C || r.survtime <= *spec.C))
      ftime[i] = r.entrytime + r.survtime;
  }

  std::vector<detail::CgrCell> cells(grid.size());
  auto eval_time = [&](std::size_t k) {
    std::vector<double> lam(n), nev(n);
    for (std::size_t i = 0; i < n; ++i) {
      const PatientRecord& r = data.records[order[i]];
      lam[i] = rr[i] * (*mod.h0)(detail::at_risk_time(r, grid[k], spec.C));
      nev[i] = ftime[i] <= grid[k] ? 1.0 : 0.0;
    }
    cells[k] = detail::cgr_scan(lam, nev, spec.maxtheta);
  };
  if (h) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      eval_time(k);
      chart.points.push_back({grid[k], cells[k].value});
      chart.theta_hat.push_back(cells[k].theta);
      if (cells[k].value >= *h) break;
    }
  } else {
    parallel_for(grid.size(), workers, eval_time);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      chart.points.push_back({grid[k], cells[k].value});
      chart.theta_hat.push_back(cells[k].theta);
    }
  }
  return chart;
}

} // namespace survchart
