#pragma once

#include <cmath>
#include <stdexcept>

namespace survchart {

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x * 0.70710678118654752440);
}

inline double normal_pdf(double x) {
  return 0.39894228040143267794 * std::exp(-0.5 * x * x);
}

// Standard normal quantile: Abramowitz-Stegun 26.2.22 starting value
// polished with Newton steps on erfc. Accurate to ~1e-15 over the range
// used for funnel limits.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  double pl = p < 0.5 ? p : 1.0 - p;
  double t = std::sqrt(-2.0 * std::log(pl));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + t * (0.99229 + 0.04481 * t));
  if (p < 0.5) x = -x;
  for (int it = 0; it < 4; ++it) {
    double err = normal_cdf(x) - p;
    double step = err / normal_pdf(x);
    x -= step;
    if (std::abs(step) < 1e-14 * (1.0 + std::abs(x))) break;
  }
  return x;
}

} // namespace survchart
