#pragma once

// Shared helpers for statistical tests: numeric CDF of the first-passage
// density and a one-sample Kolmogorov-Smirnov statistic.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "regddm/wfpt.hpp"

namespace testsupport {

// Conditional decision-time CDF for one response branch, tabulated by
// trapezoid accumulation on a log-spaced grid.
struct GridCdf {
  std::vector<double> t;
  std::vector<double> F;

  double operator()(double x) const {
    if (x <= t.front()) return 0.0;
    if (x >= t.back()) return 1.0;
    const auto it = std::upper_bound(t.begin(), t.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - t.begin());
    const double w = (x - t[i - 1]) / (t[i] - t[i - 1]);
    return F[i - 1] + w * (F[i] - F[i - 1]);
  }
};

inline GridCdf wfpt_conditional_cdf(const regddm::DdmParams& p, int response,
                                    double t_max = 60.0, int n = 60000) {
  GridCdf g;
  g.t.resize(n + 1);
  g.F.resize(n + 1);
  const double ulo = std::log(1e-7), uhi = std::log(t_max);
  const double h = (uhi - ulo) / n;
  double prev_f = 0.0, prev_t = 0.0, acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    // grid lives on the rt axis (t0 + decision time), matching raw samples
    const double tt = p.t0 + std::exp(ulo + i * h);
    const double f = std::exp(regddm::wfpt_log_density_raw(response, tt, p, 1e-12));
    if (i > 0) acc += 0.5 * (f + prev_f) * (tt - prev_t);
    g.t[i] = tt;
    g.F[i] = acc;
    prev_f = f;
    prev_t = tt;
  }
  const double total = g.F.back();
  if (!(total > 0.0)) throw std::runtime_error("wfpt_conditional_cdf: zero mass branch");
  for (double& v : g.F) v /= total;
  return g;
}

// One-sample KS distance of samples (any order) against a cdf functor.
template <class Cdf>
double ks_statistic(std::vector<double> samples, const Cdf& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double u = cdf(samples[i]);
    d = std::max(d, std::fabs(u - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - u));
  }
  return d;
}

}  // namespace testsupport
