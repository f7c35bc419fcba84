#pragma once

#include <cmath>

namespace regddm {

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;  // log(sqrt(2*pi))

// Each *_lpdf returns the log density and, when the gradient pointers are
// non-null, *adds* the partial derivatives into them.  Accumulating keeps the
// call sites in the posterior short.

inline double normal_lpdf(double x, double mu, double sigma, double* dx = nullptr,
                          double* dmu = nullptr, double* dsigma = nullptr) {
  const double z = (x - mu) / sigma;
  const double lp = -0.5 * z * z - std::log(sigma) - kLogSqrtTwoPi;
  if (dx) *dx += -z / sigma;
  if (dmu) *dmu += z / sigma;
  if (dsigma) *dsigma += (z * z - 1.0) / sigma;
  return lp;
}

// Half-normal on x >= 0 with scale parameter.
inline double half_normal_lpdf(double x, double scale, double* dx = nullptr) {
  const double z = x / scale;
  const double lp = 0.5 * std::log(2.0 / M_PI) - std::log(scale) - 0.5 * z * z;
  if (dx) *dx += -z / scale;
  return lp;
}

// Gamma with shape/rate parameterization.
inline double gamma_lpdf(double x, double shape, double rate, double* dx = nullptr) {
  const double lp = shape * std::log(rate) - std::lgamma(shape) +
                    (shape - 1.0) * std::log(x) - rate * x;
  if (dx) *dx += (shape - 1.0) / x - rate;
  return lp;
}

inline double bernoulli_logit_lpmf(double y, double eta, double* deta = nullptr) {
  // y in {0, 1}; log1p-exp form is stable for any eta
  const double log1pexp = eta > 0.0 ? eta + std::log1p(std::exp(-eta))
                                    : std::log1p(std::exp(eta));
  const double lp = y * eta - log1pexp;
  if (deta) {
    const double p = 1.0 / (1.0 + std::exp(-eta));
    *deta += y - p;
  }
  return lp;
}

inline double poisson_log_lpmf(double y, double eta, double* deta = nullptr) {
  const double lp = y * eta - std::exp(eta) - std::lgamma(y + 1.0);
  if (deta) *deta += y - std::exp(eta);
  return lp;
}

}  // namespace regddm
