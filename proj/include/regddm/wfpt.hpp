#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "regddm/distributions.hpp"
#include "regddm/dual.hpp"
#include "regddm/rng.hpp"
#include "regddm/special.hpp"

namespace regddm {

// Diffusion parameters for one trial: boundary separation a, non-decision
// time t0, relative start point z in (0,1), drift v.  The accumulator starts
// at z*a between absorbing boundaries {0, a}; response 1 is the upper
// boundary, response 0 the lower.
struct DdmParams {
  double a = 1.0;
  double t0 = 0.0;
  double z = 0.5;
  double v = 0.0;
};

struct TrialOutcome {
  int response = 0;  // 0 = lower boundary, 1 = upper boundary
  double rt = 0.0;   // response time, includes t0
};

inline bool ddm_params_valid(const DdmParams& p) {
  return std::isfinite(p.a) && p.a > 0.0 && std::isfinite(p.t0) && p.t0 >= 0.0 &&
         std::isfinite(p.z) && p.z > 0.0 && p.z < 1.0 && std::isfinite(p.v);
}

inline void ddm_check_params(const DdmParams& p) {
  if (!ddm_params_valid(p)) {
    throw std::invalid_argument(
        "invalid diffusion parameters: require a > 0, t0 >= 0, 0 < z < 1, "
        "finite v (a=" + std::to_string(p.a) + ", t0=" + std::to_string(p.t0) +
        ", z=" + std::to_string(p.z) + ", v=" + std::to_string(p.v) + ")");
  }
}

namespace wfpt_detail {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class S>
S neg_inf_like() {
  return S(kNegInf);
}

// Number of series terms needed for absolute error eps in the standardized
// density at scaled time tau (small-time expansion).
inline int small_time_terms(double tau, double eps) {
  double ks = 2.0;
  if (2.0 * std::sqrt(2.0 * M_PI * tau) * eps < 1.0) {
    ks = 2.0 + std::sqrt(-2.0 * tau * std::log(2.0 * eps * std::sqrt(2.0 * M_PI * tau)));
    ks = std::max(ks, std::sqrt(tau) + 1.0);
  }
  if (!(ks < 1.0e5)) ks = 1.0e5;
  return static_cast<int>(std::ceil(ks));
}

// Same for the large-time expansion.
inline int large_time_terms(double tau, double eps) {
  double kl = 1.0 / (M_PI * std::sqrt(tau));
  if (M_PI * tau * eps < 1.0) {
    kl = std::max(kl, std::sqrt(-2.0 * std::log(M_PI * tau * eps)) / (M_PI * std::sqrt(tau)));
  }
  if (!(kl < 1.0e5)) kl = 1.0e5;
  return static_cast<int>(std::ceil(kl));
}

// log of the standardized first-passage density f(tau | a=1, v=0, start w)
// at the lower boundary, small-time image expansion, K terms, evaluated in
// log space with the k=0 term factored out for stability.
template <class S>
S log_std_small(const S& tau, const S& w, int K) {
  const int klo = -static_cast<int>(std::floor((K - 1) / 2.0));
  const int khi = static_cast<int>(std::ceil((K - 1) / 2.0));
  const S inv2t = S(0.5) / tau;
  const S e0 = -(w * w) * inv2t;
  const double m = value(e0);
  S sum = S(0.0);
  for (int k = klo; k <= khi; ++k) {
    const S c = w + S(2.0 * k);
    const S e = -(c * c) * inv2t;
    sum += c * exp(e - S(m));
  }
  if (!(value(sum) > 0.0)) return neg_inf_like<S>();
  return S(-kLogSqrtTwoPi) - S(1.5) * log(tau) + S(m) + log(sum);
}

// Same quantity via the large-time eigenfunction expansion.
template <class S>
S log_std_large(const S& tau, const S& w, int K) {
  const S c = S(-0.5 * M_PI * M_PI) * tau;
  const double m = value(c);
  S sum = S(0.0);
  for (int k = 1; k <= K; ++k) {
    const double kd = static_cast<double>(k);
    sum += S(kd) * exp(c * S(kd * kd) - S(m)) * sin(S(kd * M_PI) * w);
  }
  if (!(value(sum) > 0.0)) return neg_inf_like<S>();
  return S(std::log(M_PI)) + S(m) + log(sum);
}

// log density of first passage through the LOWER boundary at decision time
// t (> 0), boundary separation a, start fraction w (measured from the lower
// boundary), drift v.  tol is an absolute error bound on the density itself.
template <class S>
S lower_log_density(const S& t, const S& a, const S& w, const S& v, double tol) {
  const double tv = value(t), av = value(a), wv = value(w), vv = value(v);
  const double tau_v = tv / (av * av);
  // Absolute tolerance for the standardized series: the density equals
  // exp(-v*a*w - v^2 t / 2) / a^2 times the standardized value, so scale
  // the requested density tolerance by the inverse prefactor.
  double log_eps = std::log(tol) + 2.0 * std::log(av) + vv * av * wv + 0.5 * vv * vv * tv;
  log_eps = std::clamp(log_eps, -690.0, 690.0);
  const double eps = std::exp(log_eps);
  const int ks = small_time_terms(tau_v, eps);
  const int kl = large_time_terms(tau_v, eps);
  const S tau = t / (a * a);
  const S log_std = (ks <= kl) ? log_std_small(tau, w, ks) : log_std_large(tau, w, kl);
  if (value(log_std) == kNegInf) return neg_inf_like<S>();
  return -S(2.0) * log(a) - v * a * w - S(0.5) * v * v * t + log_std;
}

}  // namespace wfpt_detail

// log density of (response, rt); returns -infinity when rt <= t0.
// No parameter checking: invalid parameters also yield -infinity.  This is
// the hot path used inside the posterior.
inline double wfpt_log_density_raw(int response, double rt, const DdmParams& p,
                                   double tol = 1e-10) {
  if (!ddm_params_valid(p) || !(rt > p.t0) || !std::isfinite(rt)) {
    return wfpt_detail::kNegInf;
  }
  const double t = rt - p.t0;
  if (response == 1) {
    return wfpt_detail::lower_log_density<double>(t, p.a, 1.0 - p.z, -p.v, tol);
  }
  return wfpt_detail::lower_log_density<double>(t, p.a, p.z, p.v, tol);
}

// Gradient version: writes d logf / d(a, t0, z, v) into grad.  Returns false
// (and -infinity in *lp) when the density is zero or parameters invalid, in
// which case grad is untouched.
inline bool wfpt_log_density_grad_raw(int response, double rt, const DdmParams& p,
                                      double* lp, std::array<double, 4>& grad,
                                      double tol = 1e-10) {
  if (!ddm_params_valid(p) || !(rt > p.t0) || !std::isfinite(rt)) {
    *lp = wfpt_detail::kNegInf;
    return false;
  }
  const Dual4 a(p.a, 0);
  const Dual4 t(rt - p.t0, 1, -1.0);  // d(rt - t0)/dt0 = -1
  Dual4 w, v;
  if (response == 1) {
    w = Dual4(1.0 - p.z, 2, -1.0);
    v = Dual4(-p.v, 3, -1.0);
  } else {
    w = Dual4(p.z, 2, 1.0);
    v = Dual4(p.v, 3, 1.0);
  }
  const Dual4 r = wfpt_detail::lower_log_density<Dual4>(t, a, w, v, tol);
  *lp = r.v;
  if (r.v == wfpt_detail::kNegInf) return false;
  grad = r.d;
  return true;
}

inline void wfpt_check_outcome(int response, double rt) {
  if (response != 0 && response != 1) {
    throw std::invalid_argument("response must be 0 or 1, got " + std::to_string(response));
  }
  if (!std::isfinite(rt) || rt <= 0.0) {
    throw std::invalid_argument("rt must be a positive finite number");
  }
}

// Checked public entry points.
inline double wfpt_log_density(const TrialOutcome& o, const DdmParams& p, double tol = 1e-10) {
  ddm_check_params(p);
  wfpt_check_outcome(o.response, o.rt);
  return wfpt_log_density_raw(o.response, o.rt, p, tol);
}

inline double wfpt_density(const TrialOutcome& o, const DdmParams& p, double tol = 1e-10) {
  return std::exp(wfpt_log_density(o, p, tol));
}

inline double wfpt_log_density_grad(const TrialOutcome& o, const DdmParams& p,
                                    std::array<double, 4>& grad, double tol = 1e-10) {
  ddm_check_params(p);
  wfpt_check_outcome(o.response, o.rt);
  double lp = 0.0;
  if (!wfpt_log_density_grad_raw(o.response, o.rt, p, &lp, grad, tol)) {
    throw std::domain_error("gradient undefined: rt <= t0 puts the density at zero");
  }
  return lp;
}

// Probability that the process is absorbed at the upper boundary.
inline double wfpt_upper_probability(const DdmParams& p) {
  ddm_check_params(p);
  const double va = p.v * p.a;
  if (va == 0.0) return p.z;
  const double s1 = -2.0 * va * p.z;
  const double s2 = -2.0 * va;
  if (s2 > 30.0) {
    // v strongly negative: form the ratio of exponentials directly
    return std::exp(s1 - s2) * (-std::expm1(-s1)) / (-std::expm1(-s2));
  }
  return std::expm1(s1) / std::expm1(s2);
}

namespace wfpt_detail {

// Accept/reject decision against the alternating series
//   S(c2) = sum_{j>=0} (-1)^j (2j+1) exp(-c2 ((2j+1)^2 - 1)),
// valid (terms decreasing) for c2 > log(3)/8.  Both the small- and
// large-time acceptance ratios of the exit-time sampler have this form.
inline bool series_accept(double c2, Rng& rng) {
  const double u = rng.uniform();
  double b = 1.0;
  int j = 1;
  for (;;) {
    double odd = 2.0 * j + 1.0;
    b -= odd * std::exp(-c2 * (odd * odd - 1.0));
    if (u <= b) return true;
    ++j;
    odd = 2.0 * j + 1.0;
    b += odd * std::exp(-c2 * (odd * odd - 1.0));
    if (u >= b) return false;
    ++j;
    if (j > 1000) return u <= b;
  }
}

inline double levy_sample(Rng& rng) {
  double z;
  do {
    z = rng.normal();
  } while (z == 0.0);
  return 1.0 / (z * z);
}

// Michael-Schucany-Haas inverse Gaussian sampler, mean nu, shape lam.
inline double inverse_gaussian_sample(double nu, double lam, Rng& rng) {
  const double z = rng.normal();
  const double y = z * z;
  const double x = nu + 0.5 * nu * nu * y / lam -
                   0.5 * nu / lam * std::sqrt(4.0 * nu * lam * y + nu * nu * y * y);
  if (rng.uniform() <= nu / (nu + x)) return x;
  return nu * nu / x;
}

// Exit time of a unit-half-width symmetric interval for Brownian motion with
// drift mu started at the center (exit level +-1, unit diffusion).  Exact
// two-piece rejection sampler: an inverse-Gaussian-shaped piece on (0, t*]
// and a shifted-exponential piece on (t*, inf), each accepted against its
// alternating series ratio.
inline double sym_exit_time_unit(double mu, Rng& rng) {
  constexpr double kTstar = 0.64;
  const double amu = std::fabs(mu);
  const double lambda = 0.125 * M_PI * M_PI + 0.5 * mu * mu;
  double p_small = 1.0;
  if (amu <= 30.0) {
    double f_small;  // proposal cdf of the small piece at t*
    if (amu < 1e-12) {
      f_small = std::erfc(1.0 / std::sqrt(2.0 * kTstar));
    } else {
      const double rt = std::sqrt(kTstar);
      f_small = normal_cdf((kTstar * amu - 1.0) / rt) +
                std::exp(2.0 * amu) * normal_cdf(-(kTstar * amu + 1.0) / rt);
    }
    const double mass_small = 2.0 * std::exp(-amu) * f_small;
    const double mass_large = 0.5 * M_PI * std::exp(-lambda * kTstar) / lambda;
    p_small = mass_small / (mass_small + mass_large);
  }
  for (;;) {
    double t, c2;
    if (rng.uniform() < p_small) {
      do {
        t = amu < 1e-12 ? levy_sample(rng) : inverse_gaussian_sample(1.0 / amu, 1.0, rng);
      } while (t > kTstar);
      c2 = 0.5 / t;
    } else {
      t = kTstar + rng.exponential(lambda);
      c2 = 0.125 * M_PI * M_PI * t;
    }
    if (series_accept(c2, rng)) return t;
  }
}

}  // namespace wfpt_detail

struct DdmSampleOptions {
  enum class Method { exact, euler };
  Method method = Method::exact;
  double euler_dt = 1e-4;
};

// Draw one (response, rt) pair from the diffusion model.  The exact method
// decomposes the path into successive exits from maximal symmetric
// sub-intervals, each simulated by an exact rejection sampler; the Euler
// fallback discretizes the SDE with a Brownian-bridge boundary-crossing
// correction and is approximate at finite step size.
inline TrialOutcome ddm_sample(const DdmParams& p, Rng& rng,
                               const DdmSampleOptions& opt = {}) {
  ddm_check_params(p);
  if (opt.method == DdmSampleOptions::Method::euler) {
    const double dt = opt.euler_dt;
    if (!(dt > 0.0)) throw std::invalid_argument("euler_dt must be positive");
    const double sdt = std::sqrt(dt);
    double x = p.z * p.a;
    double t = 0.0;
    for (;;) {
      const double xn = x + p.v * dt + sdt * rng.normal();
      t += dt;
      if (xn >= p.a) return {1, p.t0 + t};
      if (xn <= 0.0) return {0, p.t0 + t};
      if (rng.uniform() < std::exp(-2.0 * (p.a - x) * (p.a - xn) / dt)) {
        return {1, p.t0 + t};
      }
      if (rng.uniform() < std::exp(-2.0 * x * xn / dt)) {
        return {0, p.t0 + t};
      }
      x = xn;
    }
  }
  double x = p.z * p.a;
  double t = 0.0;
  for (long iter = 0; iter < 100000000L; ++iter) {
    const double lower_gap = x;
    const double upper_gap = p.a - x;
    const double half = std::min(lower_gap, upper_gap);
    const double mu = p.v * half;
    t += half * half * wfpt_detail::sym_exit_time_unit(mu, rng);
    const bool up = rng.uniform() < 1.0 / (1.0 + std::exp(-2.0 * mu));
    if (up) {
      if (upper_gap <= lower_gap) return {1, p.t0 + t};
      x += half;
    } else {
      if (lower_gap <= upper_gap) return {0, p.t0 + t};
      x -= half;
    }
  }
  throw std::runtime_error("ddm_sample: exit decomposition failed to terminate");
}

}  // namespace regddm
