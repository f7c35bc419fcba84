#pragma once

#include <array>
#include <cmath>

namespace regddm {

// Forward-mode scalar carrying four partial derivatives.  Used to push exact
// gradients through the first-passage density without a second code path.
struct Dual4 {
  double v = 0.0;
  std::array<double, 4> d{0.0, 0.0, 0.0, 0.0};

  Dual4() = default;
  Dual4(double value) : v(value) {}  // NOLINT: implicit by design
  Dual4(double value, int slot, double seed = 1.0) : v(value) { d[slot] = seed; }

  Dual4& operator+=(const Dual4& o) {
    v += o.v;
    for (int i = 0; i < 4; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual4& operator-=(const Dual4& o) {
    v -= o.v;
    for (int i = 0; i < 4; ++i) d[i] -= o.d[i];
    return *this;
  }
};

inline Dual4 operator+(Dual4 a, const Dual4& b) { return a += b; }
inline Dual4 operator-(Dual4 a, const Dual4& b) { return a -= b; }
inline Dual4 operator-(const Dual4& a) {
  Dual4 r(-a.v);
  for (int i = 0; i < 4; ++i) r.d[i] = -a.d[i];
  return r;
}

inline Dual4 operator*(const Dual4& a, const Dual4& b) {
  Dual4 r(a.v * b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

inline Dual4 operator/(const Dual4& a, const Dual4& b) {
  Dual4 r(a.v / b.v);
  const double ib2 = 1.0 / (b.v * b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * ib2;
  return r;
}

inline Dual4 exp(const Dual4& a) {
  Dual4 r(std::exp(a.v));
  for (int i = 0; i < 4; ++i) r.d[i] = r.v * a.d[i];
  return r;
}

inline Dual4 log(const Dual4& a) {
  Dual4 r(std::log(a.v));
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] / a.v;
  return r;
}

inline Dual4 sqrt(const Dual4& a) {
  Dual4 r(std::sqrt(a.v));
  const double s = 0.5 / r.v;
  for (int i = 0; i < 4; ++i) r.d[i] = s * a.d[i];
  return r;
}

inline Dual4 sin(const Dual4& a) {
  Dual4 r(std::sin(a.v));
  const double c = std::cos(a.v);
  for (int i = 0; i < 4; ++i) r.d[i] = c * a.d[i];
  return r;
}

inline Dual4 cos(const Dual4& a) {
  Dual4 r(std::cos(a.v));
  const double s = -std::sin(a.v);
  for (int i = 0; i < 4; ++i) r.d[i] = s * a.d[i];
  return r;
}

// value(): lets generic code extract a plain double from either scalar type.
inline double value(double x) { return x; }
inline double value(const Dual4& x) { return x.v; }

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;

}  // namespace regddm
