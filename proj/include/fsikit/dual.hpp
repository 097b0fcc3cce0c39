#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace fsikit {

/// First-order forward-mode scalar with a fixed number of derivative slots.
/// Used to obtain exact element-level Jacobians and shape partials from the
/// same integrand code that evaluates residuals.
template <int N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}

  static Dual seeded(double value, int slot) {
    Dual r(value);
    r.d[slot] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < N; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < N; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < N; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator+=(double a) {
    v += a;
    return *this;
  }
  Dual& operator-=(double a) {
    v -= a;
    return *this;
  }
  Dual& operator*=(double a) {
    v *= a;
    for (int i = 0; i < N; ++i) d[i] *= a;
    return *this;
  }
};

template <int N>
inline Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N>
inline Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N>
inline Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
template <int N>
inline Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  const double ib = 1.0 / b.v;
  Dual<N> r(a.v * ib);
  for (int i = 0; i < N; ++i) r.d[i] = (a.d[i] - r.v * b.d[i]) * ib;
  return r;
}
template <int N>
inline Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r(-a.v);
  for (int i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <int N>
inline Dual<N> operator+(Dual<N> a, double b) { return a += b; }
template <int N>
inline Dual<N> operator+(double a, Dual<N> b) { return b += a; }
template <int N>
inline Dual<N> operator-(Dual<N> a, double b) { return a -= b; }
template <int N>
inline Dual<N> operator-(double a, const Dual<N>& b) { return (-b) += a; }
template <int N>
inline Dual<N> operator*(Dual<N> a, double b) { return a *= b; }
template <int N>
inline Dual<N> operator*(double a, Dual<N> b) { return b *= a; }
template <int N>
inline Dual<N> operator/(Dual<N> a, double b) { return a *= (1.0 / b); }
template <int N>
inline Dual<N> operator/(double a, const Dual<N>& b) {
  return Dual<N>(a) / b;
}

template <int N>
inline bool operator<(const Dual<N>& a, double b) { return a.v < b; }
template <int N>
inline bool operator>(const Dual<N>& a, double b) { return a.v > b; }
template <int N>
inline bool operator<=(const Dual<N>& a, double b) { return a.v <= b; }
template <int N>
inline bool operator>=(const Dual<N>& a, double b) { return a.v >= b; }

template <int N>
inline Dual<N> sqrt(const Dual<N>& a) {
  const double s = std::sqrt(a.v);
  Dual<N> r(s);
  const double c = 0.5 / s;
  for (int i = 0; i < N; ++i) r.d[i] = c * a.d[i];
  return r;
}
template <int N>
inline Dual<N> abs(const Dual<N>& a) {
  return a.v >= 0.0 ? a : -a;
}

inline double value(double x) { return x; }
template <int N>
inline double value(const Dual<N>& x) { return x.v; }

using std::abs;
using std::sqrt;

}  // namespace fsikit
