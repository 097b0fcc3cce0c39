#pragma once

#include <cmath>

namespace fsikit {

/// 2-vectors and 2x2 matrices over an arbitrary scalar (double or Dual).
template <class T>
struct Vec2 {
  T x{}, y{};

  Vec2() = default;
  Vec2(T a, T b) : x(a), y(b) {}

  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  T& operator[](int i) { return i == 0 ? x : y; }
  const T& operator[](int i) const { return i == 0 ? x : y; }
};

template <class T>
inline Vec2<T> operator+(Vec2<T> a, const Vec2<T>& b) { return a += b; }
template <class T>
inline Vec2<T> operator-(Vec2<T> a, const Vec2<T>& b) { return a -= b; }
template <class T, class S>
inline auto operator*(const S& s, const Vec2<T>& a) {
  using R = decltype(s * a.x);
  return Vec2<R>{s * a.x, s * a.y};
}
template <class T>
inline T dot(const Vec2<T>& a, const Vec2<T>& b) { return a.x * b.x + a.y * b.y; }

using Vec2d = Vec2<double>;

inline double norm(const Vec2d& a) { return std::sqrt(a.x * a.x + a.y * a.y); }
inline double cross(const Vec2d& a, const Vec2d& b) { return a.x * b.y - a.y * b.x; }

/// Row-major 2x2 matrix; a(i,j).
template <class T>
struct Mat2 {
  T m[2][2] = {{T{}, T{}}, {T{}, T{}}};

  Mat2() = default;
  Mat2(T a00, T a01, T a10, T a11) {
    m[0][0] = a00;
    m[0][1] = a01;
    m[1][0] = a10;
    m[1][1] = a11;
  }
  static Mat2 identity() { return Mat2(T(1.0), T(0.0), T(0.0), T(1.0)); }

  T& operator()(int i, int j) { return m[i][j]; }
  const T& operator()(int i, int j) const { return m[i][j]; }

  Mat2& operator+=(const Mat2& o) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) m[i][j] += o.m[i][j];
    return *this;
  }
  Mat2& operator-=(const Mat2& o) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) m[i][j] -= o.m[i][j];
    return *this;
  }
};

template <class T>
inline Mat2<T> operator+(Mat2<T> a, const Mat2<T>& b) { return a += b; }
template <class T>
inline Mat2<T> operator-(Mat2<T> a, const Mat2<T>& b) { return a -= b; }

template <class T, class S>
inline auto operator*(const S& s, const Mat2<T>& a) {
  using R = decltype(s * a(0, 0));
  Mat2<R> r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = s * a(i, j);
  return r;
}

template <class T>
inline Mat2<T> operator*(const Mat2<T>& a, const Mat2<T>& b) {
  Mat2<T> r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j);
  return r;
}

template <class T>
inline Vec2<T> operator*(const Mat2<T>& a, const Vec2<T>& v) {
  return {a(0, 0) * v.x + a(0, 1) * v.y, a(1, 0) * v.x + a(1, 1) * v.y};
}

template <class T>
inline Mat2<T> transpose(const Mat2<T>& a) {
  return Mat2<T>(a(0, 0), a(1, 0), a(0, 1), a(1, 1));
}

template <class T>
inline T det(const Mat2<T>& a) {
  return a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
}

template <class T>
inline T trace(const Mat2<T>& a) { return a(0, 0) + a(1, 1); }

template <class T>
inline Mat2<T> inverse(const Mat2<T>& a) {
  const T idet = 1.0 / det(a);
  return Mat2<T>(idet * a(1, 1), -idet * a(0, 1), -idet * a(1, 0), idet * a(0, 0));
}

/// Frobenius inner product A : B.
template <class T>
inline T ddot(const Mat2<T>& a, const Mat2<T>& b) {
  return a(0, 0) * b(0, 0) + a(0, 1) * b(0, 1) + a(1, 0) * b(1, 0) + a(1, 1) * b(1, 1);
}

}  // namespace fsikit
