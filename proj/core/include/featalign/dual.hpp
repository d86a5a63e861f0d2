#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <ostream>

namespace featalign {

/// Forward-mode scalar carrying a single derivative channel.
///
/// Used to differentiate the unrolled solver with respect to one damping
/// parameter at a time. Comparisons and branch decisions act on the value
/// part only.
struct Dual {
  double v{0.0};
  double d{0.0};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit lift of constants
  Dual(double value, double deriv) : v(value), d(deriv) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v /= o.v;
    return *this;
  }
};

inline constexpr double value(double x) { return x; }
inline double value(const Dual& x) { return x.v; }

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual operator+(const Dual& a) { return a; }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
inline bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }

inline Dual sqrt(const Dual& x) {
  const double s = std::sqrt(x.v);
  return {s, x.d / (2.0 * s)};
}
inline Dual abs(const Dual& x) { return x.v < 0.0 ? -x : x; }
inline Dual fabs(const Dual& x) { return abs(x); }
inline Dual sin(const Dual& x) { return {std::sin(x.v), std::cos(x.v) * x.d}; }
inline Dual cos(const Dual& x) { return {std::cos(x.v), -std::sin(x.v) * x.d}; }
inline Dual tan(const Dual& x) {
  const double c = std::cos(x.v);
  return {std::tan(x.v), x.d / (c * c)};
}
inline Dual exp(const Dual& x) {
  const double e = std::exp(x.v);
  return {e, e * x.d};
}
inline Dual log(const Dual& x) { return {std::log(x.v), x.d / x.v}; }
inline Dual atan2(const Dual& y, const Dual& x) {
  const double den = x.v * x.v + y.v * y.v;
  return {std::atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / den};
}
inline Dual acos(const Dual& x) {
  return {std::acos(x.v), -x.d / std::sqrt(1.0 - x.v * x.v)};
}
inline Dual pow(const Dual& x, double p) {
  return {std::pow(x.v, p), p * std::pow(x.v, p - 1.0) * x.d};
}
// Piecewise-constant rounding: derivative dropped.
inline Dual floor(const Dual& x) { return {std::floor(x.v), 0.0}; }
inline Dual ceil(const Dual& x) { return {std::ceil(x.v), 0.0}; }

inline const Dual& min(const Dual& a, const Dual& b) { return b < a ? b : a; }
inline const Dual& max(const Dual& a, const Dual& b) { return a < b ? b : a; }

inline bool isfinite(const Dual& x) { return std::isfinite(x.v) && std::isfinite(x.d); }

inline std::ostream& operator<<(std::ostream& os, const Dual& x) {
  return os << x.v << "+" << x.d << "e";
}

}  // namespace featalign

namespace Eigen {

template <>
struct NumTraits<featalign::Dual> : NumTraits<double> {
  typedef featalign::Dual Real;
  typedef featalign::Dual NonInteger;
  typedef featalign::Dual Nested;
  typedef featalign::Dual Literal;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3
  };
  static inline Real epsilon() { return Real(NumTraits<double>::epsilon()); }
  static inline Real dummy_precision() {
    return Real(NumTraits<double>::dummy_precision());
  }
  static inline Real highest() { return Real(NumTraits<double>::highest()); }
  static inline Real lowest() { return Real(NumTraits<double>::lowest()); }
};

}  // namespace Eigen
