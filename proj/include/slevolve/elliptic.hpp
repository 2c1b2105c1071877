#pragma once

// Jacobi elliptic functions by the descending Landen / AGM scale.
// The second argument is always the modulus k, never the parameter k^2.

#include <cmath>
#include <numbers>

#include "slevolve/error.hpp"

namespace slevolve {

struct JacobiTriple {
  double sn = 0, cn = 1, dn = 1;
  double t = 0, k = 0;
};

namespace detail {

inline void check_modulus(double k) {
  require(std::isfinite(k) && k >= 0.0 && k <= 1.0, "elliptic: modulus k must lie in [0,1]");
}

inline double agm(double a, double b) {
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return 0.5 * (a + b);
}

inline double complementary(double k) { return std::sqrt((1.0 - k) * (1.0 + k)); }

}  // namespace detail

/// Real quarter period K(k) = pi / (2 AGM(1, k')).
inline double complete_K(double k) {
  detail::check_modulus(k);
  detail::require(k < 1.0, "complete_K: K diverges at k = 1");
  return std::numbers::pi / (2.0 * detail::agm(1.0, detail::complementary(k)));
}

/// sn, cn, dn at (t, k).
inline JacobiTriple jacobi(double t, double k) {
  detail::check_modulus(k);
  detail::require(std::isfinite(t), "jacobi: argument must be finite");
  JacobiTriple r;
  r.t = t;
  r.k = k;
  if (k == 0.0) {
    r.sn = std::sin(t);
    r.cn = std::cos(t);
    r.dn = 1.0;
    return r;
  }
  if (k == 1.0) {
    r.sn = std::tanh(t);
    r.cn = r.dn = 1.0 / std::cosh(t);
    return r;
  }

  // Reduce into [-2K, 2K) so the amplitude recurrence starts small.
  const double K = complete_K(k);
  double x = std::remainder(t, 4.0 * K);

  constexpr int kMax = 32;
  double a[kMax], c[kMax];
  a[0] = 1.0;
  double b = detail::complementary(k);
  c[0] = k;
  int n = 0;
  while (std::abs(c[n]) > 1e-17 && n + 1 < kMax) {
    a[n + 1] = 0.5 * (a[n] + b);
    c[n + 1] = 0.5 * (a[n] - b);
    b = std::sqrt(a[n] * b);
    ++n;
  }
  double phi = std::ldexp(a[n] * x, n);
  for (int i = n; i > 0; --i) phi = 0.5 * (phi + std::asin(c[i] / a[i] * std::sin(phi)));
  r.sn = std::sin(phi);
  r.cn = std::cos(phi);
  // k'^2 + k^2 cn^2 has no cancellation, unlike 1 - k^2 sn^2 near k = 1;
  // the ratio cos(phi0)/cos(phi1 - phi0) degenerates where cn = 0.
  const double kc = detail::complementary(k);
  r.dn = std::sqrt(kc * kc + k * k * r.cn * r.cn);
  return r;
}

}  // namespace slevolve
