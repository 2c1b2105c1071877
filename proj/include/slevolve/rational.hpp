#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>

namespace slevolve {

struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Closest continued-fraction convergent of x with denominator <= max_den,
/// provided it lies within tol of x.
inline std::optional<Fraction> recognize_rational(double x, std::int64_t max_den, double tol) {
  if (!std::isfinite(x) || max_den < 1) return std::nullopt;
  // p_{-1}/q_{-1} = 1/0, p_{-2}/q_{-2} = 0/1
  std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
  double r = x;
  for (int it = 0; it < 64; ++it) {
    const double fl = std::floor(r);
    if (std::abs(fl) > 1e15) break;
    const auto a = static_cast<std::int64_t>(fl);
    const std::int64_t p2 = a * p1 + p0;
    const std::int64_t q2 = a * q1 + q0;
    if (q2 > max_den) break;
    Fraction f{p2, q2};
    if (std::abs(f.value() - x) <= tol) return f;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
    const double frac = r - fl;
    if (frac < 1e-300) break;
    r = 1.0 / frac;
  }
  return std::nullopt;
}

}  // namespace slevolve
