#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <queue>
#include <vector>

namespace slevolve {

struct QuadResult {
  double value = 0;
  double error = 0;  // estimated absolute error
  int intervals = 0;
};

/// Globally adaptive Gauss-Kronrod (15/31) on [a, b]: the interval with the
/// largest error estimate is bisected until the total error falls below
/// rel_tol * |value| (plus a round-off floor) or the interval budget runs out.
template <class F>
QuadResult integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-14, int max_intervals = 4000) {
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  using G = boost::math::quadrature::gauss<double, 15>;
  static const auto& xk = GK::abscissa();
  static const auto& wk = GK::weights();
  static const auto& wg = G::weights();  // Gauss nodes are the even Kronrod nodes
  struct Piece {
    double lo, hi, value, error, floor;
    bool operator<(const Piece& o) const { return error < o.error; }
  };
  auto eval = [&](double lo, double hi) {
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    const double f0 = f(c);
    double k = wk[0] * f0, g = wg[0] * f0, l1 = wk[0] * std::abs(f0);
    for (std::size_t i = 1; i < xk.size(); ++i) {
      const double fs = f(c - h * xk[i]) + f(c + h * xk[i]);
      k += wk[i] * fs;
      l1 += wk[i] * std::abs(fs);
      if (i % 2 == 0) g += wg[i / 2] * fs;
    }
    const double fl = 50 * std::numeric_limits<double>::epsilon() * std::abs(h) * l1;
    return Piece{lo, hi, h * k, std::max(std::abs(h * (k - g)), fl), fl};
  };
  std::priority_queue<Piece> heap;
  Piece first = eval(a, b);
  heap.push(first);
  double value = first.value, error = first.error, floor = first.floor;
  int count = 1;
  while (count < max_intervals) {
    // pieces already at their round-off floor cannot improve
    if (error <= rel_tol * std::abs(value) + floor) break;
    Piece worst = heap.top();
    const double mid = 0.5 * (worst.lo + worst.hi);
    if (!(mid > worst.lo && mid < worst.hi)) break;
    heap.pop();
    Piece l = eval(worst.lo, mid), r = eval(mid, worst.hi);
    value += l.value + r.value - worst.value;
    error += l.error + r.error - worst.error;
    floor += l.floor + r.floor - worst.floor;
    heap.push(l);
    heap.push(r);
    ++count;
  }
  // resum to shed accumulated update error
  QuadResult res;
  res.value = 0;
  res.error = 0;
  while (!heap.empty()) {
    res.value += heap.top().value;
    res.error += heap.top().error;
    heap.pop();
  }
  res.intervals = count;
  return res;
}

}  // namespace slevolve
