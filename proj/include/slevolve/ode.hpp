#pragma once

// Thin driver around Boost.Odeint's controlled Runge-Kutta-Fehlberg 7(8)
// stepper: exact landing on output times, a per-step acceptance hook (used
// for phase unwrapping), and a blow-up guard with bisection localization.

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "slevolve/error.hpp"

namespace slevolve {

using State = std::vector<double>;

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h0 = 1e-3;
  double h_max = std::numeric_limits<double>::infinity();
  double guard = 1e8;  // escape threshold on the guard norm
  std::size_t max_steps = 20'000'000;
};

struct OdeStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool escaped = false;
  double escape_time = std::numeric_limits<double>::quiet_NaN();
};

inline double euclid_norm(const State& x) {
  double s = 0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

template <class System>
class OdeDriver {
 public:
  using Observer = std::function<void(double, const State&)>;
  using Accept = std::function<bool(const State&, const State&)>;
  using Norm = std::function<double(const State&)>;

  OdeDriver(System sys, OdeOptions opt) : sys_(std::move(sys)), opt_(opt), h_(opt.h0) {}

  /// Advance (x, t) to t_end. Stops early on escape (stats.escaped), in which
  /// case (x, t) is the last state below the guard.
  OdeStats advance(State& x, double& t, double t_end, const Observer& obs = {}, const Accept& accept = {},
                   const Norm& guard_norm = euclid_norm) {
    namespace odeint = boost::numeric::odeint;
    OdeStats st;
    if (t_end == t) return st;
    const double dir = t_end > t ? 1.0 : -1.0;
    auto stepper = odeint::make_controlled(opt_.atol, opt_.rtol, odeint::runge_kutta_fehlberg78<State>());
    auto rhs = [this](const State& y, State& dy, double tt) { sys_(y, dy, tt); };
    double h = dir * std::min(std::abs(h_), opt_.h_max);
    State x_old;
    while (dir * (t_end - t) > 0) {
      if (st.accepted + st.rejected > opt_.max_steps)
        throw numerical_failure("ode: step budget exhausted");
      const double remaining = t_end - t;
      const bool clipped = std::abs(h) >= std::abs(remaining);
      double dt = clipped ? remaining : h;
      x_old = x;
      const double t_old = t;
      auto res = stepper.try_step(rhs, x, t, dt);
      if (res != odeint::success) {
        ++st.rejected;
        h = dt;
        if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t))) {
          st.escaped = true;
          st.escape_time = t;
          return st;
        }
        continue;
      }
      // A rejection that survives step refinement is a genuine passage
      // through a zero of some component (possible when A = 0); accept it.
      const bool refined = std::abs(dt) < 1e-12 * std::max(1.0, std::abs(t_old));
      if (accept && !refined && !accept(x_old, x)) {
        x = x_old;
        t = t_old;
        h = 0.5 * (clipped ? remaining : h);
        ++st.rejected;
        continue;
      }
      // dt now holds the suggested next step; keep it unless we clipped.
      if (!clipped || std::abs(dt) > std::abs(h)) h = dt;
      h = dir * std::min(std::abs(h), opt_.h_max);
      if (guard_norm(x) > opt_.guard) {
        localize_escape(x_old, t_old, t - t_old, guard_norm, st);
        x = x_old;
        t = st.escape_time;
        // x_old was replaced by the last state below the guard
        return st;
      }
      ++st.accepted;
      if (obs) obs(t, x);
    }
    h_ = h;
    return st;
  }

  const System& system() const { return sys_; }

 private:
  // Bisect on the span from (x0, t0) to find where the guard is crossed.
  void localize_escape(State& x0, double t0, double span, const Norm& guard_norm, OdeStats& st) {
    OdeOptions inner = opt_;
    inner.guard = std::numeric_limits<double>::infinity();
    double lo = 0, hi = span;
    State good = x0;
    for (int it = 0; it < 60 && std::abs(hi - lo) > 1e-14 * std::max(1.0, std::abs(t0)); ++it) {
      const double mid = 0.5 * (lo + hi);
      State y = x0;
      double tt = t0;
      OdeDriver sub(sys_, inner);
      sub.h_ = mid / 8;
      sub.advance(y, tt, t0 + mid);
      if (guard_norm(y) > opt_.guard) {
        hi = mid;
      } else {
        lo = mid;
        good = y;
      }
    }
    x0 = good;
    st.escaped = true;
    st.escape_time = t0 + lo;
  }

  System sys_;
  OdeOptions opt_;
  double h_;
};

template <class System>
OdeDriver<System> make_driver(System sys, OdeOptions opt = {}) {
  return OdeDriver<System>(std::move(sys), opt);
}

}  // namespace slevolve
