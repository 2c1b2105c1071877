#pragma once

// Centred quadric family: the w-system
//   dw_j/dt = +conj(prod_{k != j} w_k)  (j <= a),  -conj(...)  (j > a),
// its reduction to (u, theta_j), the conserved quantity A, the turning
// points of u, the monodromy angles beta_j and the search for closed orbits.

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "slevolve/error.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/ode.hpp"
#include "slevolve/parallel.hpp"
#include "slevolve/quadrature.hpp"
#include "slevolve/rational.hpp"

namespace slevolve {

inline constexpr double kPi = std::numbers::pi;

struct CentredParams {
  int m = 0;
  int a = 0;
  std::vector<double> alphas;
  double A = 0;
  double c = 0;

  double sign(int j) const { return j < a ? 1.0 : -1.0; }  // +u for j <= a (1-based)
  double A_max() const {
    double p = 1;
    for (double x : alphas) p *= x;
    return std::sqrt(std::max(p, 0.0));
  }
};

struct ReducedState {
  double u = 0;
  std::vector<double> thetas;
  double t = 0;

  double theta() const { return std::accumulate(thetas.begin(), thetas.end(), 0.0); }
};

struct BetaResult {
  std::vector<double> betas;
  double period_T = 0;
  double gamma = 0, delta = 0;
  double quadrature_error = 0;
  double beta_sum = 0;
};

enum class CentredCase { a, b, c, d };

inline const char* to_string(CentredCase k) {
  switch (k) {
    case CentredCase::a: return "a";
    case CentredCase::b: return "b";
    case CentredCase::c: return "c";
    default: return "d";
  }
}

// ---------------------------------------------------------------------------
// The w-system.

/// dw/dt for the centred system with `a` leading plus signs.
inline CVec rhs_w(const CVec& w, int a) {
  const Eigen::Index m = w.size();
  detail::require(m >= 1 && a >= 0 && a <= m, "rhs_w: need 0 <= a <= m");
  CVec pre(m + 1), suf(m + 1), out(m);
  pre[0] = 1.0;
  for (Eigen::Index j = 0; j < m; ++j) pre[j + 1] = pre[j] * w[j];
  suf[m] = 1.0;
  for (Eigen::Index j = m; j-- > 0;) suf[j] = suf[j + 1] * w[j];
  for (Eigen::Index j = 0; j < m; ++j) out[j] = (j < a ? 1.0 : -1.0) * std::conj(pre[j] * suf[j + 1]);
  return out;
}

namespace detail {

inline CVec state_to_w(const State& x) {
  CVec w(static_cast<Eigen::Index>(x.size() / 2));
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = cplx(x[2 * j], x[2 * j + 1]);
  return w;
}

inline State w_to_state(const CVec& w) {
  State x(static_cast<std::size_t>(2 * w.size()));
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    x[2 * j] = w[j].real();
    x[2 * j + 1] = w[j].imag();
  }
  return x;
}

inline double wrap_angle(double d) { return std::remainder(d, 2.0 * kPi); }

struct WSystem {
  int a;
  void operator()(const State& x, State& dx, double) const {
    const CVec d = rhs_w(state_to_w(x), a);
    dx = w_to_state(d);
  }
};

}  // namespace detail

struct WSample {
  double t = 0;
  CVec w;
  std::vector<double> thetas;  // continuous lift of arg w_j
};

struct WRun {
  std::vector<WSample> samples;
  OdeStats stats;
  double max_step_conservation_drift = 0;  // max |Im(prod w) - A0| over accepted steps
};

/// Integrate the w-system from w0 at t = 0 through the given output times
/// (monotone in one direction). Angles are lifted by nearest-branch unwrapping;
/// steps that would turn any w_j by more than pi/2 are rejected.
inline WRun integrate_w(const CVec& w0, int a, const std::vector<double>& times, OdeOptions opt = {}) {
  for (Eigen::Index j = 0; j < w0.size(); ++j)
    detail::require(std::abs(w0[j]) > 0, "integrate_w: all w_j must be nonzero");
  WRun run;
  State x = detail::w_to_state(w0);
  double t = 0;
  std::vector<double> lift(static_cast<std::size_t>(w0.size()));
  for (Eigen::Index j = 0; j < w0.size(); ++j) lift[j] = std::arg(w0[j]);
  const double A0 = w0.prod().imag();
  auto driver = make_driver(detail::WSystem{a}, opt);
  auto accept = [](const State& x0, const State& x1) {
    for (std::size_t j = 0; j + 1 < x0.size(); j += 2) {
      const double d = detail::wrap_angle(std::atan2(x1[j + 1], x1[j]) - std::atan2(x0[j + 1], x0[j]));
      if (std::abs(d) > kPi / 2) return false;
    }
    return true;
  };
  State prev = x;
  auto observe = [&](double, const State& y) {
    for (std::size_t j = 0; j < lift.size(); ++j)
      lift[j] += detail::wrap_angle(std::atan2(y[2 * j + 1], y[2 * j]) - std::atan2(prev[2 * j + 1], prev[2 * j]));
    prev = y;
    run.max_step_conservation_drift =
        std::max(run.max_step_conservation_drift, std::abs(detail::state_to_w(y).prod().imag() - A0));
  };
  for (double target : times) {
    OdeStats st = driver.advance(x, t, target, observe, accept);
    run.stats.accepted += st.accepted;
    run.stats.rejected += st.rejected;
    if (st.escaped) {
      run.stats.escaped = true;
      run.stats.escape_time = st.escape_time;
      break;
    }
    run.samples.push_back({t, detail::state_to_w(x), lift});
  }
  return run;
}

// ---------------------------------------------------------------------------
// Reduced variables.

/// Q(u) = prod_{j<=a}(alpha_j + u) prod_{j>a}(alpha_j - u).
inline double Q_of(const CentredParams& p, double u) {
  double q = 1;
  for (int j = 0; j < p.m; ++j) q *= p.alphas[static_cast<std::size_t>(j)] + p.sign(j) * u;
  return q;
}

/// Ascending coefficients of Q.
inline std::vector<double> Q_coeffs(const CentredParams& p) {
  std::vector<double> c{1.0};
  for (int j = 0; j < p.m; ++j) {
    const double a0 = p.alphas[static_cast<std::size_t>(j)], a1 = p.sign(j);
    std::vector<double> n(c.size() + 1, 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      n[i] += a0 * c[i];
      n[i + 1] += a1 * c[i];
    }
    c = std::move(n);
  }
  return c;
}

namespace detail {

inline void check_params_shape(const CentredParams& p) {
  require(p.m >= 2 && p.m <= kMaxDim, "centred: m must lie in [2,16]");
  require(p.a >= 1 && p.a <= p.m, "centred: need 1 <= a <= m");
  require(static_cast<int>(p.alphas.size()) == p.m, "centred: need m alphas");
  for (double x : p.alphas) require(std::isfinite(x), "centred: alphas must be finite");
  require(std::isfinite(p.A) && std::isfinite(p.c), "centred: A and c must be finite");
}

inline double normalization_residual(const std::vector<double>& alphas, int a) {
  double s = 0;
  for (std::size_t j = 0; j < alphas.size(); ++j) s += (static_cast<int>(j) < a ? 1.0 : -1.0) / alphas[j];
  return s;
}

inline double inverse_sum(const std::vector<double>& alphas) {
  double s = 0;
  for (double x : alphas) s += 1.0 / std::abs(x);
  return s;
}

inline bool is_normalized(const CentredParams& p, double rel = 1e-12) {
  for (double x : p.alphas)
    if (!(x > 0)) return false;
  return std::abs(normalization_residual(p.alphas, p.a)) <= rel * inverse_sum(p.alphas);
}

inline void check_case_d(const CentredParams& p) {
  check_params_shape(p);
  require(p.a < p.m, "centred: case (d) requires a < m");
  require(is_normalized(p), "centred: alphas must be positive and normalized (sum_{j<=a} 1/alpha_j = sum_{j>a} 1/alpha_j)");
  require(p.A > 0 && p.A < p.A_max(), "centred: case (d) requires 0 < A < (alpha_1...alpha_m)^{1/2}");
}

}  // namespace detail

struct NormalizeResult {
  double lambda = 0;
  std::vector<double> alphas;
  double residual = 0;
};

/// The unique lambda making alpha_j = |w_j(0)|^2 -+ lambda positive with
/// sum_{j<=a} 1/alpha_j = sum_{j>a} 1/alpha_j.
inline NormalizeResult normalize_lambda(const std::vector<double>& w0_sq, int a) {
  const int m = static_cast<int>(w0_sq.size());
  detail::require(m >= 2 && a >= 1 && a <= m - 1, "normalize_lambda: need 1 <= a <= m-1");
  for (double v : w0_sq) detail::require(std::isfinite(v) && v > 0, "normalize_lambda: |w_j(0)|^2 must be positive");
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    if (j < a) hi = std::min(hi, w0_sq[static_cast<std::size_t>(j)]);
    else lo = std::max(lo, -w0_sq[static_cast<std::size_t>(j)]);
  }
  auto alphas_at = [&](double lam) {
    std::vector<double> al(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) al[static_cast<std::size_t>(j)] = w0_sq[static_cast<std::size_t>(j)] + (j < a ? -lam : lam);
    return al;
  };
  // f increases from -inf at lo to +inf at hi.
  auto f = [&](double lam) { return detail::normalization_residual(alphas_at(lam), a); };
  NormalizeResult r;
  if (f(0.0) == 0.0) {
    r.lambda = 0;
  } else {
    double L = lo, H = hi;
    const double w = H - L;
    // shrink the open bracket until f changes sign strictly inside
    double l = L + 1e-300, h = H - 1e-300;
    for (double eps = 1e-3; eps > 1e-18; eps *= 1e-3) {
      l = L + eps * w;
      h = H - eps * w;
      if (f(l) < 0 && f(h) > 0) break;
    }
    if (f(0.0) < 0) l = std::max(l, 0.0);
    else h = std::min(h, 0.0);
    std::uintmax_t it = 200;
    auto br = boost::math::tools::toms748_solve(f, l, h, boost::math::tools::eps_tolerance<double>(53), it);
    r.lambda = 0.5 * (br.first + br.second);
    // final Newton polish on the analytic derivative
    for (int k = 0; k < 3; ++k) {
      const auto al = alphas_at(r.lambda);
      double fv = 0, df = 0;
      for (int j = 0; j < m; ++j) {
        const double x = al[static_cast<std::size_t>(j)];
        fv += (j < a ? 1.0 : -1.0) / x;
        df += 1.0 / (x * x);
      }
      const double step = fv / df;
      if (!(std::abs(step) < 1e-6 * std::max(1.0, std::abs(r.lambda)))) break;
      r.lambda -= step;
    }
  }
  r.alphas = alphas_at(r.lambda);
  r.residual = detail::normalization_residual(r.alphas, a);
  return r;
}

struct Reduction {
  ReducedState state;
  double A = 0;
  double modulus_mismatch = 0;
};

/// (u, theta_j) and A from w. If `prev` is given, angles are lifted to the
/// branch nearest to it.
inline Reduction reduce(const CVec& w, const CentredParams& p, const std::vector<double>* prev = nullptr) {
  detail::check_params_shape(p);
  detail::require(w.size() == p.m, "reduce: w must have length m");
  Reduction r;
  double usum = 0, scale = 0;
  std::vector<double> us(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j) {
    detail::require(std::abs(w[j]) > 0, "reduce: w_j must be nonzero");
    const double mod2 = std::norm(w[j]);
    us[static_cast<std::size_t>(j)] = p.sign(j) * (mod2 - p.alphas[static_cast<std::size_t>(j)]);
    usum += us[static_cast<std::size_t>(j)];
    scale = std::max(scale, std::abs(p.alphas[static_cast<std::size_t>(j)]) + mod2);
  }
  const double u = usum / p.m;
  for (double x : us) r.modulus_mismatch = std::max(r.modulus_mismatch, std::abs(x - u));
  detail::require(r.modulus_mismatch <= 1e-8 * std::max(1.0, scale),
                  "reduce: moduli |w_j|^2 inconsistent with the alphas");
  r.state.u = u;
  r.state.thetas.resize(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j) {
    double th = std::arg(w[j]);
    if (prev) th = (*prev)[static_cast<std::size_t>(j)] + detail::wrap_angle(th - (*prev)[static_cast<std::size_t>(j)]);
    r.state.thetas[static_cast<std::size_t>(j)] = th;
  }
  r.A = std::sqrt(std::max(Q_of(p, u), 0.0)) * std::sin(r.state.theta());
  return r;
}

/// w from (u, theta_j).
inline CVec expand(const ReducedState& s, const CentredParams& p) {
  CVec w(p.m);
  for (int j = 0; j < p.m; ++j) {
    const double mod2 = p.alphas[static_cast<std::size_t>(j)] + p.sign(j) * s.u;
    detail::require(mod2 > 0, "expand: alpha_j +- u must be positive");
    w[j] = std::polar(std::sqrt(mod2), s.thetas[static_cast<std::size_t>(j)]);
  }
  return w;
}

struct ReducedDerivative {
  double du = 0;
  std::vector<double> dthetas;
  double dtheta = 0;
};

/// du/dt = 2 Q^{1/2} cos(theta), dtheta_j/dt = -+ Q^{1/2} sin(theta) / (alpha_j +- u).
inline ReducedDerivative rhs_reduced(const ReducedState& s, const CentredParams& p) {
  detail::check_params_shape(p);
  detail::require(static_cast<int>(s.thetas.size()) == p.m, "rhs_reduced: need m angles");
  for (int j = 0; j < p.m; ++j)
    detail::require(p.alphas[static_cast<std::size_t>(j)] + p.sign(j) * s.u > 0,
                    "rhs_reduced: state outside the domain alpha_j +- u > 0");
  const double sq = std::sqrt(Q_of(p, s.u));
  const double th = s.theta();
  ReducedDerivative d;
  d.du = 2.0 * sq * std::cos(th);
  d.dthetas.resize(static_cast<std::size_t>(p.m));
  const double S = sq * std::sin(th);
  for (int j = 0; j < p.m; ++j) {
    const double v = -p.sign(j) * S / (p.alphas[static_cast<std::size_t>(j)] + p.sign(j) * s.u);
    d.dthetas[static_cast<std::size_t>(j)] = v;
    d.dtheta += v;
  }
  return d;
}

inline CentredCase classify_case(const CentredParams& p) {
  const double Am = p.A_max();
  if (std::abs(p.A) <= 1e-12 * std::max(1.0, Am)) return CentredCase::a;
  if (p.a == p.m) return CentredCase::b;
  if (std::abs(std::abs(p.A) - Am) <= 1e-10 * std::max(1.0, Am)) return CentredCase::c;
  return CentredCase::d;
}

/// Case (c): theta_j(t) = theta_j(0) -+ A t / alpha_j, u = 0.
inline std::vector<double> case_c_thetas(const CentredParams& p, const std::vector<double>& theta0, double t) {
  std::vector<double> th(theta0);
  for (int j = 0; j < p.m; ++j) th[static_cast<std::size_t>(j)] -= p.sign(j) * p.A * t / p.alphas[static_cast<std::size_t>(j)];
  return th;
}

// ---------------------------------------------------------------------------
// Turning points and quadrature.

struct TurningPoints {
  double gamma = 0, delta = 0;
  double dQ0 = 0;  // Q'(0), zero for normalized alphas
};

inline TurningPoints turning_points(const CentredParams& p) {
  detail::check_case_d(p);
  double lo = std::numeric_limits<double>::infinity(), hi = lo;
  for (int j = 0; j < p.m; ++j) {
    if (j < p.a) lo = std::min(lo, p.alphas[static_cast<std::size_t>(j)]);
    else hi = std::min(hi, p.alphas[static_cast<std::size_t>(j)]);
  }
  const double A2 = p.A * p.A;
  auto f = [&](double u) { return Q_of(p, u) - A2; };
  auto solve = [&](double x0, double x1) {
    std::uintmax_t it = 300;
    const double f0 = f(x0), f1 = f(x1);
    if (f0 == 0) return x0;
    if (f1 == 0) return x1;
    auto br = boost::math::tools::toms748_solve(f, x0, x1, f0, f1, boost::math::tools::eps_tolerance<double>(53), it);
    return 0.5 * (br.first + br.second);
  };
  TurningPoints tp;
  tp.gamma = solve(-lo, 0.0);
  tp.delta = solve(0.0, hi);
  const auto c = Q_coeffs(p);
  tp.dQ0 = c.size() > 1 ? c[1] : 0.0;
  return tp;
}

namespace detail {

// (Q(u) - A^2) / ((u - gamma)(delta - u)) by deflating the polynomial.
class DeflatedKernel {
 public:
  DeflatedKernel(const CentredParams& p, double gamma, double delta) {
    auto c = Q_coeffs(p);
    c[0] -= p.A * p.A;
    c = deflate(c, gamma);
    c = deflate(c, delta);
    for (double& x : c) x = -x;  // (u-g)(u-d) = -(u-g)(d-u)
    r_ = std::move(c);
  }
  double operator()(double u) const {
    double s = 0;
    for (std::size_t i = r_.size(); i-- > 0;) s = s * u + r_[i];
    return s;
  }

 private:
  static std::vector<double> deflate(const std::vector<double>& c, double r) {
    const std::size_t d = c.size() - 1;
    std::vector<double> q(d);
    q[d - 1] = c[d];
    for (std::size_t i = d - 1; i >= 1; --i) q[i - 1] = c[i] + r * q[i];
    return q;
  }
  std::vector<double> r_;
};

// alpha_j +- u(psi), anchored at the turning point where it is smallest so
// that the near-root factor never comes out of a cancellation.
struct ShiftedFactor {
  double base, width, sg;
  ShiftedFactor(double alpha, double sign, double gamma, double delta)
      : base(sign > 0 ? alpha + gamma : alpha - delta), width(delta - gamma), sg(sign) {}
  double operator()(double psi) const {
    const double s = sg > 0 ? std::sin(psi) : std::cos(psi);
    return base + width * s * s;
  }
};

}  // namespace detail

/// Monodromy angles and period, by quadrature over [gamma, delta] after the
/// substitution u = gamma + (delta - gamma) sin^2(psi).
inline BetaResult betas(const CentredParams& p, double rel_tol = 1e-14) {
  detail::check_case_d(p);
  const TurningPoints tp = turning_points(p);
  const double g = tp.gamma, d = tp.delta;
  const detail::DeflatedKernel R(p, g, d);
  auto u_of = [g, d](double psi) {
    const double s = std::sin(psi);
    return g + (d - g) * s * s;
  };
  BetaResult out;
  out.gamma = g;
  out.delta = d;
  auto check = [&](const QuadResult& q) {
    if (!(std::abs(q.error) <= 1e-9 * std::max(1.0, std::abs(q.value))) || !std::isfinite(q.value))
      throw numerical_failure("betas: quadrature did not converge (error estimate " + std::to_string(q.error) + ")");
    out.quadrature_error = std::max(out.quadrature_error, q.error);
  };
  const QuadResult qt = integrate_adaptive([&](double psi) { return 2.0 / std::sqrt(R(u_of(psi))); }, 0.0, kPi / 2,
                                           rel_tol);
  check(qt);
  out.period_T = qt.value;
  out.betas.resize(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j) {
    const double sg = p.sign(j);
    const detail::ShiftedFactor den(p.alphas[static_cast<std::size_t>(j)], sg, g, d);
    auto f = [&](double psi) { return 2.0 / (den(psi) * std::sqrt(R(u_of(psi)))); };
    const QuadResult q = integrate_adaptive(f, 0.0, kPi / 2, rel_tol);
    check(q);
    out.betas[static_cast<std::size_t>(j)] = -sg * p.A * q.value;
  }
  out.beta_sum = std::accumulate(out.betas.begin(), out.betas.end(), 0.0);
  return out;
}

struct QuadratureSolution {
  std::vector<double> dthetas;  // theta_j(u) - theta_j(u0)
  double t = 0;                 // t(u) - t(u0)
  double error = 0;
};

/// theta_j(u) and t(u) along the increasing branch, relative to u0.
inline QuadratureSolution quadrature_solution(const CentredParams& p, double u0, double u) {
  detail::check_case_d(p);
  const TurningPoints tp = turning_points(p);
  const double g = tp.gamma, d = tp.delta;
  detail::require(u0 >= g && u0 <= d && u >= g && u <= d, "quadrature_solution: u outside [gamma, delta]");
  const detail::DeflatedKernel R(p, g, d);
  auto psi_of = [g, d](double x) { return std::asin(std::sqrt(std::clamp((x - g) / (d - g), 0.0, 1.0))); };
  auto u_of = [g, d](double psi) {
    const double s = std::sin(psi);
    return g + (d - g) * s * s;
  };
  const double p0 = psi_of(u0), p1 = psi_of(u);
  QuadratureSolution out;
  const QuadResult qt = integrate_adaptive([&](double psi) { return 1.0 / std::sqrt(R(u_of(psi))); }, p0, p1, 1e-14);
  out.t = qt.value;
  out.error = qt.error;
  out.dthetas.resize(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j) {
    const double sg = p.sign(j);
    const detail::ShiftedFactor den(p.alphas[static_cast<std::size_t>(j)], sg, g, d);
    auto f = [&](double psi) { return 1.0 / (den(psi) * std::sqrt(R(u_of(psi)))); };
    const QuadResult q = integrate_adaptive(f, p0, p1, 1e-14);
    out.dthetas[static_cast<std::size_t>(j)] = -sg * p.A * q.value;
    out.error = std::max(out.error, q.error);
  }
  return out;
}

struct BetaLimits {
  std::vector<double> at_zero;  // A -> 0
  std::vector<double> at_max;   // A -> (alpha_1...alpha_m)^{1/2}
  int k = 0, l = 0;
};

/// Limits of beta as A tends to either end of (0, A_max).
/// The A -> 0 limit concentrates on the indices whose alpha_j is the
/// smallest in its group: those are the roots of Q nearest to 0.
inline BetaLimits beta_limits(const std::vector<double>& alphas, int a, double tie_rel = 1e-12) {
  const int m = static_cast<int>(alphas.size());
  CentredParams p{m, a, alphas, 0.0, 0.0};
  detail::check_params_shape(p);
  detail::require(a < m, "beta_limits: need a < m");
  detail::require(detail::is_normalized(p), "beta_limits: alphas must be positive and normalized");
  double min_lo = std::numeric_limits<double>::infinity(), min_hi = min_lo;
  for (int j = 0; j < m; ++j) (j < a ? min_lo : min_hi) = std::min(j < a ? min_lo : min_hi, alphas[static_cast<std::size_t>(j)]);
  BetaLimits r;
  r.at_zero.assign(static_cast<std::size_t>(m), 0.0);
  r.at_max.assign(static_cast<std::size_t>(m), 0.0);
  std::vector<bool> tie(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    const double ref = j < a ? min_lo : min_hi;
    tie[static_cast<std::size_t>(j)] = std::abs(alphas[static_cast<std::size_t>(j)] - ref) <= tie_rel * ref;
    if (tie[static_cast<std::size_t>(j)]) (j < a ? r.k : r.l) += 1;
  }
  double s2 = 0;
  for (double x : alphas) s2 += 1.0 / (x * x);
  const double f = 2.0 * kPi / std::sqrt(2.0 * s2);
  for (int j = 0; j < m; ++j) {
    if (tie[static_cast<std::size_t>(j)]) r.at_zero[static_cast<std::size_t>(j)] = j < a ? -kPi / r.k : kPi / r.l;
    r.at_max[static_cast<std::size_t>(j)] = (j < a ? -f : f) / alphas[static_cast<std::size_t>(j)];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Direct ODE measurement of the monodromy.

/// Start on the branch u(0) = 0, theta(0) in (0, pi/2), theta_1(0) = theta(0).
inline CVec centred_start(const CentredParams& p) {
  const double s = p.A / p.A_max();
  detail::require(std::abs(s) <= 1.0, "centred_start: |A| exceeds A_max");
  ReducedState st;
  st.u = 0;
  st.thetas.assign(static_cast<std::size_t>(p.m), 0.0);
  st.thetas[0] = std::asin(s);
  return expand(st, p);
}

struct OdeBetaResult {
  std::vector<double> betas;
  double period_T = 0;
  double conservation_drift = 0;
};

/// beta_j measured by integrating the w-system from u = 0 (increasing) until
/// u next crosses 0 upwards.
inline OdeBetaResult betas_by_ode(const CentredParams& p, OdeOptions opt = {}) {
  detail::check_case_d(p);
  opt.rtol = std::min(opt.rtol, 1e-12);
  opt.atol = std::min(opt.atol, 1e-13);
  const CVec w0 = centred_start(p);
  const double a0 = p.alphas[0];
  auto u_of = [&](const State& x) { return x[0] * x[0] + x[1] * x[1] - a0; };
  auto driver = make_driver(detail::WSystem{p.a}, opt);
  State x = detail::w_to_state(w0), prev = x;
  std::vector<double> lift(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j) lift[static_cast<std::size_t>(j)] = std::arg(w0[j]);
  const double A0 = w0.prod().imag();
  double drift = 0;
  auto accept = [](const State& x0, const State& x1) {
    for (std::size_t j = 0; j + 1 < x0.size(); j += 2)
      if (std::abs(detail::wrap_angle(std::atan2(x1[j + 1], x1[j]) - std::atan2(x0[j + 1], x0[j]))) > kPi / 2)
        return false;
    return true;
  };
  auto advance_lift = [&](const State& from, const State& to, std::vector<double>& L) {
    for (std::size_t j = 0; j < L.size(); ++j)
      L[j] += detail::wrap_angle(std::atan2(to[2 * j + 1], to[2 * j]) - std::atan2(from[2 * j + 1], from[2 * j]));
  };
  double t = 0;
  bool went_negative = false;
  // march step by step until u goes from negative to nonnegative
  double t_prev = 0;
  std::vector<double> lift_prev = lift;
  bool crossed = false;
  auto observe = [&](double tt, const State& y) {
    if (crossed) return;
    drift = std::max(drift, std::abs(detail::state_to_w(y).prod().imag() - A0));
    const double uy = u_of(y);
    if (uy < 0) went_negative = true;
    if (went_negative && uy >= 0) {
      crossed = true;
      return;
    }
    advance_lift(prev, y, lift);
    prev = y;
    t_prev = tt;
  };
  // integrate in chunks, stopping the chunk once the crossing is seen
  const double chunk = 0.05;
  while (!crossed) {
    State y = prev;
    double ty = t_prev;
    auto chunk_driver = make_driver(detail::WSystem{p.a}, opt);
    // observers fire per accepted step; restart from the last uncrossed state
    chunk_driver.advance(y, ty, t_prev + chunk, observe, accept);
    if (t_prev > 1e6) throw numerical_failure("betas_by_ode: no return of u within the time budget");
  }
  (void)driver;
  (void)x;
  (void)t;
  // Locate the crossing inside the last step by secant iteration on tau.
  double lo = 0, hi = chunk, u_lo = u_of(prev);
  State y_hi = prev;
  {
    double tt = t_prev;
    auto dd = make_driver(detail::WSystem{p.a}, opt);
    State y = prev;
    // find first sub-interval end where u >= 0
    for (double step = chunk / 64;; step *= 2) {
      y = prev;
      tt = t_prev;
      dd.advance(y, tt, t_prev + step);
      if (u_of(y) >= 0) {
        hi = step;
        y_hi = y;
        break;
      }
      lo = step;
      u_lo = u_of(y);
    }
  }
  double u_hi = u_of(y_hi);
  State y_star = y_hi;
  double tau = hi;
  for (int it = 0; it < 100; ++it) {
    tau = (u_hi - u_lo != 0) ? lo - u_lo * (hi - lo) / (u_hi - u_lo) : 0.5 * (lo + hi);
    if (!(tau > lo && tau < hi)) tau = 0.5 * (lo + hi);
    State y = prev;
    double tt = t_prev;
    auto dd = make_driver(detail::WSystem{p.a}, opt);
    dd.advance(y, tt, t_prev + tau);
    const double uy = u_of(y);
    y_star = y;
    if (std::abs(uy) <= 4e-16 * a0 || hi - lo <= 1e-15 * std::max(1.0, t_prev)) break;
    if (uy < 0) {
      lo = tau;
      u_lo = uy;
    } else {
      hi = tau;
      u_hi = uy;
    }
  }
  std::vector<double> final_lift = lift;
  advance_lift(prev, y_star, final_lift);
  OdeBetaResult r;
  r.period_T = t_prev + tau;
  r.betas.resize(static_cast<std::size_t>(p.m));
  for (int j = 0; j < p.m; ++j)
    r.betas[static_cast<std::size_t>(j)] = final_lift[static_cast<std::size_t>(j)] - std::arg(w0[j]);
  r.conservation_drift = drift;
  return r;
}

// ---------------------------------------------------------------------------
// Periodic solutions.

struct PeriodicSolution {
  CentredParams params;
  std::vector<std::int64_t> int_angles;
  std::int64_t denom = 1;
  double residual = 0;  // max |beta_j - pi a_j / b|
  double period_T = 0;
  std::string topology;
  bool verified = false;
  double verify_residual = std::numeric_limits<double>::quiet_NaN();
};

/// A family of normalized alphas over at most one extra parameter r.
struct AlphaFamily {
  std::string name;
  int m = 3;
  int a = 1;
  bool two_param = false;
  double r_lo = 0, r_hi = 0;
  std::function<std::vector<double>(double)> alphas;
};

/// alpha = (1, 2, ..., 2)-type: (alpha_1, alpha_2, alpha_2) with 1/alpha_1 = 2/alpha_2.
inline AlphaFamily sym_family() {
  AlphaFamily f;
  f.name = "sym";
  f.alphas = [](double) { return std::vector<double>{1.0, 2.0, 2.0}; };
  return f;
}

/// alpha = (r/(1+r), 1, r), r in [r_lo, r_hi].
inline AlphaFamily ratio_family(double r_lo = 1.0, double r_hi = 3.0) {
  detail::require(r_lo > 0 && r_hi > r_lo, "ratio_family: need 0 < r_lo < r_hi");
  AlphaFamily f;
  f.name = "ratio";
  f.two_param = true;
  f.r_lo = r_lo;
  f.r_hi = r_hi;
  f.alphas = [](double r) { return std::vector<double>{r / (1.0 + r), 1.0, r}; };
  return f;
}

/// Fixed alphas, scanning A only.
inline AlphaFamily fixed_family(int m, int a, std::vector<double> alphas) {
  AlphaFamily f;
  f.name = "fixed";
  f.m = m;
  f.a = a;
  f.alphas = [al = std::move(alphas)](double) { return al; };
  return f;
}

struct SearchOptions {
  std::int64_t b_max = 8;
  double tol = 1e-8;
  int A_grid = 48;
  int r_grid = 12;
  unsigned jobs = 1;
  bool verify = true;
  std::function<void(const std::string&)> progress;
};

namespace detail {

inline std::int64_t lcm64(std::int64_t x, std::int64_t y) { return x / std::gcd(x, y) * y; }

// Integer data for beta if every beta_j / pi is rational with common denominator <= b_max.
inline std::optional<PeriodicSolution> rationalize(const CentredParams& p, const BetaResult& br, std::int64_t b_max,
                                                   double tol) {
  std::int64_t b = 1;
  for (double x : br.betas) {
    auto f = recognize_rational(x / kPi, b_max, tol / kPi);
    if (!f) return std::nullopt;
    b = lcm64(b, f->den);
    if (b > b_max) return std::nullopt;
  }
  PeriodicSolution s;
  s.params = p;
  s.denom = b;
  std::int64_t g = b, sum = 0;
  for (double x : br.betas) {
    const auto aj = static_cast<std::int64_t>(std::llround(x / kPi * static_cast<double>(b)));
    s.int_angles.push_back(aj);
    g = std::gcd(g, std::abs(aj));
    sum += aj;
  }
  if (sum != 0) return std::nullopt;
  if (g > 1) {
    for (auto& aj : s.int_angles) aj /= g;
    s.denom /= g;
  }
  for (std::size_t j = 0; j < br.betas.size(); ++j)
    s.residual = std::max(s.residual, std::abs(br.betas[j] - kPi * static_cast<double>(s.int_angles[j]) /
                                                                  static_cast<double>(s.denom)));
  if (s.residual > tol) return std::nullopt;
  s.period_T = br.period_T;
  return s;
}

// Fractions p/q (q <= b_max) strictly between x0 and x1.
inline std::vector<Fraction> fractions_between(double x0, double x1, std::int64_t b_max) {
  if (x0 > x1) std::swap(x0, x1);
  std::vector<Fraction> out;
  for (std::int64_t q = 1; q <= b_max; ++q) {
    const auto p0 = static_cast<std::int64_t>(std::floor(x0 * static_cast<double>(q))) + 1;
    const auto p1 = static_cast<std::int64_t>(std::ceil(x1 * static_cast<double>(q))) - 1;
    for (std::int64_t pp = p0; pp <= p1; ++pp)
      if (std::gcd(std::abs(pp), q) == 1) out.push_back({pp, q});
  }
  return out;
}

inline double solve_monotone(const std::function<double(double)>& f, double lo, double hi, double flo, double fhi) {
  std::uintmax_t it = 200;
  auto br = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(50), it);
  return 0.5 * (br.first + br.second);
}

}  // namespace detail

/// Topology label for the closed SL m-fold built from a periodic solution.
inline std::string classify_topology(const PeriodicSolution& sol, double c) {
  const int m = sol.params.m, a = sol.params.a;
  if (m == 3 && (a == 1 || a == 2)) {
    // a = 2 maps to a = 1 by reversing coordinates and negating c
    const std::int64_t lone = a == 1 ? sol.int_angles[0] : sol.int_angles[2];
    const double cc = a == 1 ? c : -c;
    const bool even = lone % 2 == 0;
    if (even) {
      if (cc > 0) return "two pieces N_+ and N_− = −N_+, each S^1×R^2";
      if (cc < 0) return "T^2×R, N = −N";
      return "two T²-cones, N_− = −N_+";
    }
    if (cc > 0) return "S^1×R^2, one piece";
    if (cc < 0) return "Klein-bottle line bundle, one end T²×(0,∞)";
    return "T²-cone, one piece, N = −N";
  }
  const std::string s1 = "S^" + std::to_string(a - 1), s2 = "S^" + std::to_string(m - a - 1);
  if (c > 0) return s1 + "×R^" + std::to_string(m - a) + "×S^1 (possibly /Z₂)";
  if (c < 0) return "R^" + std::to_string(a) + "×" + s2 + "×S^1 (possibly /Z₂)";
  return "cone on " + s1 + "×" + s2 + "×S^1 (possibly /Z₂)";
}

/// Parity vector (a_j mod 2).
inline std::vector<int> parity_vector(const PeriodicSolution& sol) {
  std::vector<int> v;
  for (auto aj : sol.int_angles) v.push_back(static_cast<int>(std::abs(aj) % 2));
  return v;
}

/// Re-integrate the w-system over two periods bT and measure
/// max_t |w_j(t + bT) - (-1)^{a_j} w_j(t)| on t in [0, bT].
inline double verify_periodic(const PeriodicSolution& sol, int samples = 200, OdeOptions opt = {}) {
  const CentredParams& p = sol.params;
  opt.rtol = std::min(opt.rtol, 1e-12);
  opt.atol = std::min(opt.atol, 1e-13);
  const double span = static_cast<double>(sol.denom) * sol.period_T;
  std::vector<double> times;
  for (int i = 0; i <= 2 * samples; ++i) times.push_back(span * i / samples);
  const WRun run = integrate_w(centred_start(p), p.a, times, opt);
  if (run.stats.escaped || static_cast<int>(run.samples.size()) != 2 * samples + 1)
    throw numerical_failure("verify_periodic: integration escaped");
  double r = 0;
  for (int i = 0; i <= samples; ++i) {
    const CVec& w0 = run.samples[static_cast<std::size_t>(i)].w;
    const CVec& w1 = run.samples[static_cast<std::size_t>(i + samples)].w;
    for (int j = 0; j < p.m; ++j) {
      const double sg = (sol.int_angles[static_cast<std::size_t>(j)] % 2 == 0) ? 1.0 : -1.0;
      r = std::max(r, std::abs(w1[j] - sg * w0[j]));
    }
  }
  return r;
}

/// Scan a family for parameters where every beta_j / pi is rational with
/// common denominator at most b_max.
inline std::vector<PeriodicSolution> periodic_search(const AlphaFamily& fam, const SearchOptions& opt) {
  detail::require(opt.b_max >= 1, "periodic_search: b_max must be positive");
  detail::require(opt.tol > 0, "periodic_search: tol must be positive");
  detail::require(opt.A_grid >= 4, "periodic_search: A grid too coarse");
  std::vector<PeriodicSolution> found;
  auto params_at = [&](double r, double A) {
    CentredParams p{fam.m, fam.a, fam.alphas(r), A, 0.0};
    return p;
  };
  auto add = [&](PeriodicSolution s) {
    for (const auto& f : found)
      if (f.int_angles == s.int_angles && f.denom == s.denom &&
          std::abs(f.params.A - s.params.A) <= 1e-6 * std::max(1.0, f.params.A) && f.params.alphas == s.params.alphas)
        return;
    found.push_back(std::move(s));
  };
  auto report = [&](const std::string& msg) {
    if (opt.progress) opt.progress(msg);
  };

  // One-parameter scan in A for fixed alphas; returns solutions.
  auto scan_A = [&](double r, int target_index) {
    std::vector<PeriodicSolution> sols;
    const CentredParams base = params_at(r, 0.0);
    const double Am = base.A_max();
    const int N = opt.A_grid;
    std::vector<double> As(static_cast<std::size_t>(N) + 1);
    for (int i = 0; i <= N; ++i) {
      // cluster nodes towards both ends where beta varies fastest
      const double s = 0.5 - 0.5 * std::cos(kPi * i / N);
      As[static_cast<std::size_t>(i)] = Am * (1e-4 + (1 - 2e-4) * s);
    }
    std::vector<BetaResult> grid(As.size());
    parallel_for(As.size(), opt.jobs, [&](std::size_t i) {
      CentredParams p = base;
      p.A = As[i];
      grid[i] = betas(p);
    });
    for (std::size_t i = 0; i < As.size(); ++i) {
      CentredParams p = base;
      p.A = As[i];
      if (auto s = detail::rationalize(p, grid[i], opt.b_max, opt.tol)) sols.push_back(*s);
    }
    const auto j = static_cast<std::size_t>(target_index);
    for (std::size_t i = 0; i + 1 < As.size(); ++i) {
      const double x0 = grid[i].betas[j] / kPi, x1 = grid[i + 1].betas[j] / kPi;
      for (const Fraction& fr : detail::fractions_between(x0, x1, opt.b_max)) {
        auto f = [&](double A) {
          CentredParams p = base;
          p.A = A;
          return betas(p).betas[j] / kPi - fr.value();
        };
        const double A = detail::solve_monotone(f, As[i], As[i + 1], x0 - fr.value(), x1 - fr.value());
        CentredParams p = base;
        p.A = A;
        const BetaResult br = betas(p);
        if (auto s = detail::rationalize(p, br, opt.b_max, opt.tol)) sols.push_back(*s);
      }
    }
    return sols;
  };

  if (!fam.two_param) {
    report("scanning A for family " + fam.name);
    for (auto& s : scan_A(0.0, 0)) add(std::move(s));
  } else {
    detail::require(fam.m == 3, "periodic_search: two-parameter search is implemented for m = 3");
    const int Nr = std::max(2, opt.r_grid);
    std::vector<double> rs(static_cast<std::size_t>(Nr) + 1);
    for (int i = 0; i <= Nr; ++i) rs[static_cast<std::size_t>(i)] = fam.r_lo + (fam.r_hi - fam.r_lo) * i / Nr;
    // For each target beta_1 = pi p/q, follow A*(r) and look for rational beta_2.
    auto A_star = [&](double r, const Fraction& fr) -> std::optional<double> {
      CentredParams base = params_at(r, 0.0);
      const double Am = base.A_max();
      auto f = [&](double A) {
        CentredParams p = base;
        p.A = A;
        return betas(p).betas[0] / kPi - fr.value();
      };
      const double lo = Am * 1e-4, hi = Am * (1 - 1e-4);
      const double flo = f(lo), fhi = f(hi);
      if (flo * fhi > 0) return std::nullopt;
      return detail::solve_monotone(f, lo, hi, flo, fhi);
    };
    // Range of beta_1/pi over the family.
    double bmin = std::numeric_limits<double>::infinity(), bmax = -bmin;
    for (double r : rs) {
      const auto lim = beta_limits(fam.alphas(r), fam.a);
      for (double x : {lim.at_zero[0], lim.at_max[0]}) {
        bmin = std::min(bmin, x / kPi);
        bmax = std::max(bmax, x / kPi);
      }
    }
    const auto targets = detail::fractions_between(bmin - 1e-9, bmax + 1e-9, opt.b_max);
    for (const Fraction& fr : targets) {
      report("following beta_1 = pi*" + std::to_string(fr.num) + "/" + std::to_string(fr.den));
      std::vector<std::optional<double>> As(rs.size());
      std::vector<double> b2(rs.size(), std::numeric_limits<double>::quiet_NaN());
      parallel_for(rs.size(), opt.jobs, [&](std::size_t i) {
        As[i] = A_star(rs[i], fr);
        if (As[i]) b2[i] = betas(params_at(rs[i], *As[i])).betas[1] / kPi;
      });
      for (std::size_t i = 0; i + 1 < rs.size(); ++i) {
        if (!As[i] || !As[i + 1]) continue;
        for (const Fraction& f2 : detail::fractions_between(b2[i], b2[i + 1], opt.b_max)) {
          if (detail::lcm64(fr.den, f2.den) > opt.b_max) continue;
          auto g = [&](double r) {
            auto A = A_star(r, fr);
            if (!A) throw numerical_failure("periodic_search: lost the beta_1 branch");
            return betas(params_at(r, *A)).betas[1] / kPi - f2.value();
          };
          try {
            const double r = detail::solve_monotone(g, rs[i], rs[i + 1], b2[i] - f2.value(), b2[i + 1] - f2.value());
            const auto A = A_star(r, fr);
            if (!A) continue;
            const CentredParams p = params_at(r, *A);
            if (auto s = detail::rationalize(p, betas(p), opt.b_max, opt.tol)) add(std::move(*s));
          } catch (const numerical_failure&) {
          }
        }
      }
    }
  }
  std::sort(found.begin(), found.end(), [](const PeriodicSolution& x, const PeriodicSolution& y) {
    if (x.denom != y.denom) return x.denom < y.denom;
    if (x.int_angles != y.int_angles) return x.int_angles < y.int_angles;
    return x.params.A < y.params.A;
  });
  std::vector<PeriodicSolution> out;
  for (auto& s : found) {
    s.topology = classify_topology(s, s.params.c);
    if (opt.verify) {
      report("verifying (b = " + std::to_string(s.denom) + ")");
      s.verify_residual = verify_periodic(s);
      s.verified = s.verify_residual <= 1e-6;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace slevolve
