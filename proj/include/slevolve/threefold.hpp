#pragma once

// m = 3, a = 1: the cross-section circle of the T^2-cones, the conformal
// parametrization Phi(s, t) of the link in S^5, and the explicit
// paraboloid solutions for m = 3.

#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "slevolve/centred.hpp"
#include "slevolve/elliptic.hpp"
#include "slevolve/error.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/parallel.hpp"

namespace slevolve {

/// (conj(w2 w3), -conj(w3 w1), -conj(w1 w2)).
inline std::array<cplx, 3> rhs_w3(const std::array<cplx, 3>& w) {
  return {std::conj(w[1] * w[2]), -std::conj(w[2] * w[0]), -std::conj(w[0] * w[1])};
}

struct CrossSection {
  std::array<double, 3> alphas{};
  double mu = 0, nu = 0;
  bool swapped = false;  // alpha_2 > alpha_3: roles of x_2 and x_3 exchanged
  // The conformal factor in dx/ds is fixed to +1, or -1 in the swapped layout.
  double gamma = 1;

  /// x_j(s).
  std::array<double, 3> x(double s) const {
    const JacobiTriple J = jacobi(mu * s, nu);
    const double a1 = alphas[0], a2 = alphas[1], a3 = alphas[2];
    if (!swapped) return {J.dn / std::sqrt(a1 + a2), J.cn / std::sqrt(a1 + a2), J.sn / std::sqrt(a1 + a3)};
    return {J.dn / std::sqrt(a1 + a3), J.sn / std::sqrt(a1 + a2), J.cn / std::sqrt(a1 + a3)};
  }

  /// dx_j/ds from the derivative formulas of sn, cn, dn.
  std::array<double, 3> dx(double s) const {
    const JacobiTriple J = jacobi(mu * s, nu);
    const double a1 = alphas[0], a2 = alphas[1], a3 = alphas[2];
    const double dsn = J.cn * J.dn, dcn = -J.sn * J.dn, ddn = -nu * nu * J.sn * J.cn;
    if (!swapped)
      return {mu * ddn / std::sqrt(a1 + a2), mu * dcn / std::sqrt(a1 + a2), mu * dsn / std::sqrt(a1 + a3)};
    return {mu * ddn / std::sqrt(a1 + a3), mu * dsn / std::sqrt(a1 + a2), mu * dcn / std::sqrt(a1 + a3)};
  }

  /// v(s) = x_3^2 (x_2^2 in the swapped layout).
  double v(double s) const {
    const auto xs = x(s);
    return swapped ? xs[1] * xs[1] : xs[2] * xs[2];
  }

  /// Period 4K(nu)/mu in s.
  double period() const { return 4.0 * complete_K(nu) / mu; }

  /// Residuals of alpha.x^2 = 1 and x1^2 - x2^2 - x3^2 = 0.
  std::array<double, 2> constraint_residuals(double s) const {
    const auto xs = x(s);
    return {std::abs(alphas[0] * xs[0] * xs[0] + alphas[1] * xs[1] * xs[1] + alphas[2] * xs[2] * xs[2] - 1.0),
            std::abs(xs[0] * xs[0] - xs[1] * xs[1] - xs[2] * xs[2])};
  }

  /// Residual of dx/ds = gamma((a2-a3)x2x3, -(a1+a3)x3x1, (a1+a2)x1x2) using the supplied derivative.
  std::array<double, 3> ode_residuals(double s, const std::array<double, 3>& d) const {
    const auto xs = x(s);
    const double a1 = alphas[0], a2 = alphas[1], a3 = alphas[2];
    return {std::abs(d[0] - gamma * (a2 - a3) * xs[1] * xs[2]), std::abs(d[1] + gamma * (a1 + a3) * xs[2] * xs[0]),
            std::abs(d[2] - gamma * (a1 + a2) * xs[0] * xs[1])};
  }

  /// Common value of |dPhi/ds|^2 and |dPhi/dt|^2:
  /// alpha_3 - u + (alpha_2 - alpha_3)(alpha_1 + alpha_3) v, with 2 and 3
  /// exchanged when swapped. The sign of u follows from |w_3|^2 = alpha_3 - u.
  double norm_closed(double s, double u) const {
    const double a1 = alphas[0], a2 = alphas[1], a3 = alphas[2];
    if (!swapped) return a3 - u + (a2 - a3) * (a1 + a3) * v(s);
    return a2 - u + (a3 - a2) * (a1 + a2) * v(s);
  }
};

inline CrossSection cross_section(const std::array<double, 3>& alphas) {
  for (double x : alphas) detail::require(std::isfinite(x) && x > 0, "cross_section: alphas must be positive");
  const double a1 = alphas[0], a2 = alphas[1], a3 = alphas[2];
  const double res = 1.0 / a1 - 1.0 / a2 - 1.0 / a3;
  detail::require(std::abs(res) <= 1e-12 * (1.0 / a1 + 1.0 / a2 + 1.0 / a3),
                  "cross_section: alphas must satisfy 1/alpha_1 = 1/alpha_2 + 1/alpha_3");
  CrossSection cs;
  cs.alphas = alphas;
  cs.swapped = a2 > a3;
  if (!cs.swapped) {
    cs.mu = std::sqrt(a1 + a3);
    cs.nu = std::sqrt((a3 - a2) / (a1 + a3));
    cs.gamma = 1;
  } else {
    cs.mu = std::sqrt(a1 + a2);
    cs.nu = std::sqrt((a2 - a3) / (a1 + a2));
    cs.gamma = -1;
  }
  return cs;
}

struct ConformalGrid {
  CrossSection section;
  double A = 0;
  std::vector<double> s, t;
  std::vector<double> u;                 // u(t)
  std::vector<std::array<cplx, 3>> w;    // w(t)
  // row-major over (s_i, t_k): index i * t.size() + k
  std::vector<std::array<cplx, 3>> phi, dphi_ds, dphi_dt;

  std::size_t index(std::size_t i, std::size_t k) const { return i * t.size() + k; }
};

/// Phi(s, t) = (x_1(s) w_1(t), x_2(s) w_2(t), x_3(s) w_3(t)) on a grid, with
/// w from the m = 3, a = 1 system started on u = 0.
inline ConformalGrid conformal_map(const std::array<double, 3>& alphas, double A, const std::vector<double>& s_grid,
                                   const std::vector<double>& t_grid, unsigned jobs = 1) {
  ConformalGrid g;
  g.section = cross_section(alphas);
  g.A = A;
  g.s = s_grid;
  g.t = t_grid;
  CentredParams p{3, 1, {alphas[0], alphas[1], alphas[2]}, A, 0.0};
  detail::require(A > 0 && A <= p.A_max() * (1 + 1e-12), "conformal_map: need 0 < A <= (alpha_1 alpha_2 alpha_3)^{1/2}");
  p.A = std::min(A, p.A_max());
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    detail::require(t_grid[k] > t_grid[k - 1], "conformal_map: t grid must be increasing");
  detail::require(!t_grid.empty() && t_grid[0] >= 0, "conformal_map: t grid must start at t >= 0");
  const CVec w0 = centred_start(p);
  OdeOptions opt;
  opt.rtol = 1e-13;
  opt.atol = 1e-14;
  const WRun run = integrate_w(w0, 1, t_grid, opt);
  if (run.stats.escaped || run.samples.size() != t_grid.size())
    throw numerical_failure("conformal_map: w-integration escaped");
  for (const auto& smp : run.samples) {
    g.w.push_back({smp.w[0], smp.w[1], smp.w[2]});
    g.u.push_back(std::norm(smp.w[0]) - alphas[0]);
  }
  const std::size_t ns = s_grid.size(), nt = t_grid.size();
  g.phi.resize(ns * nt);
  g.dphi_ds.resize(ns * nt);
  g.dphi_dt.resize(ns * nt);
  parallel_for(ns, jobs, [&](std::size_t i) {
    const auto x = g.section.x(s_grid[i]);
    const auto dx = g.section.dx(s_grid[i]);
    for (std::size_t k = 0; k < nt; ++k) {
      const auto& w = g.w[k];
      const auto dw = rhs_w3(w);
      const std::size_t id = g.index(i, k);
      for (int j = 0; j < 3; ++j) {
        g.phi[id][j] = x[j] * w[j];
        g.dphi_ds[id][j] = dx[j] * w[j];
        g.dphi_dt[id][j] = x[j] * dw[j];
      }
    }
  });
  return g;
}

struct ConformalityReport {
  double max_sphere_residual = 0;     // ||Phi| - 1|
  double max_orthogonality = 0;       // |g(dPhi/ds, dPhi/dt)|
  double max_norm_difference = 0;     // ||dPhi/ds|^2 - |dPhi/dt|^2|
  double max_closed_norm_residual = 0;  // vs the closed expression in u, v
  double max_plus_u_residual = 0;       // diagnostic: same expression with +u in place of -u
};

inline double real_inner(const std::array<cplx, 3>& a, const std::array<cplx, 3>& b) {
  double s = 0;
  for (int j = 0; j < 3; ++j) s += (std::conj(a[j]) * b[j]).real();
  return s;
}

inline ConformalityReport conformality_report(const ConformalGrid& g) {
  ConformalityReport r;
  for (std::size_t i = 0; i < g.s.size(); ++i)
    for (std::size_t k = 0; k < g.t.size(); ++k) {
      const std::size_t id = g.index(i, k);
      const auto& P = g.phi[id];
      const auto& Ds = g.dphi_ds[id];
      const auto& Dt = g.dphi_dt[id];
      r.max_sphere_residual = std::max(r.max_sphere_residual, std::abs(std::sqrt(real_inner(P, P)) - 1.0));
      r.max_orthogonality = std::max(r.max_orthogonality, std::abs(real_inner(Ds, Dt)));
      const double ns = real_inner(Ds, Ds), nt = real_inner(Dt, Dt);
      r.max_norm_difference = std::max(r.max_norm_difference, std::abs(ns - nt));
      const double closed = g.section.norm_closed(g.s[i], g.u[k]);
      r.max_closed_norm_residual =
          std::max({r.max_closed_norm_residual, std::abs(ns - closed), std::abs(nt - closed)});
      const double plus_u = closed + 2 * g.u[k];
      r.max_plus_u_residual = std::max({r.max_plus_u_residual, std::abs(ns - plus_u), std::abs(nt - plus_u)});
    }
  return r;
}

/// Same report, with derivatives replaced by central differences of step h.
inline ConformalityReport conformality_report_fd(const std::array<double, 3>& alphas, double A,
                                                 const std::vector<double>& s_grid, const std::vector<double>& t_grid,
                                                 double h = 1e-5) {
  ConformalityReport r;
  for (double t0 : t_grid) {
    const double tb = std::max(t0 - h, 0.0), tf = tb + 2 * h, tm = tb + h;
    const ConformalGrid g = conformal_map(alphas, A, s_grid, {tb, tm, tf});
    for (std::size_t i = 0; i < s_grid.size(); ++i) {
      const ConformalGrid gs = conformal_map(alphas, A, {s_grid[i] - h, s_grid[i] + h}, {tm});
      std::array<cplx, 3> Ds, Dt;
      for (int j = 0; j < 3; ++j) {
        Ds[j] = (gs.phi[gs.index(1, 0)][j] - gs.phi[gs.index(0, 0)][j]) / (2 * h);
        Dt[j] = (g.phi[g.index(i, 2)][j] - g.phi[g.index(i, 0)][j]) / (2 * h);
      }
      const auto& P = g.phi[g.index(i, 1)];
      r.max_sphere_residual = std::max(r.max_sphere_residual, std::abs(std::sqrt(real_inner(P, P)) - 1.0));
      r.max_orthogonality = std::max(r.max_orthogonality, std::abs(real_inner(Ds, Dt)));
      const double ns = real_inner(Ds, Ds), nt = real_inner(Dt, Dt);
      r.max_norm_difference = std::max(r.max_norm_difference, std::abs(ns - nt));
      const double closed = g.section.norm_closed(s_grid[i], g.u[1]);
      r.max_closed_norm_residual =
          std::max({r.max_closed_norm_residual, std::abs(ns - closed), std::abs(nt - closed)});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Explicit m = 3 paraboloid solutions.

enum class Affine3Variant { a2, a1 };

inline const char* to_string(Affine3Variant v) { return v == Affine3Variant::a2 ? "a2" : "a1"; }

/// The explicit curve (w_1, w_2, beta) and its derivative.
struct Affine3Curve {
  Affine3Variant variant;
  cplx C, D, E;

  std::array<cplx, 2> w(double t) const {
    if (variant == Affine3Variant::a2) {
      const double ep = std::exp(t), em = std::exp(-t);
      return {C * ep + D * em, std::conj(C) * ep - std::conj(D) * em};
    }
    const cplx ep = std::polar(1.0, t), em = std::polar(1.0, -t);
    const cplx I(0, 1);
    return {C * ep + D * em, I * std::conj(D) * ep - I * std::conj(C) * em};
  }

  std::array<cplx, 2> dw(double t) const {
    if (variant == Affine3Variant::a2) {
      const double ep = std::exp(t), em = std::exp(-t);
      return {C * ep - D * em, std::conj(C) * ep + std::conj(D) * em};
    }
    const cplx ep = std::polar(1.0, t), em = std::polar(1.0, -t);
    const cplx I(0, 1);
    return {I * C * ep - I * D * em, -std::conj(D) * ep - std::conj(C) * em};
  }

  cplx beta(double t) const {
    const cplx I(0, 1);
    if (variant == Affine3Variant::a2)
      return 0.5 * std::norm(C) * std::exp(2 * t) + 0.5 * std::norm(D) * std::exp(-2 * t) +
             2.0 * I * (C * std::conj(D)).imag() * t + E;
    return 0.5 * C * std::conj(D) * std::polar(1.0, 2 * t) + 0.5 * std::conj(C) * D * std::polar(1.0, -2 * t) +
           I * (std::norm(C) - std::norm(D)) * t + E;
  }

  cplx dbeta(double t) const {
    const cplx I(0, 1);
    if (variant == Affine3Variant::a2)
      return std::norm(C) * std::exp(2 * t) - std::norm(D) * std::exp(-2 * t) + 2.0 * I * (C * std::conj(D)).imag();
    return I * C * std::conj(D) * std::polar(1.0, 2 * t) - I * std::conj(C) * D * std::polar(1.0, -2 * t) +
           I * (std::norm(C) - std::norm(D));
  }

  /// |dw/dt - rhs| + |dbeta/dt - conj(w1 w2)| at t.
  double ode_residual(double t) const {
    const auto W = w(t), dW = dw(t);
    const double sg = variant == Affine3Variant::a2 ? 1.0 : -1.0;
    return std::abs(dW[0] - std::conj(W[1])) + std::abs(dW[1] - sg * std::conj(W[0])) +
           std::abs(dbeta(t) - std::conj(W[0] * W[1]));
  }

  /// x_3 eliminated through the paraboloid.
  double x3(double x1, double x2) const {
    return variant == Affine3Variant::a2 ? -0.5 * (x1 * x1 + x2 * x2) : 0.5 * (x2 * x2 - x1 * x1);
  }

  CVec point(double x1, double x2, double t) const {
    const auto W = w(t);
    CVec z(3);
    z << W[0] * x1, W[1] * x2, x3(x1, x2) + beta(t);
    return z;
  }

  /// Analytic tangent frame (d/dx1, d/dx2, d/dt).
  std::vector<CVec> tangents(double x1, double x2, double t) const {
    const auto W = w(t), dW = dw(t);
    const double d2 = variant == Affine3Variant::a2 ? -x2 : x2;
    CVec e1(3), e2(3), et(3);
    e1 << W[0], 0.0, -x1;
    e2 << 0.0, W[1], d2;
    et << dW[0] * x1, dW[1] * x2, dbeta(t);
    return {e1, e2, et};
  }

  /// Conserved A of the reduced (m-1)-letter system: Im(w1 w2).
  double A() const { return (w(0)[0] * w(0)[1]).imag(); }
};

/// Build the explicit curve; E defaults so that beta(0) = beta0.
inline Affine3Curve affine3_closed(Affine3Variant variant, cplx C, cplx D, cplx beta0 = 0.0) {
  detail::require(std::abs(C) > 0 || std::abs(D) > 0, "affine3_closed: (C, D) must not both vanish");
  Affine3Curve c{variant, C, D, 0.0};
  if (variant == Affine3Variant::a2) c.E = beta0 - 0.5 * std::norm(C) - 0.5 * std::norm(D);
  else c.E = beta0 - (std::conj(C) * D).real();
  return c;
}

/// Curve through given initial data w(0).
inline Affine3Curve affine3_from_initial(Affine3Variant variant, cplx w1, cplx w2, cplx beta0 = 0.0) {
  const cplx I(0, 1);
  if (variant == Affine3Variant::a2)
    return affine3_closed(variant, 0.5 * (w1 + std::conj(w2)), 0.5 * (w1 - std::conj(w2)), beta0);
  return affine3_closed(variant, 0.5 * (w1 - I * std::conj(w2)), 0.5 * (w1 + I * std::conj(w2)), beta0);
}

}  // namespace slevolve
