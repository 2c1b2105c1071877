#pragma once

// General evolution engine: d/dt phi_t(x) is the raised covector
// Re Omega(., (phi_t)_* chi(x)), for linear or affine phi_t : R^n -> C^m.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "slevolve/error.hpp"
#include "slevolve/evodata.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/ode.hpp"

namespace slevolve {

/// phi(x) = A x + t0 with A complex m x n.
struct EvolMap {
  CMat A;
  CVec t0;

  int m() const { return static_cast<int>(A.rows()); }
  int n() const { return static_cast<int>(A.cols()); }

  static EvolMap linear(const CMat& A) { return {A, CVec::Zero(A.rows())}; }

  CVec operator()(const Vec& x) const { return A * x.cast<cplx>() + t0; }
};

struct EvolMapDerivative {
  CMat dA;
  CVec dt0;
};

namespace detail {

inline void check_map(const EvolMap& phi, const EvolutionData& d) {
  require(phi.A.rows() == d.m && phi.A.cols() == d.n, "evolver: map must be m x n for the given data");
  require(phi.t0.size() == d.m, "evolver: translation must have length m");
}

// Velocity in C^m produced by an (m-1)-vector chi at a point, given the real form G of A.
inline CVec velocity(const Mat& G, const Multivector& chi) {
  const Multivector V = push_forward(G, chi);
  // Raising dz_j to d/dz-bar_j carries a factor 1/2 relative to the
  // Euclidean dual on R^{2m}.
  return 0.5 * complexify(re_omega_first_slot(V));
}

}  // namespace detail

/// Right-hand side of the evolution equation.
inline EvolMapDerivative rhs_general(const EvolMap& phi, const EvolutionData& d) {
  detail::check_map(phi, d);
  const Mat G = realify(phi.A);
  EvolMapDerivative out;
  out.dA = CMat::Zero(d.m, d.n);
  for (int k = 0; k < d.n; ++k) {
    const Multivector& ck = d.chi_linear[static_cast<std::size_t>(k)];
    if (ck.norm() == 0.0) continue;
    out.dA.col(k) = detail::velocity(G, ck);
  }
  out.dt0 = (d.chi_const.norm() == 0.0) ? CVec::Zero(d.m) : detail::velocity(G, d.chi_const);
  return out;
}

// ---------------------------------------------------------------------------

struct MembershipReport {
  double max_omega_residual = 0;     // max |omega(phi u, phi v)| / (|phi u| |phi v|) over tangent pairs
  double min_singular_ratio = std::numeric_limits<double>::infinity();  // sigma_min / sigma_max of phi|T_pP
  bool injective = true;
  int samples = 0;
};

/// Diagnostics for the two conditions defining C_P.
inline MembershipReport membership_cp(const EvolMap& phi, const EvolutionData& d, int count = 50,
                                      std::uint64_t seed = 7) {
  detail::check_map(phi, d);
  const Mat G = realify(phi.A);
  MembershipReport r;
  for (const PSample& s : d.samples(count, seed)) {
    if (s.singular) continue;
    ++r.samples;
    const Mat U = G * s.tangent;
    for (Eigen::Index i = 0; i < U.cols(); ++i)
      for (Eigen::Index j = i + 1; j < U.cols(); ++j) {
        const double den = std::max(U.col(i).norm() * U.col(j).norm(), 1e-300);
        r.max_omega_residual = std::max(r.max_omega_residual, std::abs(eval_omega(U.col(i), U.col(j), d.m)) / den);
      }
    Eigen::JacobiSVD<Mat> svd(U);
    const Vec sv = svd.singularValues();
    const double ratio = sv[0] > 0 ? sv[sv.size() - 1] / sv[0] : 0.0;
    r.min_singular_ratio = std::min(r.min_singular_ratio, ratio);
  }
  r.injective = r.min_singular_ratio >= 1e-8;
  return r;
}

// ---------------------------------------------------------------------------

struct Trajectory {
  std::vector<double> times;
  std::vector<EvolMap> maps;
  std::vector<double> omega_residuals;  // membership checkpoint residuals
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool escaped = false;
  double escape_time = std::numeric_limits<double>::quiet_NaN();
  bool membership_flag = false;  // some checkpoint exceeded 10x initial + 1e-8
};

namespace detail {

inline State pack(const EvolMap& phi) {
  State x;
  x.reserve(static_cast<std::size_t>(2 * phi.A.size() + 2 * phi.t0.size()));
  for (Eigen::Index k = 0; k < phi.A.cols(); ++k)
    for (Eigen::Index j = 0; j < phi.A.rows(); ++j) {
      x.push_back(phi.A(j, k).real());
      x.push_back(phi.A(j, k).imag());
    }
  for (Eigen::Index j = 0; j < phi.t0.size(); ++j) {
    x.push_back(phi.t0[j].real());
    x.push_back(phi.t0[j].imag());
  }
  return x;
}

inline EvolMap unpack(const State& x, int m, int n) {
  EvolMap phi{CMat(m, n), CVec(m)};
  std::size_t p = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < m; ++j, p += 2) phi.A(j, k) = cplx(x[p], x[p + 1]);
  for (int j = 0; j < m; ++j, p += 2) phi.t0[j] = cplx(x[p], x[p + 1]);
  return phi;
}

}  // namespace detail

struct IntegrateOptions {
  OdeOptions ode{};
  int checkpoints = 20;
  int membership_samples = 20;
};

/// Integrate phi from t = 0 to t_end (either sign); output at evenly spaced checkpoints.
inline Trajectory integrate(const EvolMap& phi0, const EvolutionData& d, double t_end, double tol,
                            IntegrateOptions opt = {}) {
  detail::check_map(phi0, d);
  detail::require(std::isfinite(t_end), "integrate: t_end must be finite");
  detail::require(tol > 0, "integrate: tolerance must be positive");
  detail::require(opt.checkpoints >= 1, "integrate: need at least one checkpoint");
  opt.ode.rtol = tol;
  opt.ode.atol = std::min(opt.ode.atol, tol);
  const int m = d.m, n = d.n;
  auto sys = [&d, m, n](const State& x, State& dx, double) {
    const EvolMap phi = detail::unpack(x, m, n);
    EvolMapDerivative der = rhs_general(phi, d);
    dx = detail::pack(EvolMap{der.dA, der.dt0});
  };
  auto driver = make_driver(sys, opt.ode);
  Trajectory tr;
  State x = detail::pack(phi0);
  double t = 0;
  const double r0 = membership_cp(phi0, d, opt.membership_samples).max_omega_residual;
  tr.times.push_back(0);
  tr.maps.push_back(phi0);
  tr.omega_residuals.push_back(r0);
  for (int c = 1; c <= opt.checkpoints; ++c) {
    const double target = t_end * c / opt.checkpoints;
    OdeStats st = driver.advance(x, t, target);
    tr.accepted += st.accepted;
    tr.rejected += st.rejected;
    const EvolMap phi = detail::unpack(x, m, n);
    const double r = membership_cp(phi, d, opt.membership_samples).max_omega_residual;
    tr.times.push_back(t);
    tr.maps.push_back(phi);
    tr.omega_residuals.push_back(r);
    if (r > 10 * r0 + 1e-8) tr.membership_flag = true;
    if (st.escaped) {
      tr.escaped = true;
      tr.escape_time = st.escape_time;
      break;
    }
  }
  return tr;
}

}  // namespace slevolve
