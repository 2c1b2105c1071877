#pragma once

// Paraboloid family: w_1..w_{m-1} follow the centred system on m-1 letters,
// and the last coordinate is translated by beta with dbeta/dt = conj(w_1...w_{m-1}).

#include <cmath>
#include <string>
#include <vector>

#include "slevolve/centred.hpp"
#include "slevolve/error.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/ode.hpp"

namespace slevolve {

struct AffineParams {
  int m = 0;  // complex dimension; the w-system has m-1 letters
  int a = 0;
  std::vector<double> alphas;  // m-1 values
  double A = 0;
  cplx Cconst = 0.0;  // beta(0) - u(0)/2

  CentredParams letters() const { return CentredParams{m - 1, a, alphas, A, 0.0}; }
  double A_max() const { return letters().A_max(); }
};

struct AffineState {
  CVec w;
  cplx beta = 0.0;
  double t = 0;
};

struct AffineDerivative {
  CVec dw;
  cplx dbeta;
};

namespace detail {

inline void check_affine_shape(const AffineParams& p) {
  require(p.m >= 3 && p.m <= kMaxDim, "affine: m must lie in [3,16]");
  require(2 * p.a >= p.m - 1 && p.a <= p.m - 1, "affine: need (m-1)/2 <= a <= m-1");
  require(static_cast<int>(p.alphas.size()) == p.m - 1, "affine: need m-1 alphas");
  require(std::isfinite(p.A) && std::isfinite(p.Cconst.real()) && std::isfinite(p.Cconst.imag()),
          "affine: A and C must be finite");
}

}  // namespace detail

inline AffineDerivative rhs_affine(const AffineState& s, int a) {
  for (Eigen::Index j = 0; j < s.w.size(); ++j) detail::require(std::abs(s.w[j]) > 0, "rhs_affine: w_j must be nonzero");
  return {rhs_w(s.w, a), std::conj(s.w.prod())};
}

/// beta(t) = C + u(t)/2 - i A t with C = beta(0) - u(0)/2.
inline cplx beta_closed(double u, double u0, double t, double A, cplx beta0) {
  return beta0 - 0.5 * u0 + 0.5 * u - cplx(0, A * t);
}

struct AffineCaseInfo {
  char label = 'a';
  std::string note;
};

inline AffineCaseInfo classify_affine_case(const AffineParams& p) {
  detail::check_affine_shape(p);
  const double Am = p.A_max();
  if (std::abs(p.A) <= 1e-12 * std::max(1.0, Am)) return {'a', "open subset of a special Lagrangian plane"};
  if (p.a == p.m - 1) {
    if (p.m == 3) return {'b', "solutions exist on R"};
    return {'b', "solutions on a bounded interval (finite escape)"};
  }
  if (std::abs(std::abs(p.A) - Am) <= 1e-10 * std::max(1.0, Am)) return {'c', "perpendicular-symmetry solution"};
  return {'d', "never periodic"};
}

/// theta_j(u) - theta_j(u0) and t(u) - t(u0) on the letters.
inline QuadratureSolution quadrature_affine(const AffineParams& p, double u0, double u) {
  detail::check_affine_shape(p);
  return quadrature_solution(p.letters(), u0, u);
}

/// Initial state on u = 0 with beta(0) = C.
inline AffineState affine_start(const AffineParams& p) {
  detail::check_affine_shape(p);
  return {centred_start(p.letters()), p.Cconst, 0.0};
}

struct AffineSample {
  double t = 0;
  CVec w;
  cplx beta;
  std::vector<double> thetas;
};

struct AffineRun {
  std::vector<AffineSample> samples;
  OdeStats stats;
};

namespace detail {

struct AffineSystem {
  int a;
  void operator()(const State& x, State& dx, double) const {
    const std::size_t k = x.size() / 2 - 1;
    CVec w(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) w[static_cast<Eigen::Index>(j)] = cplx(x[2 * j], x[2 * j + 1]);
    const CVec dw = rhs_w(w, a);
    const cplx db = std::conj(w.prod());
    dx.resize(x.size());
    for (std::size_t j = 0; j < k; ++j) {
      dx[2 * j] = dw[static_cast<Eigen::Index>(j)].real();
      dx[2 * j + 1] = dw[static_cast<Eigen::Index>(j)].imag();
    }
    dx[2 * k] = db.real();
    dx[2 * k + 1] = db.imag();
  }
};

}  // namespace detail

/// Integrate (w, beta) from s0 through the given output times.
inline AffineRun integrate_affine(const AffineState& s0, int a, const std::vector<double>& times, OdeOptions opt = {}) {
  const std::size_t k = static_cast<std::size_t>(s0.w.size());
  for (std::size_t j = 0; j < k; ++j)
    detail::require(std::abs(s0.w[static_cast<Eigen::Index>(j)]) > 0, "integrate_affine: w_j must be nonzero");
  State x = detail::w_to_state(s0.w);
  x.push_back(s0.beta.real());
  x.push_back(s0.beta.imag());
  std::vector<double> lift(k);
  for (std::size_t j = 0; j < k; ++j) lift[j] = std::arg(s0.w[static_cast<Eigen::Index>(j)]);
  State prev = x;
  auto accept = [k](const State& x0, const State& x1) {
    for (std::size_t j = 0; j < k; ++j)
      if (std::abs(detail::wrap_angle(std::atan2(x1[2 * j + 1], x1[2 * j]) - std::atan2(x0[2 * j + 1], x0[2 * j]))) >
          kPi / 2)
        return false;
    return true;
  };
  auto observe = [&](double, const State& y) {
    for (std::size_t j = 0; j < k; ++j)
      lift[j] += detail::wrap_angle(std::atan2(y[2 * j + 1], y[2 * j]) - std::atan2(prev[2 * j + 1], prev[2 * j]));
    prev = y;
  };
  auto driver = make_driver(detail::AffineSystem{a}, opt);
  AffineRun run;
  double t = s0.t;
  for (double target : times) {
    OdeStats st = driver.advance(x, t, target, observe, accept);
    run.stats.accepted += st.accepted;
    run.stats.rejected += st.rejected;
    if (st.escaped) {
      run.stats.escaped = true;
      run.stats.escape_time = st.escape_time;
      break;
    }
    AffineSample smp;
    smp.t = t;
    smp.w.resize(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j) smp.w[static_cast<Eigen::Index>(j)] = cplx(x[2 * j], x[2 * j + 1]);
    smp.beta = cplx(x[2 * k], x[2 * k + 1]);
    smp.thetas = lift;
    run.samples.push_back(std::move(smp));
  }
  return run;
}

}  // namespace slevolve
