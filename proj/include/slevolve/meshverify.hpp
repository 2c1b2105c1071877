#pragma once

// Sampled special Lagrangian m-folds: quadric charts, mesh builders for the
// centred and paraboloid families and for cone links, residuals of omega and
// Im Omega on tangent frames, and mesh import/export.

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slevolve/affine.hpp"
#include "slevolve/centred.hpp"
#include "slevolve/error.hpp"
#include "slevolve/evodata.hpp"
#include "slevolve/multilinear.hpp"
#include "slevolve/parallel.hpp"
#include "slevolve/threefold.hpp"

namespace slevolve {

// ---------------------------------------------------------------------------
// Residuals.

struct SLSample {
  double omega = 0;    // max_{i<j} |omega(E_i, E_j)| on an orthonormalized frame
  double imomega = 0;  // |Im Omega(E)|
  bool ok = false;     // false when the frame is degenerate
};

struct SLReport {
  double max_omega_residual = 0, mean_omega_residual = 0;
  double max_imomega_residual = 0, mean_imomega_residual = 0;
  std::string normalization = "Gram-Schmidt orthonormal frame (residuals per unit volume)";
  int sample_count = 0;
  int skipped = 0;

  double max_residual() const { return std::max(max_omega_residual, max_imomega_residual); }
};

/// Residuals for one tangent m-frame in C^m. The frame is orthonormalized in
/// R^{2m}, so |omega| and |Im Omega| are per unit area / volume. The sign of
/// Im Omega is irrelevant: the orientation with Re Omega >= 0 only flips it.
inline SLSample sl_residual_frame(const std::vector<CVec>& tangents) {
  const int m = static_cast<int>(tangents.size());
  detail::require(m >= 1, "sl_residual_frame: empty frame");
  Frame E;
  double gram = 1;
  for (const CVec& z : tangents) {
    detail::require(z.size() == m, "sl_residual_frame: need m vectors in C^m");
    Vec v = decomplexify(z);
    const double n0 = v.norm();
    if (!(n0 > 0) || !std::isfinite(n0)) return {};
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& e : E) v -= e.dot(v) * e;
    const double n1 = v.norm();
    gram *= (n1 / n0) * (n1 / n0);
    if (!(n1 > 0)) return {};
    E.push_back(v / n1);
  }
  SLSample s;
  if (gram < 1e-14) return s;
  s.ok = true;
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) s.omega = std::max(s.omega, std::abs(eval_omega(E[i], E[j], m)));
  s.imomega = std::abs(eval_omega_complex(E).imag());
  return s;
}

inline SLReport sl_report(const std::vector<SLSample>& samples) {
  SLReport r;
  for (const SLSample& s : samples) {
    if (!s.ok) {
      ++r.skipped;
      continue;
    }
    ++r.sample_count;
    r.max_omega_residual = std::max(r.max_omega_residual, s.omega);
    r.max_imomega_residual = std::max(r.max_imomega_residual, s.imomega);
    r.mean_omega_residual += s.omega;
    r.mean_imomega_residual += s.imomega;
  }
  if (r.sample_count > 0) {
    r.mean_omega_residual /= r.sample_count;
    r.mean_imomega_residual /= r.sample_count;
  }
  return r;
}

inline SLReport sl_residuals(const std::vector<std::vector<CVec>>& frames, unsigned jobs = 1) {
  std::vector<SLSample> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) { out[i] = sl_residual_frame(frames[i]); });
  return sl_report(out);
}

/// Residuals with tangents from central differences of a parametrization F : R^m -> C^m.
inline SLReport sl_residuals_fd(const std::function<CVec(const Vec&)>& F, const std::vector<Vec>& params, double h,
                                unsigned jobs = 1) {
  detail::require(h > 0, "sl_residuals_fd: step must be positive");
  std::vector<SLSample> out(params.size());
  parallel_for(params.size(), jobs, [&](std::size_t i) {
    const Vec& q = params[i];
    std::vector<CVec> T;
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      Vec qp = q, qm = q;
      qp[k] += h;
      qm[k] -= h;
      T.push_back((F(qp) - F(qm)) / (2 * h));
    }
    out[i] = sl_residual_frame(T);
  });
  return sl_report(out);
}

// ---------------------------------------------------------------------------
// Mesh.

struct Mesh {
  int m = 0;
  std::string label;
  std::vector<std::string> param_names;  // first entry is "t"
  std::vector<CVec> vertices;
  std::vector<Vec> params;
  std::vector<std::array<std::size_t, 4>> faces;
  std::vector<double> res_omega, res_imomega;  // per vertex; NaN when not evaluated

  std::size_t size() const { return vertices.size(); }

  void validate() const {
    detail::require(m >= 1, "mesh: m must be positive");
    detail::require(params.size() == vertices.size(), "mesh: params and vertices differ in length");
    detail::require(res_omega.size() == vertices.size() && res_imomega.size() == vertices.size(),
                    "mesh: residual arrays must match the vertex count");
    for (const CVec& z : vertices) {
      detail::require(z.size() == m, "mesh: vertex has wrong dimension");
      for (Eigen::Index j = 0; j < z.size(); ++j)
        detail::require(std::isfinite(z[j].real()) && std::isfinite(z[j].imag()), "mesh: non-finite vertex");
    }
    for (const auto& f : faces)
      for (std::size_t i : f) detail::require(i < vertices.size(), "mesh: face index out of range");
  }

  SLReport report() const {
    std::vector<SLSample> s(vertices.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i].ok = std::isfinite(res_omega[i]) && std::isfinite(res_imomega[i]);
      s[i].omega = res_omega[i];
      s[i].imomega = res_imomega[i];
    }
    return sl_report(s);
  }
};

struct MeshResolution {
  int nt = 16;              // samples along t
  int nq = 8;               // samples per chart parameter
  double radius = 1.5;      // truncation of non-compact chart directions
  int sheet = 1;            // sign choice for S^0 factors
  unsigned jobs = 1;
};

// ---------------------------------------------------------------------------
// Quadric charts.

/// Chart of {sum_{j<=a} x_j^2 - sum_{j>a} x_j^2 = c} in R^m by m-1 parameters:
/// S^{a-1} x R^{m-a} (c > 0), R^a x S^{m-a-1} (c < 0), cone on S^{a-1} x S^{m-a-1} (c = 0).
struct QuadricChart {
  int m = 0, a = 0;
  double c = 0;
  double radius = 1.5;
  int sheet = 1;

  int dims() const { return m - 1; }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    for (int i = 1; i <= dims(); ++i) n.push_back("param" + std::to_string(i));
    return n;
  }

  /// Parameter ranges; periodic ranges end one step short when meshed.
  std::vector<std::pair<double, double>> ranges() const {
    std::vector<std::pair<double, double>> r;
    auto sphere = [&](int k) {
      for (int i = 0; i + 1 < k; ++i) r.push_back(i + 2 < k ? std::make_pair(0.0, kPi) : std::make_pair(0.0, 2 * kPi));
    };
    auto flat = [&](int k) {
      for (int i = 0; i < k; ++i) r.push_back({-radius, radius});
    };
    if (c > 0) {
      sphere(a);
      flat(m - a);
    } else if (c < 0) {
      flat(a);
      sphere(m - a);
    } else {
      r.push_back({radius / 8, radius});
      sphere(a);
      sphere(m - a);
    }
    return r;
  }

  std::vector<bool> periodic() const {
    std::vector<bool> p;
    auto sphere = [&](int k) {
      for (int i = 0; i + 1 < k; ++i) p.push_back(i + 2 >= k);
    };
    auto flat = [&](int k) {
      for (int i = 0; i < k; ++i) p.push_back(false);
    };
    if (c > 0) {
      sphere(a);
      flat(m - a);
    } else if (c < 0) {
      flat(a);
      sphere(m - a);
    } else {
      p.push_back(false);
      sphere(a);
      sphere(m - a);
    }
    return p;
  }

  Vec point(const Vec& q) const {
    detail::require(q.size() == dims(), "quadric chart: wrong parameter count");
    Vec x(m);
    Eigen::Index pos = 0;
    auto sphere = [&](int k) {
      Vec s(k);
      if (k == 1) {
        s[0] = sheet >= 0 ? 1.0 : -1.0;
        return s;
      }
      double prod = 1;
      for (int i = 0; i + 1 < k; ++i) {
        const double ang = q[pos++];
        s[i] = prod * std::cos(ang);
        prod *= std::sin(ang);
      }
      s[k - 1] = prod;
      return s;
    };
    auto flat = [&](int k) {
      Vec y(k);
      for (int i = 0; i < k; ++i) y[i] = q[pos++];
      return y;
    };
    if (c > 0) {
      const Vec sig = sphere(a);
      const Vec y = flat(m - a);
      x.head(a) = std::sqrt(c + y.squaredNorm()) * sig;
      x.tail(m - a) = y;
    } else if (c < 0) {
      const Vec y = flat(a);
      const Vec tau = sphere(m - a);
      x.head(a) = y;
      x.tail(m - a) = std::sqrt(-c + y.squaredNorm()) * tau;
    } else {
      const double rho = q[pos++];
      const Vec sig = sphere(a);
      const Vec tau = sphere(m - a);
      x.head(a) = rho * sig;
      x.tail(m - a) = rho * tau;
    }
    return x;
  }
};

inline QuadricChart quadric_chart(int m, int a, double c, double radius = 1.5, int sheet = 1) {
  detail::require(m >= 2 && m <= kMaxDim, "quadric_chart: m must lie in [2,16]");
  detail::require(a >= 1 && a <= m, "quadric_chart: need 1 <= a <= m");
  detail::require(std::isfinite(c) && radius > 0, "quadric_chart: need finite c and positive radius");
  detail::require(!(a == m && c <= 0), "quadric_chart: for a = m the level c must be positive");
  return {m, a, c, radius, sheet};
}

namespace detail {

// Grid of chart parameters, lexicographic with the first parameter fastest.
inline std::vector<Vec> chart_grid(const std::vector<std::pair<double, double>>& ranges,
                                   const std::vector<bool>& periodic, int nq, std::vector<int>& counts) {
  const std::size_t d = ranges.size();
  counts.assign(d, nq);
  std::vector<Vec> out;
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) total *= static_cast<std::size_t>(counts[i]);
  for (std::size_t id = 0; id < total; ++id) {
    Vec q(static_cast<Eigen::Index>(d));
    std::size_t r = id;
    for (std::size_t i = 0; i < d; ++i) {
      const int k = static_cast<int>(r % static_cast<std::size_t>(counts[i]));
      r /= static_cast<std::size_t>(counts[i]);
      const double lo = ranges[i].first, hi = ranges[i].second;
      const double step = periodic[i] ? (hi - lo) / nq : (hi - lo) / std::max(1, nq - 1);
      q[static_cast<Eigen::Index>(i)] = lo + step * k;
    }
    out.push_back(std::move(q));
  }
  return out;
}

// Quad faces in the (t, first chart parameter) planes.
inline void grid_faces(Mesh& mesh, std::size_t nt, std::size_t nchart, std::size_t n1, bool wrap1, bool wrap_t) {
  auto vid = [nchart](std::size_t it, std::size_t ic) { return it * nchart + ic; };
  const std::size_t t_cells = wrap_t ? nt : nt - 1;
  for (std::size_t it = 0; it < t_cells; ++it) {
    const std::size_t it2 = (it + 1) % nt;
    for (std::size_t ic = 0; ic < nchart; ++ic) {
      const std::size_t k1 = ic % n1;
      if (!wrap1 && k1 + 1 >= n1) continue;
      const std::size_t ic2 = ic - k1 + (k1 + 1) % n1;
      mesh.faces.push_back({vid(it, ic), vid(it, ic2), vid(it2, ic2), vid(it2, ic)});
    }
  }
}

}  // namespace detail

/// One sample of a trajectory: w, dw/dt and (for the paraboloid family) beta.
struct CurvePoint {
  double t = 0;
  CVec w, dw;
  cplx beta = 0.0, dbeta = 0.0;
};

/// Trajectory of the centred system sampled at the given times.
inline std::vector<CurvePoint> centred_curve(const CVec& w0, int a, const std::vector<double>& times, OdeOptions opt = {}) {
  opt.rtol = std::min(opt.rtol, 1e-12);
  opt.atol = std::min(opt.atol, 1e-13);
  const WRun run = integrate_w(w0, a, times, opt);
  if (run.stats.escaped || run.samples.size() != times.size())
    throw numerical_failure("centred_curve: integration escaped at t = " + std::to_string(run.stats.escape_time));
  std::vector<CurvePoint> out;
  for (const WSample& s : run.samples) out.push_back({s.t, s.w, rhs_w(s.w, a), 0.0, 0.0});
  return out;
}

/// Case (c) closed form: u = 0, theta_j(t) = theta_j(0) -+ A t / alpha_j.
inline std::vector<CurvePoint> centred_curve_case_c(const CentredParams& p, const std::vector<double>& theta0,
                                                    const std::vector<double>& times) {
  detail::require(static_cast<int>(theta0.size()) == p.m, "centred_curve_case_c: need m initial angles");
  std::vector<CurvePoint> out;
  for (double t : times) {
    ReducedState st;
    st.u = 0;
    st.thetas = case_c_thetas(p, theta0, t);
    const CVec w = expand(st, p);
    out.push_back({t, w, rhs_w(w, p.a), 0.0, 0.0});
  }
  return out;
}

inline std::vector<CurvePoint> affine_curve(const AffineState& s0, int a, const std::vector<double>& times,
                                            OdeOptions opt = {}) {
  opt.rtol = std::min(opt.rtol, 1e-12);
  opt.atol = std::min(opt.atol, 1e-13);
  const AffineRun run = integrate_affine(s0, a, times, opt);
  if (run.stats.escaped || run.samples.size() != times.size())
    throw numerical_failure("affine_curve: integration escaped at t = " + std::to_string(run.stats.escape_time));
  std::vector<CurvePoint> out;
  for (const AffineSample& s : run.samples) out.push_back({s.t, s.w, rhs_w(s.w, a), s.beta, std::conj(s.w.prod())});
  return out;
}

inline std::vector<CurvePoint> affine3_curve(const Affine3Curve& c, const std::vector<double>& times) {
  std::vector<CurvePoint> out;
  for (double t : times) {
    const auto W = c.w(t), D = c.dw(t);
    CVec w(2), dw(2);
    w << W[0], W[1];
    dw << D[0], D[1];
    out.push_back({t, w, dw, c.beta(t), c.dbeta(t)});
  }
  return out;
}

inline std::vector<double> linspace(double a, double b, int n) {
  detail::require(n >= 1, "linspace: need at least one point");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

/// Mesh of N = {(x_1 w_1(t), ..., x_m w_m(t))} over a quadric chart. Tangent
/// frames are analytic: x moves in the orthogonal complement of the quadric's
/// gradient and t moves along dw/dt.
inline Mesh mesh_centred_curve(const std::vector<CurvePoint>& curve, int a, const QuadricChart& chart, int nq,
                               unsigned jobs = 1, bool wrap_t = false) {
  detail::require(!curve.empty(), "mesh_centred: empty trajectory");
  const int m = static_cast<int>(curve[0].w.size());
  detail::require(chart.m == m && chart.a == a, "mesh_centred: chart does not match the trajectory");
  detail::require(nq >= 2, "mesh_centred: need nq >= 2");
  Mesh mesh;
  mesh.m = m;
  mesh.param_names = {"t"};
  for (const auto& n : chart.names()) mesh.param_names.push_back(n);
  std::vector<int> counts;
  const auto per = chart.periodic();
  const std::vector<Vec> qs = detail::chart_grid(chart.ranges(), per, nq, counts);
  const std::size_t nc = qs.size(), nt = curve.size();
  mesh.vertices.resize(nt * nc);
  mesh.params.resize(nt * nc);
  mesh.res_omega.assign(nt * nc, std::numeric_limits<double>::quiet_NaN());
  mesh.res_imomega = mesh.res_omega;
  Vec sig(m);
  for (int j = 0; j < m; ++j) sig[j] = j < a ? 1.0 : -1.0;
  parallel_for(nt, jobs, [&](std::size_t it) {
    const CurvePoint& cp = curve[it];
    for (std::size_t ic = 0; ic < nc; ++ic) {
      const Vec x = chart.point(qs[ic]);
      const std::size_t id = it * nc + ic;
      CVec z(m), zt(m);
      for (int j = 0; j < m; ++j) {
        z[j] = x[j] * cp.w[j];
        zt[j] = x[j] * cp.dw[j];
      }
      mesh.vertices[id] = z;
      Vec prm(static_cast<Eigen::Index>(1 + qs[ic].size()));
      prm[0] = cp.t;
      prm.tail(qs[ic].size()) = qs[ic];
      mesh.params[id] = prm;
      const Vec g = sig.cwiseProduct(x);
      if (g.norm() == 0) continue;
      const Mat B = detail::complement_basis(g);
      std::vector<CVec> frame{zt};
      for (Eigen::Index k = 0; k < B.cols(); ++k) {
        CVec e(m);
        for (int j = 0; j < m; ++j) e[j] = B(j, k) * cp.w[j];
        frame.push_back(e);
      }
      const SLSample s = sl_residual_frame(frame);
      if (s.ok) {
        mesh.res_omega[id] = s.omega;
        mesh.res_imomega[id] = s.imomega;
      }
    }
  });
  if (chart.dims() >= 1) {
    const bool wrap1 = per.empty() ? false : per[0];
    detail::grid_faces(mesh, nt, nc, static_cast<std::size_t>(counts[0]), wrap1, wrap_t);
  }
  return mesh;
}

/// Centred mesh from parameters: trajectory from u = 0 on [t0, t1] (t0 >= 0).
inline Mesh mesh_centred(const CentredParams& p, double c, double t0, double t1, const MeshResolution& res) {
  detail::check_params_shape(p);
  detail::require(t1 > t0 && t0 >= 0, "mesh_centred: need 0 <= t0 < t1");
  detail::require(std::abs(p.A) <= p.A_max() * (1 + 1e-12), "mesh_centred: |A| exceeds (alpha_1...alpha_m)^{1/2}");
  CentredParams q = p;
  q.A = std::clamp(p.A, -p.A_max(), p.A_max());
  const CentredCase k = classify_case(q);
  const auto times = linspace(t0, t1, res.nt);
  const QuadricChart chart = quadric_chart(p.m, p.a, c, res.radius, res.sheet);
  std::vector<CurvePoint> curve;
  if (k == CentredCase::c) {
    std::vector<double> th0(static_cast<std::size_t>(p.m), 0.0);
    th0[0] = kPi / 2 * (q.A >= 0 ? 1 : -1);
    curve = centred_curve_case_c(q, th0, times);
  } else {
    curve = centred_curve(centred_start(q), p.a, times);
  }
  Mesh mesh = mesh_centred_curve(curve, p.a, chart, res.nq, res.jobs);
  mesh.label = std::string("centred case (") + to_string(k) + ")";
  return mesh;
}

/// Mesh of N = {(x_1 w_1, ..., x_{m-1} w_{m-1}, x_m + beta)} over the paraboloid
/// sum_{j<=a} x_j^2 - sum_{a<j<m} x_j^2 + 2 x_m = 0, charted by x_1..x_{m-1}.
inline Mesh mesh_affine_curve(const std::vector<CurvePoint>& curve, int a, int nq, double radius, unsigned jobs = 1) {
  detail::require(!curve.empty(), "mesh_affine: empty trajectory");
  const int k = static_cast<int>(curve[0].w.size());
  const int m = k + 1;
  detail::require(nq >= 2 && radius > 0, "mesh_affine: need nq >= 2 and positive radius");
  Mesh mesh;
  mesh.m = m;
  mesh.param_names = {"t"};
  for (int i = 1; i <= k; ++i) mesh.param_names.push_back("param" + std::to_string(i));
  std::vector<int> counts;
  std::vector<std::pair<double, double>> ranges(static_cast<std::size_t>(k), {-radius, radius});
  const std::vector<Vec> qs = detail::chart_grid(ranges, std::vector<bool>(static_cast<std::size_t>(k), false), nq, counts);
  const std::size_t nc = qs.size(), nt = curve.size();
  mesh.vertices.resize(nt * nc);
  mesh.params.resize(nt * nc);
  mesh.res_omega.assign(nt * nc, std::numeric_limits<double>::quiet_NaN());
  mesh.res_imomega = mesh.res_omega;
  parallel_for(nt, jobs, [&](std::size_t it) {
    const CurvePoint& cp = curve[it];
    for (std::size_t ic = 0; ic < nc; ++ic) {
      const Vec& xp = qs[ic];
      double quad = 0;
      Vec g(m);
      for (int j = 0; j < k; ++j) {
        const double sg = j < a ? 1.0 : -1.0;
        quad += sg * xp[j] * xp[j];
        g[j] = 2 * sg * xp[j];
      }
      g[k] = 2;
      const double xm = -0.5 * quad;
      const std::size_t id = it * nc + ic;
      CVec z(m), zt(m);
      for (int j = 0; j < k; ++j) {
        z[j] = xp[j] * cp.w[j];
        zt[j] = xp[j] * cp.dw[j];
      }
      z[k] = xm + cp.beta;
      zt[k] = cp.dbeta;
      mesh.vertices[id] = z;
      Vec prm(1 + k);
      prm[0] = cp.t;
      prm.tail(k) = xp;
      mesh.params[id] = prm;
      const Mat B = detail::complement_basis(g);
      std::vector<CVec> frame{zt};
      for (Eigen::Index c = 0; c < B.cols(); ++c) {
        CVec e(m);
        for (int j = 0; j < k; ++j) e[j] = B(j, c) * cp.w[j];
        e[k] = B(k, c);
        frame.push_back(e);
      }
      const SLSample s = sl_residual_frame(frame);
      if (s.ok) {
        mesh.res_omega[id] = s.omega;
        mesh.res_imomega[id] = s.imomega;
      }
    }
  });
  detail::grid_faces(mesh, nt, nc, static_cast<std::size_t>(counts[0]), false, false);
  return mesh;
}

inline Mesh mesh_affine(const AffineParams& p, double t0, double t1, const MeshResolution& res) {
  detail::check_affine_shape(p);
  detail::require(t1 > t0 && t0 >= 0, "mesh_affine: need 0 <= t0 < t1");
  const auto times = linspace(t0, t1, res.nt);
  Mesh mesh = mesh_affine_curve(affine_curve(affine_start(p), p.a, times), p.a, res.nq, res.radius, res.jobs);
  mesh.label = std::string("paraboloid case (") + classify_affine_case(p).label + ")";
  return mesh;
}

inline Mesh mesh_affine3(const Affine3Curve& c, double t0, double t1, const MeshResolution& res) {
  detail::require(t1 > t0, "mesh_affine3: need t0 < t1");
  Mesh mesh = mesh_affine_curve(affine3_curve(c, linspace(t0, t1, res.nt)), c.variant == Affine3Variant::a2 ? 2 : 1,
                                res.nq, res.radius, res.jobs);
  mesh.label = std::string("m=3 explicit paraboloid solution ") + to_string(c.variant);
  return mesh;
}

/// Link of a T^2-cone as a surface mesh in S^5, with cone-frame residuals
/// (Phi, dPhi/ds, dPhi/dt) per vertex. The grid is wrapped in s (one full
/// period) and, if requested, in t (a closed periodic solution).
inline Mesh mesh_link(const ConformalGrid& g, bool wrap_s, bool wrap_t) {
  Mesh mesh;
  mesh.m = 3;
  mesh.label = "T2-cone link";
  mesh.param_names = {"t", "s"};
  const std::size_t ns = g.s.size(), nt = g.t.size();
  mesh.vertices.resize(ns * nt);
  mesh.params.resize(ns * nt);
  mesh.res_omega.assign(ns * nt, std::numeric_limits<double>::quiet_NaN());
  mesh.res_imomega = mesh.res_omega;
  for (std::size_t k = 0; k < nt; ++k)
    for (std::size_t i = 0; i < ns; ++i) {
      const std::size_t src = g.index(i, k), id = k * ns + i;
      CVec z(3), ds(3), dt(3);
      for (int j = 0; j < 3; ++j) {
        z[j] = g.phi[src][j];
        ds[j] = g.dphi_ds[src][j];
        dt[j] = g.dphi_dt[src][j];
      }
      mesh.vertices[id] = z;
      Vec prm(2);
      prm << g.t[k], g.s[i];
      mesh.params[id] = prm;
      const SLSample s = sl_residual_frame({z, ds, dt});
      if (s.ok) {
        mesh.res_omega[id] = s.omega;
        mesh.res_imomega[id] = s.imomega;
      }
    }
  detail::grid_faces(mesh, nt, ns, ns, wrap_s, wrap_t);
  return mesh;
}

/// Residuals from mesh-based tangents: the parameters are assumed to lie on a
/// tensor grid, and each tangent is a difference quotient along one grid
/// axis (central inside, one-sided at the boundary). When the grid has m-1
/// axes the mesh is treated as a cone link and the position vector completes
/// the frame.
inline SLReport sl_residuals_mesh(const Mesh& mesh, unsigned jobs = 1) {
  mesh.validate();
  if (mesh.vertices.empty()) return {};
  const Eigen::Index d = mesh.params[0].size();
  detail::require(d == mesh.m || d + 1 == mesh.m, "sl_residuals_mesh: need m (or m-1 for links) parameters");
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(d));
  for (const Vec& q : mesh.params) {
    detail::require(q.size() == d, "sl_residuals_mesh: inconsistent parameter count");
    for (Eigen::Index k = 0; k < d; ++k) axes[static_cast<std::size_t>(k)].push_back(q[k]);
  }
  for (auto& ax : axes) {
    std::sort(ax.begin(), ax.end());
    ax.erase(std::unique(ax.begin(), ax.end()), ax.end());
  }
  auto key_of = [&](const Vec& q) {
    std::vector<long> key(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto& ax = axes[static_cast<std::size_t>(k)];
      key[static_cast<std::size_t>(k)] = std::lower_bound(ax.begin(), ax.end(), q[k]) - ax.begin();
    }
    return key;
  };
  std::map<std::vector<long>, std::size_t> index;
  for (std::size_t i = 0; i < mesh.size(); ++i) index.emplace(key_of(mesh.params[i]), i);
  std::vector<SLSample> out(mesh.size());
  parallel_for(mesh.size(), jobs, [&](std::size_t i) {
    const auto key = key_of(mesh.params[i]);
    std::vector<CVec> frame;
    if (d + 1 == mesh.m) frame.push_back(mesh.vertices[i]);
    for (Eigen::Index k = 0; k < d; ++k) {
      auto lo = key, hi = key;
      --lo[static_cast<std::size_t>(k)];
      ++hi[static_cast<std::size_t>(k)];
      const auto a = index.find(lo), b = index.find(hi);
      const std::size_t ia = a == index.end() ? i : a->second, ib = b == index.end() ? i : b->second;
      const double dq = mesh.params[ib][k] - mesh.params[ia][k];
      if (ia == ib || dq == 0) return;
      frame.push_back((mesh.vertices[ib] - mesh.vertices[ia]) / dq);
    }
    out[i] = sl_residual_frame(frame);
  });
  return sl_report(out);
}

/// Largest distance of a vertex from the best-fitting affine real m-plane.
inline double plane_distance(const Mesh& mesh) {
  detail::require(!mesh.vertices.empty(), "plane_distance: empty mesh");
  const Eigen::Index p = 2 * mesh.m;
  Mat X(p, static_cast<Eigen::Index>(mesh.size()));
  for (std::size_t i = 0; i < mesh.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = decomplexify(mesh.vertices[i]);
  const Vec mean = X.rowwise().mean();
  X.colwise() -= mean;
  Eigen::JacobiSVD<Mat> svd(X, Eigen::ComputeThinU);
  const Mat U = svd.matrixU().leftCols(std::min<Eigen::Index>(mesh.m, svd.matrixU().cols()));
  const Mat R = X - U * (U.transpose() * X);
  return R.colwise().norm().maxCoeff();
}

// ---------------------------------------------------------------------------
// Export and import.

struct Projection {
  enum class Kind { coords, pca } kind = Kind::pca;
  std::array<int, 3> coords{0, 2, 4};  // indices into (x1, y1, x2, y2, ...)
};

inline std::vector<std::array<double, 3>> project(const Mesh& mesh, const Projection& proj) {
  const Eigen::Index p = 2 * mesh.m;
  std::vector<std::array<double, 3>> out(mesh.size());
  if (proj.kind == Projection::Kind::coords) {
    for (int c : proj.coords) detail::require(c >= 0 && c < p, "project: coordinate index out of range");
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      const Vec v = decomplexify(mesh.vertices[i]);
      out[i] = {v[proj.coords[0]], v[proj.coords[1]], v[proj.coords[2]]};
    }
    return out;
  }
  Mat X(p, static_cast<Eigen::Index>(mesh.size()));
  for (std::size_t i = 0; i < mesh.size(); ++i) X.col(static_cast<Eigen::Index>(i)) = decomplexify(mesh.vertices[i]);
  const Vec mean = X.rowwise().mean();
  Mat C = X.colwise() - mean;
  Eigen::SelfAdjointEigenSolver<Mat> es(C * C.transpose());
  Mat U = es.eigenvectors().rightCols(std::min<Eigen::Index>(3, p)).rowwise().reverse();
  // deterministic signs: largest-magnitude component positive
  for (Eigen::Index k = 0; k < U.cols(); ++k) {
    Eigen::Index idx;
    U.col(k).cwiseAbs().maxCoeff(&idx);
    if (U(idx, k) < 0) U.col(k) = -U.col(k);
  }
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    const Vec y = U.transpose() * C.col(static_cast<Eigen::Index>(i));
    out[i] = {y.size() > 0 ? y[0] : 0.0, y.size() > 1 ? y[1] : 0.0, y.size() > 2 ? y[2] : 0.0};
  }
  return out;
}

struct OrientationReport {
  bool consistent = true;  // every interior edge is traversed once in each direction
  double signed_volume = 0;
};

/// Orientation consistency of the quad faces and the signed volume of the
/// projected surface (faces split into triangles, cones to the centroid).
inline OrientationReport orientation_check(const Mesh& mesh, const Projection& proj) {
  const auto P = project(mesh, proj);
  OrientationReport r;
  std::map<std::pair<std::size_t, std::size_t>, int> directed;
  for (const auto& f : mesh.faces)
    for (int e = 0; e < 4; ++e) {
      const std::size_t a = f[static_cast<std::size_t>(e)], b = f[static_cast<std::size_t>((e + 1) % 4)];
      if (++directed[{a, b}] > 1) r.consistent = false;
    }
  std::array<double, 3> cen{0, 0, 0};
  for (const auto& p : P)
    for (int j = 0; j < 3; ++j) cen[j] += p[j] / static_cast<double>(P.size());
  auto vol = [&](std::size_t a, std::size_t b, std::size_t c) {
    double u[3], v[3], w[3];
    for (int j = 0; j < 3; ++j) {
      u[j] = P[a][j] - cen[j];
      v[j] = P[b][j] - cen[j];
      w[j] = P[c][j] - cen[j];
    }
    return (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])) /
           6.0;
  };
  for (const auto& f : mesh.faces) r.signed_volume += vol(f[0], f[1], f[2]) + vol(f[0], f[2], f[3]);
  return r;
}

/// Reverse every face when the projected signed volume is negative.
inline void orient_outward(Mesh& mesh, const Projection& proj) {
  if (orientation_check(mesh, proj).signed_volume < 0)
    for (auto& f : mesh.faces) std::swap(f[1], f[3]);
}

namespace detail {

inline std::string num(double x) {
  if (!std::isfinite(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string json_num(double x) { return std::isfinite(x) ? num(x) : "null"; }

inline std::string json_escape(const std::string& s) { return nlohmann::json(s).dump(); }

inline Projection resolve_projection(const Mesh& mesh, const std::optional<Projection>& proj) {
  if (proj) return *proj;
  require(mesh.m <= 3, "export: meshes with m > 3 need an explicit projection (coordinate triple or pca)");
  Projection p;
  p.kind = Projection::Kind::pca;
  return p;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace detail

inline std::string csv_header(const Mesh& mesh) {
  std::string h = "t";
  for (std::size_t i = 1; i < mesh.param_names.size(); ++i) h += ",param" + std::to_string(i);
  for (int j = 1; j <= mesh.m; ++j) h += ",x" + std::to_string(j) + ",y" + std::to_string(j);
  return h + ",res_omega,res_imomega";
}

inline std::string to_csv(const Mesh& mesh) {
  mesh.validate();
  std::ostringstream o;
  o << csv_header(mesh) << '\n';
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    for (Eigen::Index k = 0; k < mesh.params[i].size(); ++k) o << (k ? "," : "") << detail::num(mesh.params[i][k]);
    for (int j = 0; j < mesh.m; ++j)
      o << ',' << detail::num(mesh.vertices[i][j].real()) << ',' << detail::num(mesh.vertices[i][j].imag());
    o << ',' << detail::num(mesh.res_omega[i]) << ',' << detail::num(mesh.res_imomega[i]) << '\n';
  }
  return o.str();
}

inline std::string to_obj(const Mesh& mesh, const std::optional<Projection>& proj = std::nullopt) {
  mesh.validate();
  const auto P = project(mesh, detail::resolve_projection(mesh, proj));
  std::ostringstream o;
  o << "# " << mesh.label << '\n';
  for (const auto& p : P) o << "v " << detail::num(p[0]) << ' ' << detail::num(p[1]) << ' ' << detail::num(p[2]) << '\n';
  for (const auto& f : mesh.faces) o << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << ' ' << f[3] + 1 << '\n';
  return o.str();
}

inline std::string to_ply(const Mesh& mesh, const std::optional<Projection>& proj = std::nullopt) {
  mesh.validate();
  const auto P = project(mesh, detail::resolve_projection(mesh, proj));
  std::ostringstream o;
  o << "ply\nformat ascii 1.0\ncomment " << mesh.label << "\nelement vertex " << P.size()
    << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.faces.size()
    << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& p : P) o << detail::num(p[0]) << ' ' << detail::num(p[1]) << ' ' << detail::num(p[2]) << '\n';
  for (const auto& f : mesh.faces) o << "4 " << f[0] << ' ' << f[1] << ' ' << f[2] << ' ' << f[3] << '\n';
  return o.str();
}

inline std::string to_json(const Mesh& mesh) {
  mesh.validate();
  std::ostringstream o;
  o << "{\n  \"format\": \"slmesh-1\",\n  \"m\": " << mesh.m << ",\n  \"label\": " << detail::json_escape(mesh.label)
    << ",\n  \"param_names\": [";
  for (std::size_t i = 0; i < mesh.param_names.size(); ++i)
    o << (i ? ", " : "") << detail::json_escape(mesh.param_names[i]);
  o << "],\n  \"vertices\": [";
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    o << (i ? ",\n    [" : "\n    [");
    for (int j = 0; j < mesh.m; ++j)
      o << (j ? ", " : "") << detail::num(mesh.vertices[i][j].real()) << ", " << detail::num(mesh.vertices[i][j].imag());
    o << ']';
  }
  o << "\n  ],\n  \"params\": [";
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    o << (i ? ",\n    [" : "\n    [");
    for (Eigen::Index k = 0; k < mesh.params[i].size(); ++k) o << (k ? ", " : "") << detail::num(mesh.params[i][k]);
    o << ']';
  }
  o << "\n  ],\n  \"faces\": [";
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    o << (i ? ", " : "") << '[' << f[0] << ", " << f[1] << ", " << f[2] << ", " << f[3] << ']';
  }
  o << "],\n  \"res_omega\": [";
  for (std::size_t i = 0; i < mesh.size(); ++i) o << (i ? ", " : "") << detail::json_num(mesh.res_omega[i]);
  o << "],\n  \"res_imomega\": [";
  for (std::size_t i = 0; i < mesh.size(); ++i) o << (i ? ", " : "") << detail::json_num(mesh.res_imomega[i]);
  o << "]\n}\n";
  return o.str();
}

inline Mesh mesh_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("mesh json: ") + e.what());
  }
  detail::require(j.value("format", "") == "slmesh-1", "mesh json: format must be slmesh-1");
  Mesh mesh;
  try {
    mesh.m = j.at("m").get<int>();
    mesh.label = j.value("label", "");
    mesh.param_names = j.at("param_names").get<std::vector<std::string>>();
    for (const auto& v : j.at("vertices")) {
      detail::require(v.size() == static_cast<std::size_t>(2 * mesh.m), "mesh json: vertex length must be 2m");
      CVec z(mesh.m);
      for (int k = 0; k < mesh.m; ++k) z[k] = cplx(v[2 * k].get<double>(), v[2 * k + 1].get<double>());
      mesh.vertices.push_back(z);
    }
    for (const auto& p : j.at("params")) {
      Vec q(static_cast<Eigen::Index>(p.size()));
      for (std::size_t k = 0; k < p.size(); ++k) q[static_cast<Eigen::Index>(k)] = p[k].get<double>();
      mesh.params.push_back(q);
    }
    for (const auto& f : j.at("faces")) {
      detail::require(f.size() == 4, "mesh json: faces must be quads");
      mesh.faces.push_back({f[0].get<std::size_t>(), f[1].get<std::size_t>(), f[2].get<std::size_t>(),
                            f[3].get<std::size_t>()});
    }
    auto nums = [](const nlohmann::json& a) {
      std::vector<double> v;
      for (const auto& x : a) v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
      return v;
    };
    mesh.res_omega = nums(j.at("res_omega"));
    mesh.res_imomega = nums(j.at("res_imomega"));
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("mesh json: ") + e.what());
  }
  mesh.validate();
  return mesh;
}

inline Mesh read_mesh_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw invalid_input("cannot open mesh file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return mesh_from_json(ss.str());
}

enum class MeshFormat { obj, ply, csv, json };

inline MeshFormat parse_mesh_format(const std::string& s) {
  if (s == "obj") return MeshFormat::obj;
  if (s == "ply") return MeshFormat::ply;
  if (s == "csv") return MeshFormat::csv;
  if (s == "json") return MeshFormat::json;
  throw invalid_input("unknown mesh format '" + s + "' (expected obj, ply, csv or json)");
}

inline void export_mesh(const Mesh& mesh, MeshFormat fmt, const std::string& path,
                        const std::optional<Projection>& proj = std::nullopt) {
  switch (fmt) {
    case MeshFormat::obj: detail::write_text(path, to_obj(mesh, proj)); break;
    case MeshFormat::ply: detail::write_text(path, to_ply(mesh, proj)); break;
    case MeshFormat::csv: detail::write_text(path, to_csv(mesh)); break;
    case MeshFormat::json: detail::write_text(path, to_json(mesh)); break;
  }
}

}  // namespace slevolve
