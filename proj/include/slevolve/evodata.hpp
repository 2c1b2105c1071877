#pragma once

// Evolution data (P, chi): an (m-1)-submanifold P of R^n together with an
// affine map chi : R^n -> Lambda^{m-1} R^n tangent to P.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slevolve/error.hpp"
#include "slevolve/multilinear.hpp"

namespace slevolve {

enum class DataKind { linear, affine };

inline const char* to_string(DataKind k) { return k == DataKind::linear ? "linear" : "affine"; }

/// Q(x) = x^T S x + b^T x + c0; the quadric is the level set Q(x) = c.
struct QuadricSpec {
  int n = 0;
  Mat S;
  Vec b;
  double c0 = 0;

  double value(const Vec& x) const { return x.dot(S * x) + b.dot(x) + c0; }
  Vec gradient(const Vec& x) const { return 2.0 * S * x + b; }
};

/// A sampled point of P with an orthonormal basis of T_pP in its columns.
struct PSample {
  Vec p;
  Mat tangent;
  bool singular = false;
};

using Sampler = std::function<PSample(std::mt19937_64&)>;

struct EvolutionData {
  int n = 0;
  int m = 0;
  DataKind kind = DataKind::linear;
  std::vector<Multivector> chi_linear;  // chi(x) = sum_k x_k chi_linear[k] + chi_const
  Multivector chi_const;
  Sampler sampler;
  std::string label;
  std::optional<QuadricSpec> quadric;
  double level = 0;

  Multivector chi(const Vec& x) const {
    detail::require(x.size() == n, "EvolutionData::chi: point has wrong dimension");
    Multivector out = chi_const;
    for (int k = 0; k < n; ++k)
      if (x[k] != 0.0) out += x[k] * chi_linear[k];
    return out;
  }

  std::vector<PSample> samples(int count, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<PSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out.push_back(sampler(rng));
    return out;
  }
};

namespace detail {

// Orthonormal basis of the orthogonal complement of a nonzero vector.
inline Mat complement_basis(const Vec& normal) {
  const Eigen::Index n = normal.size();
  Eigen::HouseholderQR<Mat> qr(normal.normalized());
  Mat Q = qr.householderQ() * Mat::Identity(n, n);
  return Q.rightCols(n - 1);
}

inline Multivector tail_blade(int n, int from) {
  std::vector<int> idx;
  for (int i = from; i < n; ++i) idx.push_back(i);
  return Multivector::blade(n, idx);
}

}  // namespace detail

/// Evolution data of a quadric: chi(x) = dQ(x) . (e_1 ^ ... ^ e_m), n = m.
inline EvolutionData quadric_data(const QuadricSpec& spec, double c) {
  const int n = spec.n;
  detail::require(n >= 2 && n <= kMaxDim, "quadric_data: dimension must lie in [2,16]");
  detail::require(spec.S.rows() == n && spec.S.cols() == n && spec.b.size() == n,
                  "quadric_data: S must be n x n and b of length n");
  detail::require((spec.S - spec.S.transpose()).norm() <= 1e-12 * std::max(1.0, spec.S.norm()),
                  "quadric_data: S must be symmetric");
  detail::require(spec.S.norm() > 0 || spec.b.norm() > 0, "quadric_data: S and b are both zero");
  detail::require(std::isfinite(c), "quadric_data: level must be finite");

  const bool centred = spec.b.norm() == 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(spec.S);
  const Vec lam = es.eigenvalues();
  const double scale = lam.cwiseAbs().maxCoeff();
  int npos = 0, nneg = 0;
  for (int i = 0; i < n; ++i) {
    if (lam[i] > 1e-12 * scale) ++npos;
    if (lam[i] < -1e-12 * scale) ++nneg;
  }
  const double cl = c - spec.c0;
  if (centred) {
    detail::require(npos + nneg == n, "quadric_data: centred quadric must have invertible S (degenerate quadric)");
    if (cl > 0) detail::require(npos > 0, "quadric_data: empty level set");
    if (cl < 0) detail::require(nneg > 0, "quadric_data: empty level set");
    if (cl == 0)
      detail::require(npos > 0 && nneg > 0 && n >= 2,
                      "quadric_data: level set is a point (dimension below m-1)");
  }

  EvolutionData d;
  d.n = d.m = n;
  d.kind = centred ? DataKind::linear : DataKind::affine;
  d.quadric = spec;
  d.level = c;
  d.label = "quadric";
  // dQ = sum_j (2 S x + b)_j dx_j; (dx_j) . vol = (-1)^j e_{all but j} (0-based j)
  const std::uint32_t full = (1u << n) - 1;
  d.chi_linear.assign(static_cast<std::size_t>(n), Multivector(n, n - 1));
  d.chi_const = Multivector(n, n - 1);
  for (int j = 0; j < n; ++j) {
    const std::uint32_t L = full & ~(1u << j);
    const double sgn = (j % 2 == 0) ? 1.0 : -1.0;
    for (int k = 0; k < n; ++k) d.chi_linear[static_cast<std::size_t>(k)].add(L, sgn * 2.0 * spec.S(j, k));
    d.chi_const.add(L, sgn * spec.b[j]);
  }

  // Sample by intersecting random lines with the level set.
  const QuadricSpec q = spec;
  d.sampler = [q, c, n](std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
      Vec x0(n), dir(n);
      for (int i = 0; i < n; ++i) {
        x0[i] = g(rng);
        dir[i] = g(rng);
      }
      const double A2 = dir.dot(q.S * dir);
      const double B1 = 2.0 * x0.dot(q.S * dir) + q.b.dot(dir);
      const double C0 = q.value(x0) - c;
      double s;
      if (std::abs(A2) < 1e-14) {
        if (std::abs(B1) < 1e-14) continue;
        s = -C0 / B1;
      } else {
        const double disc = B1 * B1 - 4.0 * A2 * C0;
        if (disc < 0) continue;
        const double sq = std::sqrt(disc);
        const double qq = -0.5 * (B1 + std::copysign(sq, B1));
        const double r1 = qq / A2;
        const double r2 = (qq != 0.0) ? C0 / qq : r1;
        s = (std::uniform_int_distribution<int>(0, 1)(rng) == 0) ? r1 : r2;
      }
      PSample ps;
      ps.p = x0 + s * dir;
      if (!ps.p.allFinite() || ps.p.norm() > 1e6) continue;
      const Vec grad = q.gradient(ps.p);
      ps.singular = grad.norm() < 1e-8;
      ps.tangent = ps.singular ? Mat::Zero(n, n - 1) : detail::complement_basis(grad);
      return ps;
    }
    throw invalid_input("quadric_data: empty level set (no sample found)");
  };
  // Fail early on an empty level set.
  std::mt19937_64 probe(12345);
  bool any = false;
  for (int i = 0; i < 8 && !any; ++i) any = !d.sampler(probe).singular;
  detail::require(any, "quadric_data: level set has no nonsingular points");
  return d;
}

/// Signature form diag(1..1, -1..-1) with `a` plus signs.
inline Mat signature_matrix(int m, int a) {
  Mat eta = Mat::Zero(m, m);
  for (int i = 0; i < m; ++i) eta(i, i) = i < a ? 1.0 : -1.0;
  return eta;
}

/// Centred quadric sum_{j<=a} x_j^2 - sum_{j>a} x_j^2 = c.
inline EvolutionData centred_quadric_data(int m, int a, double c) {
  detail::require(m >= 2 && a >= 0 && a <= m, "centred_quadric_data: need 0 <= a <= m, m >= 2");
  QuadricSpec s{m, signature_matrix(m, a), Vec::Zero(m), 0.0};
  auto d = quadric_data(s, c);
  d.label = "centred_quadric";
  return d;
}

/// Paraboloid sum_{j<=a} x_j^2 - sum_{a<j<m} x_j^2 + 2 x_m = 0.
inline EvolutionData paraboloid_data(int m, int a) {
  detail::require(m >= 2 && a >= 0 && a <= m - 1, "paraboloid_data: need 0 <= a <= m-1");
  QuadricSpec s{m, Mat::Zero(m, m), Vec::Zero(m), 0.0};
  for (int i = 0; i < m - 1; ++i) s.S(i, i) = i < a ? 1.0 : -1.0;
  s.b[m - 1] = 2.0;
  auto d = quadric_data(s, 0.0);
  d.label = "paraboloid";
  return d;
}

/// P' = P x R^k, chi' = chi ^ e_{n+1} ^ ... ^ e_{n+k}.
inline EvolutionData extend_product(const EvolutionData& data, int k) {
  detail::require(k >= 0, "extend_product: k must be nonnegative");
  if (k == 0) return data;
  const int n2 = data.n + k;
  detail::require(n2 <= kMaxDim, "extend_product: dimension exceeds 16");
  const Multivector tail = detail::tail_blade(n2, data.n);
  EvolutionData out;
  out.n = n2;
  out.m = data.m + k;
  out.kind = data.kind;
  out.label = data.label + "_x_R" + std::to_string(k);
  out.level = data.level;
  for (int j = 0; j < n2; ++j)
    out.chi_linear.push_back(j < data.n ? wedge(embed(data.chi_linear[static_cast<std::size_t>(j)], n2), tail)
                                        : Multivector(n2, out.m - 1));
  out.chi_const = wedge(embed(data.chi_const, n2), tail);
  const Sampler base = data.sampler;
  const int n = data.n;
  out.sampler = [base, n, k](std::mt19937_64& rng) {
    PSample s = base(rng);
    std::normal_distribution<double> g(0.0, 1.0);
    PSample o;
    o.p.resize(n + k);
    o.p.head(n) = s.p;
    for (int i = 0; i < k; ++i) o.p[n + i] = g(rng);
    const auto tcols = s.tangent.cols();
    o.tangent = Mat::Zero(n + k, tcols + k);
    o.tangent.topLeftCorner(n, tcols) = s.tangent;
    o.tangent.bottomRightCorner(k, k) = Mat::Identity(k, k);
    o.singular = s.singular;
    return o;
  };
  return out;
}

/// Integral curve of x -> M x + v in R^2, times R^{m-2}.
inline EvolutionData curve_data(const Eigen::Matrix2d& M, const Eigen::Vector2d& v, int m,
                                const Eigen::Vector2d& start = Eigen::Vector2d(1.0, 0.5), double s_max = 1.0) {
  detail::require(m >= 2 && m <= kMaxDim, "curve_data: m must lie in [2,16]");
  detail::require(M.norm() > 0 || v.norm() > 0, "curve_data: vector field is identically zero");
  detail::require(M.allFinite() && v.allFinite(), "curve_data: non-finite coefficients");
  const Eigen::Vector2d f0 = M * start + v;
  detail::require(f0.norm() > 1e-12, "curve_data: start point is a zero of the field");
  EvolutionData d;
  d.n = d.m = m;
  d.kind = v.norm() == 0.0 ? DataKind::linear : DataKind::affine;
  d.label = "curve";
  const Multivector tail = detail::tail_blade(m, 2);  // scalar 1 when m = 2
  const Multivector E1 = wedge(Multivector::blade(m, {0}), tail);
  const Multivector E2 = wedge(Multivector::blade(m, {1}), tail);
  d.chi_linear.assign(static_cast<std::size_t>(m), Multivector(m, m - 1));
  for (int j = 0; j < 2; ++j) d.chi_linear[static_cast<std::size_t>(j)] = M(0, j) * E1 + M(1, j) * E2;
  d.chi_const = v[0] * E1 + v[1] * E2;

  // Flow of the affine field via the exponential of the augmented matrix.
  Eigen::Matrix3d aug = Eigen::Matrix3d::Zero();
  aug.topLeftCorner<2, 2>() = M;
  aug.topRightCorner<2, 1>() = v;
  d.sampler = [aug, M, v, start, s_max, m](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> us(-s_max, s_max);
    std::normal_distribution<double> g(0.0, 1.0);
    const double s = us(rng);
    const Eigen::Matrix3d E = (aug * s).exp();
    const Eigen::Vector2d x = E.topLeftCorner<2, 2>() * start + E.topRightCorner<2, 1>();
    PSample ps;
    ps.p = Vec::Zero(m);
    ps.p.head<2>() = x;
    for (int i = 2; i < m; ++i) ps.p[i] = g(rng);
    const Eigen::Vector2d f = M * x + v;
    ps.singular = f.norm() < 1e-8;
    ps.tangent = Mat::Zero(m, m - 1);
    if (!ps.singular) ps.tangent.block(0, 0, 2, 1) = f.normalized();
    for (int i = 2; i < m; ++i) ps.tangent(i, i - 1) = 1.0;
    return ps;
  };
  return d;
}

// ---------------------------------------------------------------------------
// Diagnostics.

struct TangencyReport {
  double max_residual = 0;   // |chi(p) - Lambda^{m-1}Pi chi(p)| / |chi(p)|
  double min_chi_norm = std::numeric_limits<double>::infinity();
  int singular_skipped = 0;
  int samples = 0;
};

/// Check chi(p) lies in Lambda^{m-1} T_pP at sampled nonsingular points.
inline TangencyReport tangency_check(const EvolutionData& d, int count, std::uint64_t seed) {
  TangencyReport r;
  for (const PSample& s : d.samples(count, seed)) {
    ++r.samples;
    if (s.singular) {
      ++r.singular_skipped;
      continue;
    }
    const Multivector chi = d.chi(s.p);
    const double nrm = chi.norm();
    r.min_chi_norm = std::min(r.min_chi_norm, nrm);
    const Mat Pi = s.tangent * s.tangent.transpose();
    const Multivector proj = push_forward(Pi, chi);
    const double res = (chi - proj).norm() / std::max(nrm, 1e-300);
    r.max_residual = std::max(r.max_residual, res);
  }
  return r;
}

/// Rank of sampled points (homogenized for affine data); full rank means P
/// spans R^n (linear) or is not inside a proper affine subspace.
inline int sample_span_rank(const EvolutionData& d, std::uint64_t seed) {
  const auto pts = d.samples(2 * d.n + 2, seed);
  const int rows = d.kind == DataKind::affine ? d.n + 1 : d.n;
  Mat X(rows, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    X.col(static_cast<Eigen::Index>(i)).head(d.n) = pts[i].p;
    if (d.kind == DataKind::affine) X(d.n, static_cast<Eigen::Index>(i)) = 1.0;
  }
  Eigen::JacobiSVD<Mat> svd(X);
  const Vec sv = svd.singularValues();
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > 1e-10 * sv[0]) ++rank;
  return rank;
}

// ---------------------------------------------------------------------------
// Symmetry algebra.

struct SymmetryAlgebra {
  int n = 0;                         // matrices act on R^n (R^{n+1} for affine data)
  std::vector<Mat> basis;            // orthonormal (Frobenius) basis of g
  std::vector<Mat> image_generators; // L(alpha) over basis covectors alpha
  int image_rank = 0;
  int kernel_dim = 0;                // dim Ker L
  double closure_residual = 0;       // max distance of [X,Y] from span, relative
  bool homogenized = false;
};

namespace detail {

inline Vec flatten(const Mat& X) { return Eigen::Map<const Vec>(X.data(), X.size()); }

// Orthonormal basis of span(mats) via SVD at relative threshold.
inline std::vector<Mat> span_basis(const std::vector<Mat>& mats, Eigen::Index rows, Eigen::Index cols,
                                   double rel = 1e-10) {
  if (mats.empty()) return {};
  Mat V(rows * cols, static_cast<Eigen::Index>(mats.size()));
  for (std::size_t i = 0; i < mats.size(); ++i) V.col(static_cast<Eigen::Index>(i)) = flatten(mats[i]);
  Eigen::JacobiSVD<Mat> svd(V, Eigen::ComputeThinU);
  const Vec sv = svd.singularValues();
  std::vector<Mat> out;
  if (sv.size() == 0 || sv[0] == 0.0) return out;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] <= rel * sv[0]) break;
    out.push_back(Eigen::Map<const Mat>(svd.matrixU().col(i).data(), rows, cols));
  }
  return out;
}

inline double distance_to_span(const Mat& X, const std::vector<Mat>& onb) {
  Mat r = X;
  for (const Mat& B : onb) r -= (B.cwiseProduct(X).sum()) * B;
  return r.norm();
}

}  // namespace detail

/// The Lie algebra generated by the linear fields L(alpha) x = chi(x) . alpha.
inline SymmetryAlgebra symmetry_algebra(const EvolutionData& d) {
  detail::require(d.m >= 2, "symmetry_algebra: need m >= 2");
  SymmetryAlgebra g;
  const bool aff = d.kind == DataKind::affine;
  g.homogenized = aff;
  g.n = aff ? d.n + 1 : d.n;
  const auto& covs = detail::subsets(d.n, d.m - 2);
  for (std::uint32_t J : covs) {
    Multivector alpha(d.n, d.m - 2);
    alpha.set(J, 1.0);
    Mat L = Mat::Zero(g.n, g.n);
    for (int k = 0; k < d.n; ++k) L.block(0, k, d.n, 1) = contract(d.chi_linear[static_cast<std::size_t>(k)], alpha);
    if (aff) L.block(0, d.n, d.n, 1) = contract(d.chi_const, alpha);
    g.image_generators.push_back(L);
  }
  auto basis = detail::span_basis(g.image_generators, g.n, g.n);
  g.image_rank = static_cast<int>(basis.size());
  g.kernel_dim = static_cast<int>(covs.size()) - g.image_rank;

  // Close under commutators.
  const std::size_t cap = static_cast<std::size_t>(g.n * g.n);
  for (int round = 0; round < 64; ++round) {
    std::vector<Mat> all = basis;
    for (std::size_t i = 0; i < basis.size(); ++i)
      for (std::size_t j = i + 1; j < basis.size(); ++j) all.push_back(basis[i] * basis[j] - basis[j] * basis[i]);
    auto next = detail::span_basis(all, g.n, g.n);
    if (next.size() > cap) throw numerical_failure("symmetry_algebra: closure exceeded n^2 dimensions");
    const bool stable = next.size() == basis.size();
    basis = std::move(next);
    if (stable) break;
  }
  g.basis = basis;
  for (std::size_t i = 0; i < basis.size(); ++i)
    for (std::size_t j = i + 1; j < basis.size(); ++j) {
      const Mat C = basis[i] * basis[j] - basis[j] * basis[i];
      g.closure_residual = std::max(g.closure_residual, detail::distance_to_span(C, basis));
    }
  return g;
}

/// max |X^T eta + eta X| over the basis.
inline double form_preservation_residual(const SymmetryAlgebra& g, const Mat& eta) {
  double r = 0;
  for (const Mat& X : g.basis) {
    const Mat Y = X.topLeftCorner(eta.rows(), eta.cols());
    r = std::max(r, (Y.transpose() * eta + eta * Y).norm() / std::max(Y.norm(), 1e-300));
  }
  return r;
}

/// Tangency of every basis field to P: max |normal part of X p| / (|X| |p|_h).
inline double field_tangency_residual(const SymmetryAlgebra& g, const EvolutionData& d, int count,
                                      std::uint64_t seed) {
  double r = 0;
  for (const PSample& s : d.samples(count, seed)) {
    if (s.singular) continue;
    Vec ph(g.n);
    ph.head(d.n) = s.p;
    if (g.homogenized) ph[d.n] = 1.0;
    const Mat N = Mat::Identity(d.n, d.n) - s.tangent * s.tangent.transpose();
    for (const Mat& X : g.basis) {
      const Vec v = (X * ph).head(d.n);
      r = std::max(r, (N * v).norm() / std::max(X.norm() * ph.norm(), 1e-300));
    }
  }
  return r;
}

/// Central-difference estimate of the Lie derivative of chi along the linear
/// field X at x: d/ds [ exp(-sX)_* chi(exp(sX) x) ] at s = 0.
inline double lie_derivative_residual(const EvolutionData& d, const Mat& X, const Vec& x, double h = 1e-5) {
  detail::require(d.kind == DataKind::linear && X.rows() == d.n, "lie_derivative_residual: linear data only");
  auto pulled = [&](double s) {
    const Mat E = (X * s).exp();
    const Mat Einv = (-X * s).exp();
    return push_forward(Einv, d.chi(E * x));
  };
  const Multivector diff = (1.0 / (2.0 * h)) * (pulled(h) - pulled(-h));
  return diff.norm() / std::max(d.chi(x).norm(), 1e-300);
}

// ---------------------------------------------------------------------------
// Classification for n = m.

enum class SquareKind { quadric, curve_times_plane, indeterminate };

inline const char* to_string(SquareKind k) {
  switch (k) {
    case SquareKind::quadric: return "quadric";
    case SquareKind::curve_times_plane: return "curve_times_plane";
    default: return "indeterminate";
  }
}

struct SquareClassification {
  SquareKind kind = SquareKind::indeterminate;
  Mat S;               // recovered quadric (quadric case): Q = x^T S x + b^T x
  Vec b;
  double dbeta_norm = 0;  // |d beta| relative to |beta|
  std::string reason;
};

/// Split by the exterior derivative of beta = vol . chi.
inline SquareClassification classify_square(const EvolutionData& d) {
  detail::require(d.n == d.m, "classify_square: requires n = m");
  const int n = d.n;
  Mat B(n, n);
  for (int k = 0; k < n; ++k) B.col(k) = volume_contract(d.chi_linear[static_cast<std::size_t>(k)]);
  const Vec b = volume_contract(d.chi_const);
  const double scale = std::max(B.norm(), b.norm());
  SquareClassification out;
  if (scale == 0.0) {
    out.reason = "chi vanishes identically";
    return out;
  }
  const Mat W = B - B.transpose();  // d beta = sum_{i<k} W_{ik}... as antisymmetric matrix
  out.dbeta_norm = W.norm() / scale;
  constexpr double small = 1e-9, large = 1e-6;
  if (out.dbeta_norm <= small) {
    out.kind = SquareKind::quadric;
    out.S = 0.25 * (B + B.transpose());
    out.b = b;
    out.reason = "d beta = 0";
    return out;
  }
  if (out.dbeta_norm < large) {
    out.reason = "|d beta| in the ambiguous band";
    return out;
  }
  Eigen::JacobiSVD<Mat> svd(W, Eigen::ComputeFullU);
  const Vec sv = svd.singularValues();
  for (Eigen::Index i = 2; i < sv.size(); ++i) {
    const double rel = sv[i] / sv[0];
    if (rel > small && rel < large) {
      out.reason = "rank of d beta ambiguous";
      return out;
    }
    if (rel >= large) {
      out.reason = "d beta has rank > 2";
      return out;
    }
  }
  // beta(x) must lie in the plane spanned by the two covectors of d beta.
  const Mat U2 = svd.matrixU().leftCols(2);
  const Mat Pn = Mat::Identity(n, n) - U2 * U2.transpose();
  const double off = std::max((Pn * B).norm(), (Pn * b).norm()) / scale;
  if (off <= small) {
    out.kind = SquareKind::curve_times_plane;
    out.reason = "d beta = gamma ^ delta with beta in <gamma, delta>";
  } else if (off < large) {
    out.reason = "beta span test ambiguous";
  } else {
    out.reason = "beta not in the span of d beta";
  }
  return out;
}

}  // namespace slevolve
