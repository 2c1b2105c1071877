#pragma once

// Exterior algebra over R^n and the standard forms on C^m = R^{2m}.
//
// A k-vector stores one coefficient per k-subset of {0..n-1}. Subsets are
// bitmasks; the storage slot of a subset is its colexicographic rank, which
// coincides with the numeric order of the masks. The basis element of a
// mask is e_{i1} ^ ... ^ e_{ik} with i1 < ... < ik.
//
// Complex coordinates are interleaved: real index 2j is Re z_j and 2j+1 is
// Im z_j.

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "slevolve/error.hpp"

namespace slevolve {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// Oriented m-frame: m tangent vectors in R^{2m}.
using Frame = std::vector<Vec>;

inline constexpr int kMaxDim = 16;

namespace detail {

inline std::uint64_t binom(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

inline std::size_t colex_rank(std::uint32_t mask) {
  std::size_t r = 0;
  int i = 1;
  while (mask) {
    int c = std::countr_zero(mask);
    r += binom(c, i++);
    mask &= mask - 1;
  }
  return r;
}

// All k-subsets of {0..n-1} in rank order (Gosper's hack walks them in
// increasing numeric order, which is colex order).
inline const std::vector<std::uint32_t>& subsets(int n, int k) {
  static std::array<std::array<std::vector<std::uint32_t>, kMaxDim + 1>, kMaxDim + 1> cache;
  static std::array<std::array<std::once_flag, kMaxDim + 1>, kMaxDim + 1> once;
  std::call_once(once[n][k], [n, k] {
    auto& out = cache[n][k];
    out.reserve(binom(n, k));
    if (k == 0) {
      out.push_back(0);
      return;
    }
    std::uint32_t x = (1u << k) - 1;
    const std::uint32_t lim = 1u << n;
    while (x < lim) {
      out.push_back(x);
      std::uint32_t c = x & (~x + 1);
      std::uint32_t r = x + c;
      x = (((r ^ x) >> 2) / c) | r;
    }
  });
  return cache[n][k];
}

// Sign of e_A ^ e_B relative to e_{A|B}; zero when A and B overlap.
inline int merge_sign(std::uint32_t a, std::uint32_t b) {
  if (a & b) return 0;
  int swaps = 0;
  while (b) {
    int j = std::countr_zero(b);
    // elements of a above j have to move past e_j
    swaps += std::popcount(a >> (j + 1));
    b &= b - 1;
  }
  return (swaps & 1) ? -1 : 1;
}

}  // namespace detail

/// Element of Lambda^k R^n with dense coefficient storage.
class Multivector {
 public:
  Multivector() = default;
  Multivector(int n, int k) : n_(n), k_(k) {
    detail::require(n >= 0 && n <= kMaxDim, "Multivector: ambient dimension must lie in [0,16]");
    detail::require(k >= 0 && k <= n, "Multivector: degree must lie in [0,n]");
    c_.assign(detail::binom(n, k), 0.0);
  }

  /// e_{i1} ^ ... ^ e_{ik} for 0-based indices in any order (sign follows the order given).
  static Multivector blade(int n, const std::vector<int>& idx) {
    Multivector out(n, static_cast<int>(idx.size()));
    std::uint32_t mask = 0;
    int sign = 1;
    for (int i : idx) {
      detail::require(i >= 0 && i < n, "Multivector::blade: index out of range");
      std::uint32_t bit = 1u << i;
      int s = detail::merge_sign(mask, bit);
      if (s == 0) return out;
      sign *= s;
      mask |= bit;
    }
    out.set(mask, sign);
    return out;
  }

  int dim() const { return n_; }
  int degree() const { return k_; }
  std::size_t size() const { return c_.size(); }

  double operator[](std::size_t r) const { return c_[r]; }
  double& operator[](std::size_t r) { return c_[r]; }
  std::uint32_t mask_at(std::size_t r) const { return detail::subsets(n_, k_)[r]; }

  double coeff(std::uint32_t mask) const { return c_[detail::colex_rank(mask)]; }
  void set(std::uint32_t mask, double v) { c_[detail::colex_rank(mask)] = v; }
  void add(std::uint32_t mask, double v) { c_[detail::colex_rank(mask)] += v; }

  const std::vector<double>& coeffs() const { return c_; }

  double norm() const {
    double s = 0;
    for (double v : c_) s += v * v;
    return std::sqrt(s);
  }
  bool finite() const {
    for (double v : c_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Multivector& operator+=(const Multivector& o) {
    check_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
    return *this;
  }
  Multivector& operator-=(const Multivector& o) {
    check_same(o);
    for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Multivector& operator*=(double s) {
    for (double& v : c_) v *= s;
    return *this;
  }
  friend Multivector operator+(Multivector a, const Multivector& b) { return a += b; }
  friend Multivector operator-(Multivector a, const Multivector& b) { return a -= b; }
  friend Multivector operator*(double s, Multivector a) { return a *= s; }
  friend Multivector operator*(Multivector a, double s) { return a *= s; }

 private:
  void check_same(const Multivector& o) const {
    detail::require(n_ == o.n_ && k_ == o.k_, "Multivector: shape mismatch");
  }
  int n_ = 0;
  int k_ = 0;
  std::vector<double> c_;
};

/// Exterior product.
inline Multivector wedge(const Multivector& a, const Multivector& b) {
  detail::require(a.dim() == b.dim(), "wedge: ambient dimensions differ");
  detail::require(a.degree() + b.degree() <= a.dim(), "wedge: degree exceeds dimension");
  Multivector out(a.dim(), a.degree() + b.degree());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    std::uint32_t ma = a.mask_at(i);
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (b[j] == 0.0) continue;
      std::uint32_t mb = b.mask_at(j);
      int s = detail::merge_sign(ma, mb);
      if (s) out.add(ma | mb, s * a[i] * b[j]);
    }
  }
  return out;
}

/// A vector of R^n as a 1-vector.
inline Multivector as_multivector(const Vec& v) {
  Multivector out(static_cast<int>(v.size()), 1);
  for (int i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = v[i];
  return out;
}

/// Embed a k-vector of R^n into R^{n2} (n2 >= n) along the first n axes.
inline Multivector embed(const Multivector& a, int n2) {
  detail::require(n2 >= a.dim(), "embed: target dimension too small");
  Multivector out(n2, a.degree());
  for (std::size_t i = 0; i < a.size(); ++i) out.set(a.mask_at(i), a[i]);
  return out;
}

/// Pushforward of a k-vector through a linear map G : R^n -> R^p (G is p x n).
inline Multivector push_forward(const Mat& G, const Multivector& chi) {
  const int n = chi.dim();
  const int p = static_cast<int>(G.rows());
  detail::require(G.cols() == n, "push_forward: matrix columns must equal ambient dimension");
  const int k = chi.degree();
  Multivector out(p, k);
  if (k == 0) {
    out[0] = chi[0];
    return out;
  }
  const auto& rows = detail::subsets(p, k);
  Mat sub(k, k);
  std::array<int, kMaxDim> ci{}, ri{};
  for (std::size_t j = 0; j < chi.size(); ++j) {
    if (chi[j] == 0.0) continue;
    std::uint32_t mj = chi.mask_at(j);
    for (int q = 0, b = 0; b < n; ++b)
      if (mj >> b & 1u) ci[q++] = b;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::uint32_t mr = rows[r];
      for (int q = 0, b = 0; b < p; ++b)
        if (mr >> b & 1u) ri[q++] = b;
      for (int a = 0; a < k; ++a)
        for (int c = 0; c < k; ++c) sub(a, c) = G(ri[a], ci[c]);
      out[r] += chi[j] * sub.determinant();
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forms on C^m.

/// Real 2m x n matrix of a complex m x n matrix in interleaved coordinates.
inline Mat realify(const CMat& A) {
  Mat G(2 * A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.rows(); ++j)
    for (Eigen::Index k = 0; k < A.cols(); ++k) {
      G(2 * j, k) = A(j, k).real();
      G(2 * j + 1, k) = A(j, k).imag();
    }
  return G;
}

/// Complex m-vector read from interleaved real coordinates.
inline CVec complexify(const Vec& v) {
  detail::require(v.size() % 2 == 0, "complexify: odd length");
  CVec z(v.size() / 2);
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = cplx(v[2 * j], v[2 * j + 1]);
  return z;
}

inline Vec decomplexify(const CVec& z) {
  Vec v(2 * z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    v[2 * j] = z[j].real();
    v[2 * j + 1] = z[j].imag();
  }
  return v;
}

/// omega(v1, v2) = sum_j (x_j(v1) y_j(v2) - y_j(v1) x_j(v2)).
inline double eval_omega(const Vec& v1, const Vec& v2, int m) {
  detail::require(m >= 1 && v1.size() == 2 * m && v2.size() == 2 * m,
                  "eval_omega: vectors must have length 2m");
  double s = 0;
  for (int j = 0; j < m; ++j) s += v1[2 * j] * v2[2 * j + 1] - v1[2 * j + 1] * v2[2 * j];
  return s;
}

/// Omega(v_1..v_m) = det of the complex matrix with columns v_j.
inline cplx eval_omega_complex(const Frame& frame) {
  const int m = static_cast<int>(frame.size());
  detail::require(m >= 1, "eval_omega_complex: empty frame");
  CMat M(m, m);
  for (int c = 0; c < m; ++c) {
    detail::require(frame[c].size() == 2 * m, "eval_omega_complex: vectors must have length 2m");
    M.col(c) = complexify(frame[c]);
  }
  return M.determinant();
}

/// Omega evaluated on real basis vectors e_{i1}, ..., e_{im} (sorted, given as a mask).
inline cplx omega_on_basis(std::uint32_t mask) {
  std::uint32_t seen = 0;
  int odd = 0;
  for (std::uint32_t x = mask; x; x &= x - 1) {
    int b = std::countr_zero(x);
    std::uint32_t slot = 1u << (b / 2);
    if (seen & slot) return 0.0;
    seen |= slot;
    odd += b & 1;
  }
  static const cplx ipow[4] = {cplx(1, 0), cplx(0, 1), cplx(-1, 0), cplx(0, -1)};
  return ipow[odd & 3];
}

/// Re Omega(e_y, V) as a covector in y, for an (m-1)-vector V in R^{2m}.
inline Vec re_omega_first_slot(const Multivector& V) {
  const int p = V.dim();
  detail::require(p % 2 == 0 && V.degree() == p / 2 - 1,
                  "re_omega_first_slot: need an (m-1)-vector on R^{2m}");
  Vec c = Vec::Zero(p);
  for (std::size_t r = 0; r < V.size(); ++r) {
    if (V[r] == 0.0) continue;
    std::uint32_t L = V.mask_at(r);
    for (int y = 0; y < p; ++y) {
      int s = detail::merge_sign(1u << y, L);
      if (!s) continue;
      c[y] += s * V[r] * omega_on_basis(L | (1u << y)).real();
    }
  }
  return c;
}

/// Interior product Lambda^{m-1} R^n x Lambda^{m-2}(R^n)* -> R^n:
/// v^i = sum_J chi^{iJ} alpha_J, where alpha eats the trailing slots.
inline Vec contract(const Multivector& chi, const Multivector& alpha) {
  detail::require(chi.dim() == alpha.dim(), "contract: ambient dimensions differ");
  detail::require(chi.degree() >= 1 && alpha.degree() == chi.degree() - 1,
                  "contract: degrees must be (m-1, m-2)");
  const int n = chi.dim();
  Vec v = Vec::Zero(n);
  for (std::size_t a = 0; a < alpha.size(); ++a) {
    if (alpha[a] == 0.0) continue;
    std::uint32_t J = alpha.mask_at(a);
    for (int i = 0; i < n; ++i) {
      int s = detail::merge_sign(1u << i, J);
      if (!s) continue;
      v[i] += s * chi.coeff(J | (1u << i)) * alpha[a];
    }
  }
  return v;
}

/// Hodge-type product Lambda^n (R^n)* x Lambda^{n-1} R^n -> (R^n)* with the
/// volume form dx_1 ^ ... ^ dx_n in the first slot: beta(y) = vol(y, chi).
inline Vec volume_contract(const Multivector& chi) {
  const int n = chi.dim();
  detail::require(chi.degree() == n - 1, "volume_contract: need an (n-1)-vector");
  Vec b = Vec::Zero(n);
  const std::uint32_t full = (n == 32) ? ~0u : ((1u << n) - 1);
  for (int y = 0; y < n; ++y) {
    std::uint32_t L = full & ~(1u << y);
    b[y] = detail::merge_sign(1u << y, L) * chi.coeff(L);
  }
  return b;
}

/// Gram volume sqrt(det(V^T V)) of a list of vectors.
inline double gram_volume(const Frame& frame) {
  if (frame.empty()) return 0.0;
  Mat V(frame[0].size(), static_cast<Eigen::Index>(frame.size()));
  for (std::size_t c = 0; c < frame.size(); ++c) V.col(static_cast<Eigen::Index>(c)) = frame[c];
  double d = (V.transpose() * V).determinant();
  return d > 0 ? std::sqrt(d) : 0.0;
}

}  // namespace slevolve
