#pragma once

// JSON and CSV serialization of results. JSON objects keep insertion order so
// that identical inputs give byte-identical documents.

#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "slevolve/affine.hpp"
#include "slevolve/centred.hpp"
#include "slevolve/error.hpp"
#include "slevolve/evodata.hpp"
#include "slevolve/evolver.hpp"
#include "slevolve/meshverify.hpp"
#include "slevolve/threefold.hpp"

namespace slevolve {

using ojson = nlohmann::ordered_json;

#ifdef SLEVOLVE_VERSION_STRING
inline constexpr const char* kVersion = SLEVOLVE_VERSION_STRING;
#else
inline constexpr const char* kVersion = "0.3.0";
#endif

namespace detail {

inline ojson finite_or_null(double x) { return std::isfinite(x) ? ojson(x) : ojson(nullptr); }

inline ojson complex_pair(cplx z) { return ojson::array({z.real(), z.imag()}); }

inline ojson mat_json(const Mat& M) {
  ojson rows = ojson::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    ojson r = ojson::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline Mat mat_from_json(const ojson& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  require(j.is_array() && static_cast<Eigen::Index>(j.size()) == rows, what + ": wrong row count");
  Mat M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& r = j[static_cast<std::size_t>(i)];
    require(r.is_array() && static_cast<Eigen::Index>(r.size()) == cols, what + ": wrong column count");
    for (Eigen::Index k = 0; k < cols; ++k) M(i, k) = r[static_cast<std::size_t>(k)].get<double>();
  }
  return M;
}

}  // namespace detail

inline ojson to_json(const CentredParams& p) {
  return ojson{{"m", p.m}, {"a", p.a}, {"alphas", p.alphas}, {"A", p.A}, {"c", p.c}};
}

inline ojson to_json(const BetaResult& r) {
  return ojson{{"betas", r.betas},
               {"period_T", r.period_T},
               {"gamma", r.gamma},
               {"delta", r.delta},
               {"quadrature_error", r.quadrature_error},
               {"beta_sum", r.beta_sum}};
}

inline ojson to_json(const OdeBetaResult& r) {
  return ojson{{"betas", r.betas}, {"period_T", r.period_T}, {"conservation_drift", r.conservation_drift}};
}

inline ojson to_json(const BetaLimits& r) {
  return ojson{{"at_zero", r.at_zero}, {"at_max", r.at_max}, {"k", r.k}, {"l", r.l}};
}

inline ojson to_json(const PeriodicSolution& s) {
  return ojson{{"params", to_json(s.params)},
               {"a", s.int_angles},
               {"b", s.denom},
               {"residual", s.residual},
               {"period_T", s.period_T},
               {"topology", s.topology},
               {"verified", s.verified},
               {"verify_residual", detail::finite_or_null(s.verify_residual)}};
}

inline ojson to_json(const SLReport& r) {
  return ojson{{"max_omega_residual", r.max_omega_residual},
               {"mean_omega_residual", r.mean_omega_residual},
               {"max_imOmega_residual", r.max_imomega_residual},
               {"mean_imOmega_residual", r.mean_imomega_residual},
               {"normalization", r.normalization},
               {"sample_count", r.sample_count},
               {"skipped", r.skipped}};
}

inline ojson to_json(const ConformalityReport& r) {
  return ojson{{"max_sphere_residual", r.max_sphere_residual},
               {"max_orthogonality", r.max_orthogonality},
               {"max_norm_difference", r.max_norm_difference},
               {"max_closed_norm_residual", r.max_closed_norm_residual},
               {"max_plus_u_residual", r.max_plus_u_residual}};
}

/// Versioned evolution-data document: n, m, kind, quadric (S, b, c0), level c,
/// chi as the coefficient vectors (colex order) of chi_linear[k] and chi_const.
inline ojson to_json(const EvolutionData& d) {
  ojson j{{"format", "evodata-1"}, {"n", d.n}, {"m", d.m}, {"kind", to_string(d.kind)}, {"label", d.label}};
  if (d.quadric) {
    j["S"] = detail::mat_json(d.quadric->S);
    j["b"] = std::vector<double>(d.quadric->b.data(), d.quadric->b.data() + d.quadric->b.size());
    j["c0"] = d.quadric->c0;
  }
  j["c"] = d.level;
  ojson chi = ojson::array();
  for (const auto& mv : d.chi_linear) chi.push_back(mv.coeffs());
  j["chi_linear"] = chi;
  j["chi_const"] = d.chi_const.coeffs();
  return j;
}

/// Rebuild quadric evolution data from its document; stored chi coefficients
/// must agree with those recomputed from (S, b).
inline EvolutionData evodata_from_json(const ojson& j) {
  try {
    detail::require(j.value("format", "") == "evodata-1", "evodata json: format must be evodata-1");
    const int n = j.at("n").get<int>();
    detail::require(n >= 2 && n <= kMaxDim, "evodata json: n must lie in [2,16]");
    detail::require(j.contains("S") && j.contains("b"), "evodata json: quadric fields S and b are required");
    QuadricSpec s;
    s.n = n;
    s.S = detail::mat_from_json(j.at("S"), n, n, "evodata json S");
    const auto b = j.at("b").get<std::vector<double>>();
    detail::require(static_cast<int>(b.size()) == n, "evodata json: b must have length n");
    s.b = Eigen::Map<const Vec>(b.data(), n);
    s.c0 = j.value("c0", 0.0);
    EvolutionData d = quadric_data(s, j.at("c").get<double>());
    if (j.contains("label")) d.label = j["label"].get<std::string>();
    if (j.contains("chi_linear")) {
      const auto& cl = j["chi_linear"];
      detail::require(cl.size() == static_cast<std::size_t>(n), "evodata json: chi_linear must have n entries");
      double diff = 0;
      for (int k = 0; k < n; ++k) {
        const auto v = cl[static_cast<std::size_t>(k)].get<std::vector<double>>();
        const auto& ref = d.chi_linear[static_cast<std::size_t>(k)].coeffs();
        detail::require(v.size() == ref.size(), "evodata json: chi_linear entry has wrong length");
        for (std::size_t i = 0; i < v.size(); ++i) diff = std::max(diff, std::abs(v[i] - ref[i]));
      }
      detail::require(diff <= 1e-12 * std::max(1.0, s.S.norm()), "evodata json: chi does not match the quadric");
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw invalid_input(std::string("evodata json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV.

inline std::string csv_num(double x) { return detail::num(x); }

/// Trajectory of the general engine: t, Re/Im of A (column-major) and t0, membership residual.
inline std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream o;
  if (tr.maps.empty()) return "t\n";
  const auto m = tr.maps[0].A.rows(), n = tr.maps[0].A.cols();
  o << "t";
  for (Eigen::Index k = 0; k < n; ++k)
    for (Eigen::Index j = 0; j < m; ++j) o << ",re_A" << j + 1 << '_' << k + 1 << ",im_A" << j + 1 << '_' << k + 1;
  for (Eigen::Index j = 0; j < m; ++j) o << ",re_t" << j + 1 << ",im_t" << j + 1;
  o << ",membership_residual\n";
  for (std::size_t i = 0; i < tr.maps.size(); ++i) {
    const EvolMap& phi = tr.maps[i];
    o << csv_num(tr.times[i]);
    for (Eigen::Index k = 0; k < n; ++k)
      for (Eigen::Index j = 0; j < m; ++j) o << ',' << csv_num(phi.A(j, k).real()) << ',' << csv_num(phi.A(j, k).imag());
    for (Eigen::Index j = 0; j < m; ++j) o << ',' << csv_num(phi.t0[j].real()) << ',' << csv_num(phi.t0[j].imag());
    o << ',' << csv_num(tr.omega_residuals[i]) << '\n';
  }
  return o.str();
}

/// w-trajectory: t, Re/Im w_j, lifted theta_j, and the conserved quantity Im(w_1...w_m).
inline std::string w_run_csv(const WRun& run) {
  std::ostringstream o;
  if (run.samples.empty()) return "t\n";
  const auto m = run.samples[0].w.size();
  o << "t";
  for (Eigen::Index j = 1; j <= m; ++j) o << ",re_w" << j << ",im_w" << j;
  for (Eigen::Index j = 1; j <= m; ++j) o << ",theta" << j;
  o << ",A\n";
  for (const WSample& s : run.samples) {
    o << csv_num(s.t);
    for (Eigen::Index j = 0; j < m; ++j) o << ',' << csv_num(s.w[j].real()) << ',' << csv_num(s.w[j].imag());
    for (double th : s.thetas) o << ',' << csv_num(th);
    o << ',' << csv_num(s.w.prod().imag()) << '\n';
  }
  return o.str();
}

/// Affine trajectory with the complex beta column and its closed-form deviation.
inline std::string affine_run_csv(const AffineRun& run, const AffineParams& p) {
  std::ostringstream o;
  if (run.samples.empty()) return "t\n";
  const auto k = run.samples[0].w.size();
  o << "t";
  for (Eigen::Index j = 1; j <= k; ++j) o << ",re_w" << j << ",im_w" << j;
  o << ",re_beta,im_beta,beta_closed_residual\n";
  const double u0 = reduce(run.samples[0].w, p.letters()).state.u;
  const cplx b0 = run.samples[0].beta;
  for (const AffineSample& s : run.samples) {
    o << csv_num(s.t);
    for (Eigen::Index j = 0; j < k; ++j) o << ',' << csv_num(s.w[j].real()) << ',' << csv_num(s.w[j].imag());
    const double u = reduce(s.w, p.letters()).state.u;
    const cplx bc = beta_closed(u, u0, s.t - run.samples[0].t, p.A, b0);
    o << ',' << csv_num(s.beta.real()) << ',' << csv_num(s.beta.imag()) << ',' << csv_num(std::abs(s.beta - bc)) << '\n';
  }
  return o.str();
}

struct ScanRow {
  std::vector<double> alphas;
  double A = 0;
  BetaResult result;
};

inline std::string scan_csv(const std::vector<ScanRow>& rows) {
  std::ostringstream o;
  if (rows.empty()) return "A\n";
  const std::size_t m = rows[0].alphas.size();
  for (std::size_t j = 1; j <= m; ++j) o << "alpha" << j << ',';
  o << "A";
  for (std::size_t j = 1; j <= m; ++j) o << ",beta" << j;
  o << ",T,quadrature_error,beta_sum\n";
  for (const ScanRow& r : rows) {
    for (double a : r.alphas) o << csv_num(a) << ',';
    o << csv_num(r.A);
    for (double b : r.result.betas) o << ',' << csv_num(b);
    o << ',' << csv_num(r.result.period_T) << ',' << csv_num(r.result.quadrature_error) << ','
      << csv_num(r.result.beta_sum) << '\n';
  }
  return o.str();
}

/// Cross-section grid: s, t, Re/Im Phi components.
inline std::string conformal_csv(const ConformalGrid& g) {
  std::ostringstream o;
  o << "s,t,re_phi1,im_phi1,re_phi2,im_phi2,re_phi3,im_phi3\n";
  for (std::size_t i = 0; i < g.s.size(); ++i)
    for (std::size_t k = 0; k < g.t.size(); ++k) {
      const auto& z = g.phi[g.index(i, k)];
      o << csv_num(g.s[i]) << ',' << csv_num(g.t[k]);
      for (const cplx& c : z) o << ',' << csv_num(c.real()) << ',' << csv_num(c.imag());
      o << '\n';
    }
  return o.str();
}

}  // namespace slevolve
