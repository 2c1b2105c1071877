#include <gtest/gtest.h>

#include <slevolve/slevolve.hpp>

#include <random>

#include "oracles.hpp"

using namespace slevolve;

namespace {

constexpr double pi = oracle::pi;

CVec cvec(std::initializer_list<cplx> xs) {
  CVec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (cplx x : xs) v[i++] = x;
  return v;
}

CentredParams random_case_d(std::mt19937& rng, int m) {
  const int a = std::uniform_int_distribution<int>(1, m - 1)(rng);
  CentredParams p{m, a, oracle::random_normalized_alphas(rng, m, a), 0.0, 0.0};
  p.A = std::uniform_real_distribution<double>(0.1, 0.9)(rng) * p.A_max();
  return p;
}

CVec start_on_u0(const CentredParams& p) {
  CVec w(p.m);
  for (int j = 0; j < p.m; ++j) w[j] = std::sqrt(p.alphas[static_cast<std::size_t>(j)]);
  w[0] *= std::polar(1.0, std::asin(p.A / p.A_max()));
  return w;
}

CVec rk4_w(const CVec& w0, int a, double t, int steps) {
  auto f = [a](double, const CVec& x) { return oracle::rhs_w(x, a); };
  return oracle::rk4(f, w0, 0.0, t, steps);
}

}  // namespace

// ---------------------------------------------------------------------------
// centred

TEST(Centred, RhsExamples) {
  EXPECT_EQ(rhs_w(cvec({1, 1, 1}), 1), cvec({1, -1, -1}));
  EXPECT_EQ(rhs_w(cvec({cplx(0, 1), 1}), 1), cvec({1, cplx(0, 1)}));
  std::mt19937 rng(1);
  for (int i = 0; i < 100; ++i) {
    const int m = 2 + i % 5, a = 1 + i % m;
    const CVec w = oracle::random_cvec(rng, m);
    EXPECT_LE((rhs_w(w, a) - oracle::rhs_w(w, a)).norm(), 1e-14);
    const CMat dA = rhs_general(EvolMap::linear(w.asDiagonal().toDenseMatrix()), centred_quadric_data(m, a, 1.0)).dA;
    EXPECT_LE((dA.diagonal() - rhs_w(w, a)).norm(), 1e-12);
  }
}

TEST(Centred, NormalizeLambda) {
  const NormalizeResult r = normalize_lambda({1, 1, 1}, 1);
  EXPECT_NEAR(r.lambda, 1.0 / 3, 1e-14);
  EXPECT_NEAR(r.alphas[0], 2.0 / 3, 1e-14);
  EXPECT_NEAR(r.alphas[1], 4.0 / 3, 1e-14);
  EXPECT_NEAR(r.alphas[2], 4.0 / 3, 1e-14);
  EXPECT_EQ(normalize_lambda({1, 2, 2}, 1).lambda, 0.0);
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> U(0.05, 5);
  for (int i = 0; i < 100; ++i) {
    const int m = 2 + i % 5, a = 1 + i % (m - 1);
    std::vector<double> sq(static_cast<std::size_t>(m));
    for (double& x : sq) x = U(rng);
    const NormalizeResult n = normalize_lambda(sq, a);
    double s = 0, tot = 0;
    for (int j = 0; j < m; ++j) {
      const double x = n.alphas[static_cast<std::size_t>(j)];
      ASSERT_GT(x, 0);
      s += (j < a ? 1 : -1) / x;
      tot += 1 / x;
      EXPECT_NEAR(x, sq[static_cast<std::size_t>(j)] + (j < a ? -n.lambda : n.lambda), 1e-12 * (1 + x));
    }
    EXPECT_LE(std::abs(s), 1e-12 * tot);
  }
}

TEST(Centred, ReduceExamples) {
  CentredParams p{3, 1, {1, 1, 1}, 0, 0};
  const Reduction r = reduce(cvec({std::polar(1.0, pi / 6), std::polar(1.0, pi / 6), std::polar(1.0, pi / 6)}), p);
  EXPECT_NEAR(r.A, 1.0, 1e-15);
  EXPECT_NEAR(r.state.u, 0.0, 1e-15);
  EXPECT_EQ(reduce(cvec({1, 1, 1}), p).A, 0.0);
  // expand inverts reduce
  std::mt19937 rng(3);
  const CentredParams q = random_case_d(rng, 4);
  ReducedState st{0.05, {0.3, -1.0, 2.0, 0.4}, 0};
  const Reduction back = reduce(expand(st, q), q);
  EXPECT_NEAR(back.state.u, st.u, 1e-14);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(back.state.thetas[static_cast<std::size_t>(j)], st.thetas[static_cast<std::size_t>(j)], 1e-14);
}

TEST(Centred, ReducedRhsSpecialCases) {
  CentredParams p{3, 1, {1, 2, 2}, 2.0, 0.0};
  const ReducedDerivative c = rhs_reduced(ReducedState{0, {pi / 2, 0, 0}, 0}, p);
  EXPECT_NEAR(c.du, 0, 1e-15);
  EXPECT_NEAR(c.dthetas[0], -2.0 / 1, 1e-15);
  EXPECT_NEAR(c.dthetas[1], 2.0 / 2, 1e-15);
  EXPECT_NEAR(c.dthetas[2], 2.0 / 2, 1e-15);
  const ReducedDerivative a = rhs_reduced(ReducedState{0.3, {0.2, -0.5, 0.3}, 0}, p);
  for (double d : a.dthetas) EXPECT_NEAR(d, 0, 1e-15);
}

TEST(Centred, ReducedRhsMatchesChainRule) {
  // du/dt = 2 Re(conj(w_1) w_1'), dtheta_j/dt = Im(w_j'/w_j) with w' from the oracle
  std::mt19937 rng(4);
  for (int i = 0; i < 40; ++i) {
    const CentredParams p = random_case_d(rng, 3 + i % 3);
    const CVec w = rk4_w(centred_start(p), p.a, 0.37, 20000);
    const CVec dw = oracle::rhs_w(w, p.a);
    const Reduction r0 = reduce(w, p);
    const ReducedDerivative d = rhs_reduced(r0.state, p);
    const double scale = 1 + dw.norm() / w.cwiseAbs().minCoeff();
    EXPECT_NEAR(2 * (std::conj(w[0]) * dw[0]).real(), d.du, 1e-12 * scale);
    for (int j = 0; j < p.m; ++j)
      EXPECT_NEAR((dw[j] / w[j]).imag(), d.dthetas[static_cast<std::size_t>(j)], 1e-12 * scale);
  }
}

TEST(Centred, TurningPoints) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  const TurningPoints tp = turning_points(p);
  EXPECT_NEAR(Q_of(p, tp.gamma), 1.0, 1e-12);
  EXPECT_NEAR(Q_of(p, tp.delta), 1.0, 1e-12);
  EXPECT_GT(tp.gamma, -1);
  EXPECT_LT(tp.gamma, 0);
  EXPECT_GT(tp.delta, 0);
  EXPECT_LT(tp.delta, 2);
  // dense scan oracle: Q - A^2 changes sign only at gamma and delta inside (-1, 2)
  int changes = 0;
  double prev = Q_of(p, -1 + 1e-9) - 1;
  for (int i = 1; i <= 30000; ++i) {
    const double u = -1 + 3.0 * i / 30000;
    const double v = Q_of(p, std::min(u, 2 - 1e-9)) - 1;
    if ((prev < 0) != (v < 0)) {
      ++changes;
      EXPECT_TRUE(std::abs(u - tp.gamma) < 2e-4 || std::abs(u - tp.delta) < 2e-4);
    }
    prev = v;
  }
  EXPECT_EQ(changes, 2);
  p.A = (1 - 1e-10) * p.A_max();
  const TurningPoints near = turning_points(p);
  EXPECT_LT(std::max(-near.gamma, near.delta), 1e-4);
  const CentredParams sym{4, 2, {1.5, 1.5, 1.5, 1.5}, 1.0, 0.0};
  const TurningPoints s = turning_points(sym);
  EXPECT_NEAR(s.gamma, -s.delta, 1e-12);
}

TEST(Centred, QuadratureRoundTripAgainstOde) {
  std::mt19937 rng(5);
  for (int i = 0; i < 8; ++i) {
    const CentredParams p = random_case_d(rng, 3 + i % 3);
    const TurningPoints tp = turning_points(p);
    const double u1 = 0.6 * tp.delta;
    const QuadratureSolution q = quadrature_solution(p, 0.0, u1);
    const CVec w0 = start_on_u0(p);
    const CVec w1 = rk4_w(w0, p.a, q.t, 20000);
    const Reduction r = reduce(w1, p);
    EXPECT_NEAR(r.state.u, u1, 1e-8);
    for (int j = 0; j < p.m; ++j)
      EXPECT_NEAR(std::remainder(std::arg(w1[j]) - std::arg(w0[j]) - q.dthetas[static_cast<std::size_t>(j)], 2 * pi),
                  0.0, 1e-8);
    const oracle::Monodromy mono = oracle::monodromy(w0, p.a);
    EXPECT_NEAR(quadrature_solution(p, tp.gamma, tp.delta).t, mono.T / 2, 1e-7);
  }
}

TEST(Centred, QuadratureVanishesAsAToZero) {
  CentredParams p{3, 1, {1, 2, 2}, 0.0, 0.0};
  p.A = 1e-9 * p.A_max();
  const TurningPoints tp = turning_points(p);
  const QuadratureSolution q = quadrature_solution(p, 0.5 * tp.gamma, 0.5 * tp.delta);
  for (double d : q.dthetas) EXPECT_LE(std::abs(d), 1e-7);
}

TEST(Centred, BetasExamplesAndLimits) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  const BetaResult r = betas(p);
  EXPECT_NEAR(r.betas[0], -3.492622455803962, 1e-10);
  EXPECT_NEAR(r.betas[1], 1.7463112279019808, 1e-10);
  EXPECT_NEAR(r.betas[2], 1.7463112279019808, 1e-10);
  EXPECT_NEAR(r.period_T, 2.177551426237568, 1e-10);
  EXPECT_LE(std::abs(r.beta_sum), 1e-10);
  const BetaLimits lim = beta_limits({1, 2, 2}, 1);
  EXPECT_EQ(lim.k, 1);
  EXPECT_EQ(lim.l, 2);
  double s2 = 0;
  for (double b : lim.at_max) s2 += b * b;
  EXPECT_NEAR(s2, 2 * pi * pi, 1e-10);
  EXPECT_NEAR(lim.at_zero[0], -pi, 1e-15);
  EXPECT_NEAR(lim.at_zero[1], pi / 2, 1e-15);
}

TEST(Centred, BetasAgreeWithLibraryOdeMeasurement) {
  std::mt19937 rng(6);
  for (int i = 0; i < 6; ++i) {
    const CentredParams p = random_case_d(rng, 3 + i % 3);
    const BetaResult q = betas(p);
    const OdeBetaResult o = betas_by_ode(p);
    for (int j = 0; j < p.m; ++j) EXPECT_NEAR(q.betas[static_cast<std::size_t>(j)], o.betas[static_cast<std::size_t>(j)], 1e-8);
    EXPECT_NEAR(q.period_T, o.period_T, 1e-8);
    EXPECT_LE(o.conservation_drift, 1e-9);
  }
}

TEST(Centred, BetaPropertiesOnRandomInputs) {
  std::mt19937 rng(7);
  for (int i = 0; i < 40; ++i) {
    const CentredParams p = random_case_d(rng, 2 + i % 5);
    const BetaResult r = betas(p);
    double s = 0;
    for (int j = 0; j < p.m; ++j) {
      const double b = r.betas[static_cast<std::size_t>(j)];
      s += b;
      EXPECT_EQ(b < 0, j < p.a);  // sign pattern follows the signature
    }
    EXPECT_LE(std::abs(s), 1e-10);
    EXPECT_GT(r.period_T, 0);
  }
}

TEST(Centred, CaseClassification) {
  CentredParams p{3, 1, {1, 2, 2}, 0.0, 1.0};
  EXPECT_EQ(classify_case(p), CentredCase::a);
  p.A = 2.0;
  EXPECT_EQ(classify_case(p), CentredCase::c);
  p.A = 1.0;
  EXPECT_EQ(classify_case(p), CentredCase::d);
  CentredParams b{3, 3, {1, 1, 1}, 0.5, 1.0};
  EXPECT_EQ(classify_case(b), CentredCase::b);
  // case (c) closed form follows the w-system
  p.A = 2.0;
  const std::vector<double> th0{pi / 2, 0, 0};
  ReducedState s{0, case_c_thetas(p, th0, 1.3), 0};
  const CVec ref = rk4_w(expand(ReducedState{0, th0, 0}, p), 1, 1.3, 4000);
  EXPECT_LE((expand(s, p) - ref).norm(), 1e-10);
}

TEST(Centred, InvalidInputsRejected) {
  EXPECT_THROW(betas(CentredParams{3, 1, {1, 1, 1}, 0.5, 0}), invalid_input);  // not normalized
  EXPECT_THROW(betas(CentredParams{3, 1, {1, 2, 2}, 2.5, 0}), invalid_input);  // beyond A_max
  EXPECT_THROW(betas(CentredParams{3, 3, {1, 2, 2}, 1.0, 0}), invalid_input);  // a = m
  EXPECT_THROW(normalize_lambda({1, -1, 1}, 1), invalid_input);
}

TEST(Centred, TopologyLabels) {
  PeriodicSolution s;
  s.params = CentredParams{3, 1, {1, 2, 2}, 1.66, 0};
  s.int_angles = {-8, 4, 4};
  s.denom = 7;
  EXPECT_EQ(classify_topology(s, 0.0), "two T²-cones, N_− = −N_+");
  s.int_angles = {-7, 3, 4};
  EXPECT_EQ(classify_topology(s, -1.0), "Klein-bottle line bundle, one end T²×(0,∞)");
  s.params = CentredParams{4, 2, {1, 1, 1, 1}, 0.5, 0};
  s.int_angles = {-1, -1, 1, 1};
  EXPECT_EQ(classify_topology(s, 1.0), "S^1×R^2×S^1 (possibly /Z₂)");
  EXPECT_EQ(parity_vector(s), (std::vector<int>{1, 1, 1, 1}));
}

TEST(Centred, PeriodicSearch) {
  SearchOptions opt;
  opt.b_max = 8;
  const auto sols = periodic_search(sym_family(), opt);
  ASSERT_FALSE(sols.empty());
  bool found = false;
  for (const auto& s : sols) {
    EXPECT_LE(s.denom, 8);
    EXPECT_LE(s.residual, 1e-8);
    EXPECT_TRUE(s.verified);
    if (s.denom == 7 && s.int_angles == std::vector<std::int64_t>{-8, 4, 4}) found = true;
  }
  EXPECT_TRUE(found);
  SearchOptions o2;
  o2.b_max = 2;
  o2.A_grid = 8;
  const auto m2 = periodic_search(fixed_family(2, 1, {1.3, 1.3}), o2);
  ASSERT_FALSE(m2.empty());
  for (const auto& s : m2) {
    EXPECT_EQ(s.int_angles, (std::vector<std::int64_t>{-1, 1}));
    EXPECT_EQ(s.denom, 1);
  }
}

// ---------------------------------------------------------------------------
// affine

TEST(Affine, RhsExamples) {
  const AffineDerivative d2 = rhs_affine(AffineState{cvec({1, 1}), 0.0, 0}, 2);
  EXPECT_EQ(d2.dw, cvec({1, 1}));
  EXPECT_EQ(d2.dbeta, cplx(1, 0));
  const AffineDerivative d1 = rhs_affine(AffineState{cvec({1, 1}), 0.0, 0}, 1);
  EXPECT_EQ(d1.dw, cvec({1, -1}));
  EXPECT_EQ(d1.dbeta, cplx(1, 0));
}

TEST(Affine, MatchesGeneralEngineOnParaboloid) {
  std::mt19937 rng(8);
  for (int i = 0; i < 50; ++i) {
    const int m = 3 + i % 3, a = 1 + i % (m - 1);
    const CVec w = oracle::random_cvec(rng, m - 1);
    const cplx beta = oracle::random_cvec(rng, 1)[0];
    EvolMap phi{CMat::Zero(m, m), CVec::Zero(m)};
    phi.A.diagonal().head(m - 1) = w;
    phi.A(m - 1, m - 1) = 1.0;
    phi.t0[m - 1] = beta;
    const EvolMapDerivative g = rhs_general(phi, paraboloid_data(m, a));
    const AffineDerivative d = rhs_affine(AffineState{w, beta, 0}, a);
    EXPECT_LE((g.dA.diagonal().head(m - 1) - d.dw).norm(), 1e-12);
    EXPECT_LE(std::abs(g.dt0[m - 1] - d.dbeta), 1e-12);
  }
}

TEST(Affine, ClosedBetaAlongTrajectory) {
  AffineParams p{4, 2, {1.5, 3, 1}, 0.0, cplx(0.1, 0.4)};
  p.A = 0.4 * p.A_max();
  EXPECT_EQ(beta_closed(0.3, 0.3, 0.0, p.A, p.Cconst), p.Cconst);
  const AffineState s0 = affine_start(p);
  const auto times = linspace(0, 8, 161);
  const AffineRun run = integrate_affine(s0, p.a, times);
  ASSERT_EQ(run.samples.size(), times.size());
  const CentredParams L = p.letters();
  double prev = std::numeric_limits<double>::infinity();
  for (const AffineSample& s : run.samples) {
    EXPECT_LE(std::abs(s.beta - beta_closed(reduce(s.w, L).state.u, 0.0, s.t, p.A, s0.beta)), 1e-8);
    if (s.t > 0) {
      EXPECT_LT(s.beta.imag(), prev);
    }
    prev = s.beta.imag();
  }
}

TEST(Affine, CaseClassificationAndEscape) {
  EXPECT_EQ(classify_affine_case(AffineParams{4, 2, {1.5, 3, 1}, 0.0, 0.0}).label, 'a');
  EXPECT_EQ(classify_affine_case(AffineParams{4, 2, {1.5, 3, 1}, 0.5, 0.0}).label, 'd');
  EXPECT_EQ(classify_affine_case(AffineParams{4, 2, {1.5, 3, 1}, std::sqrt(4.5), 0.0}).label, 'c');
  EXPECT_EQ(classify_affine_case(AffineParams{4, 3, {1, 1, 1}, 0.5, 0.0}).label, 'b');
  EXPECT_EQ(classify_affine_case(AffineParams{3, 2, {1, 1}, 0.5, 0.0}).label, 'b');
  // a = m-1: bounded interval for m = 4, all of R for m = 3
  const AffineRun r4 = integrate_affine(AffineState{cvec({cplx(1, 0.2), cplx(1, 0.3), cplx(1, 0.1)}), 0.0, 0}, 3,
                                        linspace(0.25, 20, 80));
  EXPECT_TRUE(r4.stats.escaped);
  const AffineRun r3 = integrate_affine(AffineState{cvec({cplx(1, 0.2), cplx(0.5, 0.3)}), 0.0, 0}, 2, linspace(0.25, 3, 12));
  EXPECT_FALSE(r3.stats.escaped);
  EXPECT_EQ(r3.samples.size(), 12u);
}

TEST(Affine, QuadratureAgainstOde) {
  AffineParams p{4, 2, {1.5, 3, 1}, 0.7, 0.0};
  const CentredParams L = p.letters();
  const TurningPoints tp = turning_points(L);
  const QuadratureSolution q = quadrature_affine(p, 0.0, 0.5 * tp.delta);
  const AffineState s0 = affine_start(p);
  const AffineRun run = integrate_affine(s0, p.a, {q.t});
  ASSERT_EQ(run.samples.size(), 1u);
  EXPECT_NEAR(reduce(run.samples[0].w, L).state.u, 0.5 * tp.delta, 1e-8);
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(run.samples[0].thetas[static_cast<std::size_t>(j)] - std::arg(s0.w[j]), q.dthetas[static_cast<std::size_t>(j)], 1e-8);
  p.A = 1e-10;
  const QuadratureSolution z = quadrature_affine(p, 0.5 * turning_points(p.letters()).gamma, 0.0);
  for (double d : z.dthetas) EXPECT_LE(std::abs(d), 1e-7);
}

TEST(Affine, ExplicitThreeFoldSolutionsMatchIntegration) {
  for (auto v : {Affine3Variant::a2, Affine3Variant::a1}) {
    const cplx w1(0.7, 0.2), w2(-0.3, 0.9), b0(0.25, -0.5);
    const Affine3Curve c = affine3_from_initial(v, w1, w2, b0);
    const int a = v == Affine3Variant::a2 ? 2 : 1;
    const auto times = linspace(0.1, 1.5, 15);
    const AffineRun run = integrate_affine(AffineState{cvec({w1, w2}), b0, 0}, a, times);
    ASSERT_EQ(run.samples.size(), times.size());
    for (const AffineSample& s : run.samples) {
      const auto W = c.w(s.t);
      const double scale = 1 + std::abs(c.beta(s.t));
      EXPECT_LE(std::abs(s.w[0] - W[0]) + std::abs(s.w[1] - W[1]), 1e-8 * scale);
      EXPECT_LE(std::abs(s.beta - c.beta(s.t)), 1e-8 * scale);
    }
    EXPECT_NEAR(c.A(), (w1 * w2).imag(), 1e-15);
  }
}

// ---------------------------------------------------------------------------
// threefold

TEST(Threefold, RhsMatchesCentred) {
  const auto r = rhs_w3({1, 1, 1});
  EXPECT_EQ(r[0], cplx(1));
  EXPECT_EQ(r[1], cplx(-1));
  EXPECT_EQ(r[2], cplx(-1));
  std::mt19937 rng(9);
  for (int i = 0; i < 50; ++i) {
    const CVec w = oracle::random_cvec(rng, 3);
    const auto d = rhs_w3({w[0], w[1], w[2]});
    const CVec ref = rhs_w(w, 1);
    for (int j = 0; j < 3; ++j) EXPECT_EQ(d[static_cast<std::size_t>(j)], ref[j]);
  }
}

TEST(Threefold, LongIntegrationDoesNotEscape) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0};
  const double T = betas(p).period_T;
  const WRun run = integrate_w(centred_start(p), 1, linspace(0, 100 * T, 101));
  EXPECT_FALSE(run.stats.escaped);
  EXPECT_EQ(run.samples.size(), 101u);
  EXPECT_LE(run.max_step_conservation_drift, 1e-8);
}

TEST(Threefold, CrossSectionConstraintsAndOde) {
  for (const std::array<double, 3>& al :
       {std::array<double, 3>{2.0 / 3, 4.0 / 3, 4.0 / 3}, {1.2, 2.0, 3.0}, {1.2, 3.0, 2.0}}) {
    const CrossSection cs = cross_section(al);
    if (al[1] == al[2]) {
      EXPECT_EQ(cs.nu, 0.0);
    }
    const double h = 1e-3;
    for (double s = -3; s <= 3; s += 0.05) {
      const auto c = cs.constraint_residuals(s);
      EXPECT_LE(std::max(c[0], c[1]), 1e-12);
      const auto d = cs.dx(s);
      for (double r : cs.ode_residuals(s, d)) EXPECT_LE(r, 1e-12);
      const auto p2 = cs.x(s + 2 * h), p1 = cs.x(s + h), m1 = cs.x(s - h), m2 = cs.x(s - 2 * h);
      for (int j = 0; j < 3; ++j) {
        const auto J = static_cast<std::size_t>(j);
        EXPECT_NEAR((m2[J] - 8 * m1[J] + 8 * p1[J] - p2[J]) / (12 * h), d[J], 1e-9);
      }
      if (!cs.swapped) {
        const double sn = jacobi(cs.mu * s, cs.nu).sn;
        EXPECT_NEAR(cs.v(s), sn * sn / (al[0] + al[2]), 1e-14);
      }
    }
  }
  EXPECT_THROW(cross_section({1, 1, 1}), invalid_input);
}

TEST(Threefold, ConformalMap) {
  const std::array<double, 3> al{1.2, 2.0, 3.0};
  const CrossSection cs = cross_section(al);
  const auto s = linspace(0, cs.period(), 40), t = linspace(0, 4, 40);
  const ConformalGrid g = conformal_map(al, 1.1, s, t);
  const ConformalityReport r = conformality_report(g);
  EXPECT_LE(r.max_sphere_residual, 1e-10);
  EXPECT_LE(r.max_orthogonality, 1e-10);
  EXPECT_LE(r.max_norm_difference, 1e-9);
  EXPECT_LE(r.max_closed_norm_residual, 1e-9);
  EXPECT_GT(r.max_plus_u_residual, 1e-3);
  const ConformalityReport fd = conformality_report_fd(al, 1.1, linspace(0.1, 2, 5), linspace(0.5, 3, 5));
  EXPECT_LE(fd.max_orthogonality, 1e-6);
  EXPECT_LE(fd.max_closed_norm_residual, 1e-6);
}

TEST(Threefold, Affine3SpecialCases) {
  // a1 with D = 0: w1 = C e^{it}, w2 = -i conj(C) e^{-it}
  const cplx C(0.6, -0.3), I(0, 1);
  const Affine3Curve c = affine3_closed(Affine3Variant::a1, C, 0.0);
  for (double t = -2; t <= 2; t += 0.25) {
    const auto W = c.w(t);
    EXPECT_LE(std::abs(W[0] - C * std::polar(1.0, t)), 1e-15);
    EXPECT_LE(std::abs(W[1] + I * std::conj(C) * std::polar(1.0, -t)), 1e-15);
    EXPECT_LE(c.ode_residual(t), 1e-14);
  }
  // planar cases: Im(C conj D) = 0 for a2, |C| = |D| for a1
  const MeshResolution res{8, 8, 1.0, 1, 1};
  const Mesh flat2 = mesh_affine3(affine3_closed(Affine3Variant::a2, {0.5, 0.2}, {1.0, 0.4}), -1, 1, res);
  EXPECT_LE(plane_distance(flat2), 1e-10);
  EXPECT_LE(flat2.report().max_residual(), 1e-10);
  const Mesh flat1 = mesh_affine3(affine3_closed(Affine3Variant::a1, std::polar(0.8, 0.3), std::polar(0.8, -1.1)), 0, 3, res);
  EXPECT_LE(plane_distance(flat1), 1e-10);
  EXPECT_LE(flat1.report().max_residual(), 1e-10);
  const Mesh curved = mesh_affine3(affine3_closed(Affine3Variant::a2, {0.5, 0.2}, {-0.3, 0.9}), -1, 1, res);
  EXPECT_GT(plane_distance(curved), 1e-3);
}
