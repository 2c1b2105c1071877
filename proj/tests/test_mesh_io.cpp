#include <gtest/gtest.h>

#include <slevolve/io.hpp>
#include <slevolve/slevolve.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace slevolve;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

double max_vertex_gap(const Mesh& a, const Mesh& b, const CVec& phase = CVec()) {
  EXPECT_EQ(a.size(), b.size());
  double d = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const CVec za = phase.size() ? CVec(phase.cwiseProduct(a.vertices[i])) : a.vertices[i];
    d = std::max(d, (za - b.vertices[i]).norm());
  }
  return d;
}

struct CliResult {
  int code;
  std::string out;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("slevolve_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const std::string cmd = "SLEVOLVE_OUTDIR='" + dir_.string() + "' '" SLEVOLVE_CLI "' " + args + " > '" +
                            out.string() + "' 2> '" + (dir_ / "stderr.txt").string() + "'";
    const int status = std::system(cmd.c_str());
    std::ifstream f(out);
    std::stringstream ss;
    ss << f.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
  }

  fs::path dir_;
};

}  // namespace

// ---------------------------------------------------------------------------
// residuals

TEST(Residuals, PlanesAndRotatedPlanes) {
  for (int m = 2; m <= 5; ++m) {
    std::vector<CVec> real(static_cast<std::size_t>(m)), rot(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      real[static_cast<std::size_t>(j)] = CVec::Unit(m, j);
      const double th = j == 0 ? pi / 4 - 0.3 * (m - 1) : 0.3;  // angles sum to pi/4
      rot[static_cast<std::size_t>(j)] = std::polar(1.0, th) * CVec::Unit(m, j);
    }
    const SLSample a = sl_residual_frame(real);
    EXPECT_TRUE(a.ok);
    EXPECT_LE(std::max(a.omega, a.imomega), 1e-12);
    const SLSample b = sl_residual_frame(rot);
    EXPECT_LE(b.omega, 1e-12);
    EXPECT_NEAR(b.imomega, std::sin(pi / 4), 1e-12);
  }
  // scaling and shearing the frame does not change the normalized residual
  std::vector<CVec> sheared{CVec::Unit(3, 0) * 5.0, CVec::Unit(3, 0) + CVec::Unit(3, 1) * 0.1, CVec::Unit(3, 2)};
  EXPECT_LE(sl_residual_frame(sheared).imomega, 1e-12);
  // a complex line is maximally non-Lagrangian
  std::vector<CVec> cl{CVec::Unit(2, 0), cplx(0, 1) * CVec::Unit(2, 0)};
  EXPECT_NEAR(sl_residual_frame(cl).omega, 1.0, 1e-12);
}

TEST(Meshes, CaseAIsPlanar) {
  const CentredParams p{3, 1, {1, 2, 2}, 0.0, 1.0};
  const Mesh mesh = mesh_centred(p, 1.0, 0, 2, MeshResolution{8, 6, 1.0, 1, 1});
  EXPECT_LE(plane_distance(mesh), 1e-10);
  EXPECT_LE(mesh.report().max_residual(), 1e-10);
}

TEST(Meshes, VerticesLieOnEvolvedQuadric) {
  // a vertex at time t is w(t) x with x real on the quadric; for c = 0 that is a cone
  const CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  for (double c : {0.0, 1.0, -1.0}) {
    const Mesh mesh = mesh_centred(p, c, 0, 1, MeshResolution{5, 6, 1.0, 1, 1});
    EXPECT_LE(mesh.report().max_residual(), 1e-9);
    for (std::size_t i = 0; i < mesh.size(); ++i) {
      const double t = mesh.params[i][0];
      const CVec w = integrate_w(centred_start(p), p.a, {0.0, t}).samples.back().w;
      double q = 0;
      for (int j = 0; j < 3; ++j) {
        const cplx x = mesh.vertices[i][j] / w[j];
        EXPECT_LE(std::abs(x.imag()), 1e-9);
        q += p.sign(j) * x.real() * x.real();
      }
      EXPECT_NEAR(q, c, 1e-9);
    }
  }
}

TEST(Meshes, PeriodicSolutionCloses) {
  // beta = pi (-8, 4, 4) / 7: after 7 periods every phase returns
  const CentredParams p{3, 1, {1, 2, 2}, 1.661493683732634, 0.0};
  const double T = betas(p).period_T;
  const MeshResolution res{3, 5, 1.0, 1, 1};
  const Mesh m0 = mesh_centred(p, 1.0, 0, 0.2, res);
  const Mesh m7 = mesh_centred(p, 1.0, 7 * T, 7 * T + 0.2, res);
  EXPECT_LE(max_vertex_gap(m0, m7), 1e-7);
  const Mesh m1 = mesh_centred(p, 1.0, T, T + 0.2, res);
  EXPECT_GT(max_vertex_gap(m0, m1), 1e-2);
}

TEST(Meshes, CaseDShiftsByPhasesEachPeriod) {
  CentredParams p{4, 2, {1.2, 3, 2, 1.5}, 0, 0};
  p.A = 0.6 * p.A_max();
  const BetaResult br = betas(p);
  const MeshResolution res{3, 4, 1.0, 1, 1};
  const Mesh m0 = mesh_centred(p, -1.0, 0.1, 0.3, res);
  const Mesh m1 = mesh_centred(p, -1.0, 0.1 + br.period_T, 0.3 + br.period_T, res);
  CVec phase(4);
  for (int j = 0; j < 4; ++j) phase[j] = std::polar(1.0, br.betas[static_cast<std::size_t>(j)]);
  EXPECT_LE(max_vertex_gap(m0, m1, phase), 1e-7);
}

TEST(Meshes, AffineMeshes) {
  AffineParams flat{3, 1, {1, 1}, 0.0, cplx(0.2, 0.1)};
  const Mesh a = mesh_affine(flat, 0, 2, MeshResolution{8, 6, 1.0, 1, 1});
  EXPECT_LE(plane_distance(a), 1e-10);
  AffineParams d{4, 2, {1.5, 3, 1}, 0, cplx(0.3, -0.2)};
  d.A = 0.55 * d.A_max();
  const Mesh b = mesh_affine(d, 0, 2, MeshResolution{6, 5, 1.0, 1, 1});
  EXPECT_GE(b.report().sample_count, 100);
  EXPECT_LE(b.report().max_residual(), 1e-9);
  EXPECT_GT(plane_distance(b), 1e-3);
}

TEST(Meshes, EstimatedResidualsAgreeWithAnalytic) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  const Mesh fine = mesh_centred(p, 1.0, 0, 1, MeshResolution{40, 40, 1.0, 1, 1});
  const SLReport est = sl_residuals_mesh(fine);
  EXPECT_GT(est.sample_count, 1000);
  // one-sided differences are first order: small, not machine precision
  EXPECT_LE(est.max_residual(), 0.2);
  EXPECT_LE(fine.report().max_residual(), 1e-9);
}

// ---------------------------------------------------------------------------
// export and import

TEST(Export, JsonRoundTripAndCsv) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  const Mesh mesh = mesh_centred(p, 1.0, 0, 1, MeshResolution{5, 4, 1.0, 1, 1});
  const Mesh back = mesh_from_json(to_json(mesh));
  EXPECT_EQ(back.m, mesh.m);
  EXPECT_EQ(back.label, mesh.label);
  EXPECT_EQ(back.faces, mesh.faces);
  EXPECT_EQ(max_vertex_gap(mesh, back), 0.0);
  for (std::size_t i = 0; i < mesh.size(); ++i) {
    EXPECT_EQ(back.params[i], mesh.params[i]);
    EXPECT_EQ(back.res_omega[i], mesh.res_omega[i]);
  }
  const std::string csv = to_csv(mesh);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,param1,param2,x1,y1,x2,y2,x3,y3,res_omega,res_imomega");
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), mesh.size() + 1);
  const std::string obj = to_obj(mesh);
  std::istringstream lines(obj);
  std::size_t nf = 0;
  for (std::string line; std::getline(lines, line);) nf += line.rfind("f ", 0) == 0;
  EXPECT_EQ(nf, mesh.faces.size());
  EXPECT_NE(to_ply(mesh).find("element face " + std::to_string(mesh.faces.size())), std::string::npos);
}

TEST(Export, RejectsBadInput) {
  EXPECT_THROW(parse_mesh_format("stl"), invalid_input);
  EXPECT_THROW(mesh_from_json("{\"format\": \"other\"}"), invalid_input);
  EXPECT_THROW(mesh_from_json("not json"), invalid_input);
  CentredParams p{4, 2, {1, 1, 1, 1}, 0.5, 0.0};
  const Mesh m4 = mesh_centred(p, 1.0, 0, 1, MeshResolution{3, 3, 1.0, 1, 1});
  EXPECT_THROW(to_obj(m4), invalid_input);
  Projection pr;
  pr.kind = Projection::Kind::coords;
  pr.coords = {0, 1, 2};
  EXPECT_NO_THROW(to_obj(m4, pr));
  Mesh broken = m4;
  broken.faces.push_back({0, 1, 2, broken.size()});
  EXPECT_THROW(broken.validate(), invalid_input);
}

TEST(Export, Orientation) {
  CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
  Mesh mesh = mesh_centred(p, 1.0, 0, 1, MeshResolution{6, 6, 1.0, 1, 1});
  const Projection pr;
  EXPECT_TRUE(orientation_check(mesh, pr).consistent);
  for (auto& f : mesh.faces) std::swap(f[1], f[3]);
  const double flipped = orientation_check(mesh, pr).signed_volume;
  orient_outward(mesh, pr);
  EXPECT_GE(orientation_check(mesh, pr).signed_volume, 0.0);
  EXPECT_NEAR(std::abs(flipped), orientation_check(mesh, pr).signed_volume, 1e-12);
}

TEST(Io, EvodataRoundTrip) {
  for (const EvolutionData& d : {centred_quadric_data(3, 1, 1.0), centred_quadric_data(4, 2, -0.5), paraboloid_data(3, 1)}) {
    const ojson j = to_json(d);
    const EvolutionData back = evodata_from_json(j);
    EXPECT_EQ(back.n, d.n);
    EXPECT_EQ(back.level, d.level);
    for (std::size_t k = 0; k < d.chi_linear.size(); ++k) EXPECT_EQ(back.chi_linear[k].coeffs(), d.chi_linear[k].coeffs());
    EXPECT_EQ(back.chi_const.coeffs(), d.chi_const.coeffs());
    ojson bad = j;
    bad["chi_linear"][0][0] = bad["chi_linear"][0][0].get<double>() + 1.0;
    EXPECT_THROW(evodata_from_json(bad), invalid_input);
  }
  EXPECT_THROW(evodata_from_json(ojson{{"format", "evodata-1"}, {"n", 3}}), invalid_input);
}

// ---------------------------------------------------------------------------
// command line

TEST_F(Cli, BetasDocument) {
  const CliResult r = run("betas --m 3 --a 1 --alphas 1,2,2 --A 1 --ode");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["command"], "betas");
  const auto b = j["result"]["quadrature"]["betas"].get<std::vector<double>>();
  ASSERT_EQ(b.size(), 3u);
  EXPECT_LE(std::abs(b[0] + b[1] + b[2]), 1e-10);
  EXPECT_NEAR(b[0], -3.492622455803962, 1e-10);
  const auto o = j["result"]["ode"]["betas"].get<std::vector<double>>();
  EXPECT_NEAR(o[0], b[0], 1e-8);
}

TEST_F(Cli, NormalizeAndConfig) {
  const CliResult r = run("betas --m 3 --a 1 --alphas 1,1,1 --A 0.5 --normalize");
  ASSERT_EQ(r.code, 0);
  const auto al = nlohmann::json::parse(r.out)["result"]["alphas"].get<std::vector<double>>();
  EXPECT_NEAR(al[0], 2.0 / 3, 1e-14);
  EXPECT_NEAR(al[2], 4.0 / 3, 1e-14);
  std::ofstream(dir_ / "cfg.json") << R"({"m": 3, "a": 1, "alphas": [1, 2, 2], "A": 1.5})";
  const CliResult c = run("limits --config '" + (dir_ / "cfg.json").string() + "' --out lim.json");
  ASSERT_EQ(c.code, 0);
  std::ifstream f(dir_ / "lim.json");
  const auto j = nlohmann::json::parse(f);
  EXPECT_NEAR(j["result"]["at_max_sum_of_squares"].get<double>(), 2 * pi * pi, 1e-10);
}

TEST_F(Cli, SearchFindsSevenFoldSolution) {
  const CliResult r = run("search --family sym --bmax 8");
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  bool found = false;
  for (const auto& s : j["result"]["solutions"])
    if (s["b"] == 7 && s["a"] == nlohmann::json::array({-8, 4, 4})) found = true;
  EXPECT_TRUE(found);
}

TEST_F(Cli, MeshThenVerify) {
  const CliResult m = run("mesh --family centred --m 3 --a 1 --alphas 1,2,2 --A 1 --c 1 --nt 10 --nq 8 --file l.json");
  ASSERT_EQ(m.code, 0);
  const std::string path = (dir_ / "l.json").string();
  ASSERT_TRUE(fs::exists(path));
  EXPECT_EQ(run("verify --mesh '" + path + "'").code, 0);
  EXPECT_EQ(run("verify --mesh '" + path + "' --threshold 1e-300").code, 3);
  const CliResult est = run("verify --mesh '" + path + "' --estimate --threshold 1");
  EXPECT_EQ(est.code, 0);
  EXPECT_EQ(nlohmann::json::parse(est.out)["result"]["source"], "mesh-based tangent estimate");
  EXPECT_EQ(run("mesh --family centred --m 3 --a 1 --alphas 1,2,2 --A 1 --c 1 --nt 4 --nq 4 --format obj --file l.obj").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "l.obj"));
}

TEST_F(Cli, BadArgumentsExitTwo) {
  EXPECT_EQ(run("betas --m three").code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
  EXPECT_EQ(run("betas --m 3 --a 1 --alphas 1,2,2 --A 5").code, 2);
  EXPECT_EQ(run("betas --m 3 --a 1 --alphas 1,1,1 --A 0.5").code, 2);
  EXPECT_EQ(run("mesh --format stl").code, 2);
  EXPECT_EQ(run("verify").code, 2);
  EXPECT_EQ(run("verify --mesh /nonexistent/mesh.json").code, 2);
}
