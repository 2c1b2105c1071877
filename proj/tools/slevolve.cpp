// slevolve command-line front end.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "slevolve/slevolve.hpp"

namespace fs = std::filesystem;
using namespace slevolve;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitNumerical = 3;

// Options bound to variables. Values missing on the command line are taken
// from the --config document when it has a matching key; the effective values
// are echoed into every JSON output.
class Registry {
 public:
  explicit Registry(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    CLI::Option* o = app_->add_option(flag, var, desc)->capture_default_str();
    if constexpr (requires { var.push_back(var[0]); }) o->delimiter(',');
    const std::string key = key_of(flag);
    binders_.push_back([o, key, &var](const nlohmann::json& cfg, ojson& eff) {
      if (o->count() == 0 && cfg.contains(key)) {
        try {
          var = cfg.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
          throw invalid_input("config key '" + key + "': " + e.what());
        }
      }
      eff[key] = var;
    });
    return o;
  }

  CLI::Option* flag(const std::string& name, bool& var, const std::string& desc) {
    CLI::Option* o = app_->add_flag(name, var, desc);
    const std::string key = key_of(name);
    binders_.push_back([o, key, &var](const nlohmann::json& cfg, ojson& eff) {
      if (o->count() == 0 && cfg.contains(key)) var = cfg.at(key).get<bool>();
      eff[key] = var;
    });
    return o;
  }

  ojson resolve(const nlohmann::json& cfg) const {
    ojson eff = ojson::object();
    for (const auto& b : binders_) b(cfg, eff);
    return eff;
  }

  CLI::App* app() const { return app_; }

 private:
  static std::string key_of(const std::string& flag) {
    std::string k = flag.substr(0, flag.find(','));
    while (!k.empty() && k[0] == '-') k.erase(0, 1);
    for (char& c : k)
      if (c == '-') c = '_';
    return k;
  }
  CLI::App* app_;
  std::vector<std::function<void(const nlohmann::json&, ojson&)>> binders_;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw invalid_input("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Relative output paths are placed under $SLEVOLVE_OUTDIR when it is set.
std::string out_path(const std::string& p) {
  if (p.empty() || p == "-") return p;
  const char* dir = std::getenv("SLEVOLVE_OUTDIR");
  fs::path path(p);
  if (dir && *dir && path.is_relative()) {
    fs::create_directories(dir);
    path = fs::path(dir) / path;
  }
  return path.string();
}

void write_out(const std::string& p, const std::string& text) {
  const std::string path = out_path(p);
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write to " + path + " failed");
}

std::string document(const std::string& command, const ojson& config, const ojson& result) {
  ojson doc{{"slevolve_version", kVersion}, {"command", command}, {"config", config}, {"result", result}};
  return doc.dump(2) + "\n";
}

void progress(const std::string& msg) { std::cerr << "[slevolve] " << msg << std::endl; }

CVec complex_list(const std::vector<double>& v, const std::string& what) {
  detail::require(v.size() % 2 == 0 && !v.empty(), what + ": expected interleaved real,imag pairs");
  CVec z(static_cast<Eigen::Index>(v.size() / 2));
  for (std::size_t j = 0; j < v.size() / 2; ++j) z[static_cast<Eigen::Index>(j)] = cplx(v[2 * j], v[2 * j + 1]);
  return z;
}

// Parameter block shared by most subcommands.
struct Params {
  int m = 3;
  int a = 1;
  std::vector<double> alphas{1, 2, 2};
  double A = 1.0;
  double c = 1.0;
  bool normalize = false;

  void bind(Registry& r, bool with_c = false) {
    r.add("--m", m, "complex dimension m");
    r.add("--a", a, "number of + signs in the quadric signature");
    r.add("--alphas", alphas, "comma-separated alpha_1..alpha_m");
    r.add("--A", A, "conserved quantity A (|A| <= (alpha_1...alpha_m)^{1/2})");
    if (with_c) r.add("--c", c, "quadric level c");
    r.flag("--normalize", normalize, "rescale alphas so that the normalization holds");
  }

  CentredParams centred() const {
    CentredParams p{m, a, alphas, A, c};
    if (normalize) p.alphas = normalize_lambda(alphas, a).alphas;
    return p;
  }
};

struct Common {
  std::string config;
  std::string out;
  unsigned jobs = 1;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::unique_ptr<Registry> reg;
  std::function<ojson(const ojson&)> run;
};

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"slevolve: construct and verify special Lagrangian m-folds by evolving quadrics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  Common common;
  std::vector<std::unique_ptr<Command>> cmds;

  auto make = [&](const std::string& name, const std::string& desc) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = app.add_subcommand(name, desc);
    c->reg = std::make_unique<Registry>(c->app);
    c->app->add_option("--config", common.config, "JSON config file; command-line flags override its keys");
    c->app->add_option("--out,-o", common.out, "output JSON path ('-' or empty: stdout; relative paths go under $SLEVOLVE_OUTDIR)");
    cmds.push_back(std::move(c));
    return *cmds.back();
  };

  // evolve ------------------------------------------------------------------
  Params ev_p;
  std::string ev_data = "centred", ev_csv, ev_engine = "general";
  std::vector<double> ev_w0;
  double ev_t_end = 5.0, ev_tol = 1e-10, ev_beta_re = 0, ev_beta_im = 0;
  int ev_checkpoints = 20, ev_samples = 200;
  {
    Command& c = make("evolve", "integrate the evolution equation from a diagonal initial map");
    ev_p.bind(*c.reg, true);
    c.reg->add("--data", ev_data, "evolution data: centred, paraboloid, or an evodata-1 JSON file");
    c.reg->add("--engine", ev_engine, "general (matrix engine) or w (diagonal w-system)");
    c.reg->add("--w0", ev_w0, "initial diagonal as re,im pairs (default: start on u = 0 from alphas, A)");
    c.reg->add("--beta0", ev_beta_re, "real part of the initial translation (paraboloid)");
    c.reg->add("--beta0-im", ev_beta_im, "imaginary part of the initial translation (paraboloid)");
    c.reg->add("--t-end", ev_t_end, "final time (either sign)");
    c.reg->add("--tol", ev_tol, "relative tolerance of the integrator");
    c.reg->add("--checkpoints", ev_checkpoints, "number of output checkpoints");
    c.reg->add("--samples", ev_samples, "w-engine output samples");
    c.reg->add("--csv", ev_csv, "trajectory CSV path");
    c.run = [&](const ojson&) {
      ojson res;
      if (ev_engine == "w") {
        detail::require(ev_data == "centred", "evolve: the w engine needs centred data");
        const CentredParams p = ev_p.centred();
        const CVec w0 = ev_w0.empty() ? centred_start(p) : complex_list(ev_w0, "--w0");
        detail::require(w0.size() == ev_p.m, "evolve: --w0 must have m entries");
        detail::require(ev_t_end > 0, "evolve: the w engine needs t_end > 0");
        OdeOptions opt;
        opt.rtol = ev_tol;
        opt.atol = std::min(opt.atol, ev_tol);
        const WRun run = integrate_w(w0, ev_p.a, linspace(0, ev_t_end, std::max(2, ev_samples)), opt);
        res["accepted_steps"] = run.stats.accepted;
        res["rejected_steps"] = run.stats.rejected;
        res["escaped"] = run.stats.escaped;
        res["escape_time"] = detail::finite_or_null(run.stats.escape_time);
        double drift = 0;
        const double A0 = w0.prod().imag();
        for (const auto& s : run.samples) drift = std::max(drift, std::abs(s.w.prod().imag() - A0));
        res["conservation_drift"] = drift;
        res["samples"] = run.samples.size();
        if (!ev_csv.empty()) write_out(ev_csv, w_run_csv(run));
        return res;
      }
      EvolutionData d;
      if (ev_data == "centred") d = centred_quadric_data(ev_p.m, ev_p.a, ev_p.c);
      else if (ev_data == "paraboloid") d = paraboloid_data(ev_p.m, ev_p.a);
      else d = evodata_from_json(ojson::parse(read_file(ev_data)));
      EvolMap phi;
      const int m = d.m;
      if (d.kind == DataKind::linear) {
        CVec w0;
        if (ev_w0.empty()) w0 = centred_start(ev_p.centred());
        else w0 = complex_list(ev_w0, "--w0");
        detail::require(w0.size() == m, "evolve: --w0 must have m entries");
        phi = EvolMap::linear(w0.asDiagonal().toDenseMatrix());
      } else {
        CVec w0;
        if (ev_w0.empty()) {
          AffineParams ap{m, ev_p.a, ev_p.alphas, ev_p.A, 0.0};
          if (ev_p.normalize) ap.alphas = normalize_lambda(ap.alphas, ap.a).alphas;
          w0 = affine_start(ap).w;
        } else {
          w0 = complex_list(ev_w0, "--w0");
        }
        detail::require(w0.size() == m - 1, "evolve: --w0 must have m-1 entries for paraboloid data");
        CMat A = CMat::Zero(m, m);
        for (int j = 0; j < m - 1; ++j) A(j, j) = w0[j];
        A(m - 1, m - 1) = 1.0;
        phi = EvolMap{A, CVec::Zero(m)};
        phi.t0[m - 1] = cplx(ev_beta_re, ev_beta_im);
      }
      IntegrateOptions io;
      io.checkpoints = ev_checkpoints;
      const Trajectory tr = integrate(phi, d, ev_t_end, ev_tol, io);
      res["evolution_data"] = to_json(d);
      res["accepted_steps"] = tr.accepted;
      res["rejected_steps"] = tr.rejected;
      res["escaped"] = tr.escaped;
      res["escape_time"] = detail::finite_or_null(tr.escape_time);
      res["membership_residuals"] = tr.omega_residuals;
      res["membership_flag"] = tr.membership_flag;
      if (!ev_csv.empty()) write_out(ev_csv, trajectory_csv(tr));
      return res;
    };
  }

  // betas --------------------------------------------------------------------
  Params bt_p;
  bool bt_ode = false;
  int bt_scan = 0;
  double bt_tol = 1e-14;
  std::string bt_csv;
  {
    Command& c = make("betas", "monodromy angles beta_j and period T by quadrature");
    bt_p.bind(*c.reg);
    c.reg->add("--tol", bt_tol, "relative quadrature tolerance");
    c.reg->flag("--ode", bt_ode, "also measure beta_j by direct integration over one period");
    c.reg->add("--scan", bt_scan, "if > 0, scan A over (0, A_max) at this many points and write --csv");
    c.reg->add("--csv", bt_csv, "scan CSV path");
    c.run = [&](const ojson&) {
      const CentredParams p = bt_p.centred();
      ojson res;
      res["alphas"] = p.alphas;
      res["case"] = to_string(classify_case(p));
      const BetaResult br = betas(p, bt_tol);
      res["quadrature"] = to_json(br);
      if (bt_ode) res["ode"] = to_json(betas_by_ode(p));
      if (bt_scan > 0) {
        std::vector<ScanRow> rows(static_cast<std::size_t>(bt_scan));
        for (int i = 0; i < bt_scan; ++i) {
          CentredParams q = p;
          q.A = p.A_max() * (i + 0.5) / bt_scan;
          rows[static_cast<std::size_t>(i)] = {q.alphas, q.A, betas(q, bt_tol)};
        }
        if (!bt_csv.empty()) write_out(bt_csv, scan_csv(rows));
        res["scan_points"] = bt_scan;
      }
      return res;
    };
  }

  // limits -------------------------------------------------------------------
  Params lm_p;
  {
    Command& c = make("limits", "limits of beta_j as A -> 0 and A -> A_max");
    lm_p.bind(*c.reg);
    c.run = [&](const ojson&) {
      const CentredParams p = lm_p.centred();
      ojson res = to_json(beta_limits(p.alphas, p.a));
      double sq = 0;
      for (double b : beta_limits(p.alphas, p.a).at_max) sq += b * b;
      res["at_max_sum_of_squares"] = sq;
      return res;
    };
  }

  // search -------------------------------------------------------------------
  int sr_m = 3, sr_a = 1, sr_A_grid = 48, sr_r_grid = 12;
  std::int64_t sr_bmax = 8;
  std::string sr_family = "sym";
  std::vector<double> sr_alphas{1, 2, 2};
  double sr_tol = 1e-8, sr_r_lo = 1.0, sr_r_hi = 3.0;
  bool sr_no_verify = false;
  {
    Command& c = make("search", "search for periodic solutions (beta_j rational multiples of pi)");
    c.reg->add("--m", sr_m, "complex dimension (fixed family)");
    c.reg->add("--a", sr_a, "signature count (fixed family)");
    c.reg->add("--family", sr_family, "sym, ratio, or fixed");
    c.reg->add("--alphas", sr_alphas, "alphas for the fixed family");
    c.reg->add("--bmax", sr_bmax, "largest denominator b");
    c.reg->add("--tol", sr_tol, "tolerance on |beta_j - pi a_j / b|");
    c.reg->add("--A-grid", sr_A_grid, "scan points in A");
    c.reg->add("--r-grid", sr_r_grid, "scan points in r (ratio family)");
    c.reg->add("--r-lo", sr_r_lo, "lower end of r (ratio family)");
    c.reg->add("--r-hi", sr_r_hi, "upper end of r (ratio family)");
    c.reg->flag("--no-verify", sr_no_verify, "skip the ODE re-verification pass");
    c.app->add_option("--jobs,-j", common.jobs, "worker threads")->capture_default_str();
    c.run = [&](const ojson&) {
      AlphaFamily fam;
      if (sr_family == "sym") fam = sym_family();
      else if (sr_family == "ratio") fam = ratio_family(sr_r_lo, sr_r_hi);
      else if (sr_family == "fixed") fam = fixed_family(sr_m, sr_a, sr_alphas);
      else throw invalid_input("search: unknown family '" + sr_family + "'");
      if (sr_family != "fixed")
        detail::require(sr_m == 3 && sr_a == 1, "search: the sym and ratio families have m = 3, a = 1");
      SearchOptions opt;
      opt.b_max = sr_bmax;
      opt.tol = sr_tol;
      opt.A_grid = sr_A_grid;
      opt.r_grid = sr_r_grid;
      opt.jobs = std::max(1u, common.jobs);
      opt.verify = !sr_no_verify;
      opt.progress = progress;
      const auto sols = periodic_search(fam, opt);
      ojson arr = ojson::array();
      for (const auto& s : sols) arr.push_back(to_json(s));
      return ojson{{"family", fam.name}, {"count", sols.size()}, {"solutions", arr}};
    };
  }

  // mesh ---------------------------------------------------------------------
  Params ms_p;
  std::string ms_family = "centred", ms_format = "json", ms_file = "mesh.json", ms_project = "pca", ms_variant = "a2";
  double ms_t0 = 0, ms_t1 = 5, ms_radius = 1.5, ms_C_re = 0, ms_C_im = 0;
  int ms_nt = 32, ms_nq = 16, ms_sheet = 1;
  std::vector<double> ms_w0{0.7, 0.2, -0.3, 0.9};
  bool ms_orient = true;
  {
    Command& c = make("mesh", "sample a special Lagrangian m-fold and export a mesh");
    ms_p.bind(*c.reg, true);
    c.reg->add("--family", ms_family, "centred, affine, affine3, or link (T^2-cone link, m = 3)");
    c.reg->add("--t0", ms_t0, "start of the t interval");
    c.reg->add("--t1", ms_t1, "end of the t interval");
    c.reg->add("--nt", ms_nt, "samples in t");
    c.reg->add("--nq", ms_nq, "samples per quadric parameter (s samples for link)");
    c.reg->add("--radius", ms_radius, "truncation radius of non-compact directions");
    c.reg->add("--sheet", ms_sheet, "sheet sign for zero-dimensional sphere factors");
    c.reg->add("--C", ms_C_re, "real part of the affine constant beta(0)");
    c.reg->add("--C-im", ms_C_im, "imaginary part of the affine constant beta(0)");
    c.reg->add("--variant", ms_variant, "affine3 variant: a2 or a1");
    c.reg->add("--w0", ms_w0, "affine3 initial (w1, w2) as re,im pairs");
    c.reg->add("--format", ms_format, "obj, ply, csv, or json");
    c.reg->add("--file", ms_file, "mesh output path");
    c.reg->add("--project", ms_project, "obj/ply projection: pca or three coordinate indices i,j,k");
    c.reg->flag("--orient,!--no-orient", ms_orient, "orient faces by the signed-volume test");
    c.app->add_option("--jobs,-j", common.jobs, "worker threads")->capture_default_str();
    c.run = [&](const ojson&) {
      MeshResolution res;
      res.nt = ms_nt;
      res.nq = ms_nq;
      res.radius = ms_radius;
      res.sheet = ms_sheet;
      res.jobs = std::max(1u, common.jobs);
      Mesh mesh;
      if (ms_family == "centred") {
        mesh = mesh_centred(ms_p.centred(), ms_p.c, ms_t0, ms_t1, res);
      } else if (ms_family == "affine") {
        AffineParams ap{ms_p.m, ms_p.a, ms_p.alphas, ms_p.A, cplx(ms_C_re, ms_C_im)};
        if (ms_p.normalize) ap.alphas = normalize_lambda(ap.alphas, ap.a).alphas;
        mesh = mesh_affine(ap, ms_t0, ms_t1, res);
      } else if (ms_family == "affine3") {
        const CVec w = complex_list(ms_w0, "--w0");
        detail::require(w.size() == 2, "mesh: affine3 needs two complex initial values");
        detail::require(ms_variant == "a2" || ms_variant == "a1", "mesh: variant must be a2 or a1");
        const auto v = ms_variant == "a2" ? Affine3Variant::a2 : Affine3Variant::a1;
        mesh = mesh_affine3(affine3_from_initial(v, w[0], w[1], cplx(ms_C_re, ms_C_im)), ms_t0, ms_t1, res);
      } else if (ms_family == "link") {
        const CentredParams p = ms_p.centred();
        detail::require(p.m == 3 && p.a == 1, "mesh: link needs m = 3, a = 1");
        const std::array<double, 3> al{p.alphas[0], p.alphas[1], p.alphas[2]};
        const CrossSection cs = cross_section(al);
        const double S = cs.period();
        std::vector<double> s(static_cast<std::size_t>(ms_nq));
        for (int i = 0; i < ms_nq; ++i) s[static_cast<std::size_t>(i)] = S * i / ms_nq;
        mesh = mesh_link(conformal_map(al, p.A, s, linspace(ms_t0, ms_t1, ms_nt), res.jobs), true, false);
      } else {
        throw invalid_input("mesh: unknown family '" + ms_family + "'");
      }
      std::optional<Projection> proj;
      if (ms_project != "pca") {
        Projection pr;
        pr.kind = Projection::Kind::coords;
        std::stringstream ss(ms_project);
        std::string tok;
        int i = 0;
        while (std::getline(ss, tok, ',')) {
          detail::require(i < 3, "mesh: --project takes three indices");
          try {
            pr.coords[static_cast<std::size_t>(i++)] = std::stoi(tok);
          } catch (const std::exception&) {
            throw invalid_input("mesh: bad --project index '" + tok + "'");
          }
        }
        detail::require(i == 3, "mesh: --project takes three indices");
        proj = pr;
      } else if (mesh.m > 3) {
        proj = Projection{};
      }
      const MeshFormat fmt = parse_mesh_format(ms_format);
      if (ms_orient && !mesh.faces.empty()) orient_outward(mesh, proj.value_or(Projection{}));
      export_mesh(mesh, fmt, out_path(ms_file), proj);
      ojson r;
      r["label"] = mesh.label;
      r["vertices"] = mesh.size();
      r["faces"] = mesh.faces.size();
      r["file"] = ms_file;
      r["sl_report"] = to_json(mesh.report());
      return r;
    };
  }

  // verify -------------------------------------------------------------------
  std::string vf_mesh;
  double vf_threshold = 1e-6;
  bool vf_estimate = false;
  {
    Command& c = make("verify", "verify the special Lagrangian residuals of a slmesh-1 file");
    c.reg->add("--mesh", vf_mesh, "slmesh-1 JSON file")->required();
    c.reg->add("--threshold", vf_threshold, "pass iff max(|omega|, |Im Omega|) per unit volume <= threshold");
    c.reg->flag("--estimate", vf_estimate, "use mesh-based tangents even when stored residuals exist");
    c.run = [&](const ojson&) {
      const Mesh mesh = read_mesh_json(vf_mesh);
      const SLReport stored = mesh.report();
      const SLReport est = sl_residuals_mesh(mesh);
      const bool use_stored = !vf_estimate && stored.sample_count > 0;
      const SLReport& used = use_stored ? stored : est;
      ojson r;
      r["label"] = mesh.label;
      r["source"] = use_stored ? "stored analytic-tangent residuals" : "mesh-based tangent estimate";
      r["sl_report"] = to_json(used);
      r["mesh_estimate"] = to_json(est);
      r["max_residual"] = used.max_residual();
      r["threshold"] = vf_threshold;
      r["pass"] = used.sample_count > 0 && used.max_residual() <= vf_threshold;
      std::cerr << "max residual " << detail::num(used.max_residual()) << " (threshold " << detail::num(vf_threshold)
                << ")\n";
      return r;
    };
  }

  // crosssection -------------------------------------------------------------
  std::vector<double> cs_alphas{2.0 / 3, 4.0 / 3, 4.0 / 3};
  double cs_A = 0.5, cs_t_max = 3;
  int cs_ns = 100, cs_nt = 100;
  std::string cs_csv;
  {
    Command& c = make("crosssection", "m = 3 cone cross-section: Jacobi parametrization and conformality");
    c.reg->add("--alphas", cs_alphas, "alpha_1,alpha_2,alpha_3 with 1/alpha_1 = 1/alpha_2 + 1/alpha_3");
    c.reg->add("--A", cs_A, "conserved quantity, 0 < A <= (alpha_1 alpha_2 alpha_3)^{1/2}");
    c.reg->add("--ns", cs_ns, "grid points in s over one period");
    c.reg->add("--nt", cs_nt, "grid points in t");
    c.reg->add("--t-max", cs_t_max, "end of the t grid");
    c.reg->add("--csv", cs_csv, "grid CSV path");
    c.app->add_option("--jobs,-j", common.jobs, "worker threads")->capture_default_str();
    c.run = [&](const ojson&) {
      detail::require(cs_alphas.size() == 3, "crosssection: need three alphas");
      const std::array<double, 3> al{cs_alphas[0], cs_alphas[1], cs_alphas[2]};
      const CrossSection cs = cross_section(al);
      std::vector<double> s(static_cast<std::size_t>(cs_ns));
      for (int i = 0; i < cs_ns; ++i) s[static_cast<std::size_t>(i)] = cs.period() * i / cs_ns;
      const ConformalGrid g = conformal_map(al, cs_A, s, linspace(0, cs_t_max, cs_nt), std::max(1u, common.jobs));
      double cons = 0;
      for (double x : s) {
        const auto r = cs.constraint_residuals(x);
        cons = std::max({cons, r[0], r[1]});
      }
      ojson r{{"mu", cs.mu}, {"nu", cs.nu}, {"period_s", cs.period()}, {"swapped", cs.swapped},
              {"constraint_residual", cons}, {"conformality", to_json(conformality_report(g))}};
      if (!cs_csv.empty()) write_out(cs_csv, conformal_csv(g));
      return r;
    };
  }

  // affine -------------------------------------------------------------------
  Params af_p;
  double af_C_re = 0, af_C_im = 0, af_t_end = 0;
  int af_samples = 200;
  std::string af_csv;
  {
    Command& c = make("affine", "paraboloid family: w-system plus translation beta(t)");
    af_p.m = 4;
    af_p.a = 2;
    af_p.alphas = {1, 2, 2};
    af_p.A = 0.5;
    af_p.bind(*c.reg);
    c.reg->add("--C", af_C_re, "real part of beta(0)");
    c.reg->add("--C-im", af_C_im, "imaginary part of beta(0)");
    c.reg->add("--t-end", af_t_end, "integration span (default: five periods, or 1 when not periodic)");
    c.reg->add("--samples", af_samples, "output samples");
    c.reg->add("--csv", af_csv, "trajectory CSV path with the complex beta column");
    c.run = [&](const ojson&) {
      AffineParams ap{af_p.m, af_p.a, af_p.alphas, af_p.A, cplx(af_C_re, af_C_im)};
      if (af_p.normalize) ap.alphas = normalize_lambda(ap.alphas, ap.a).alphas;
      const AffineCaseInfo info = classify_affine_case(ap);
      ojson r{{"case", std::string(1, info.label)}, {"note", info.note}, {"alphas", ap.alphas}};
      double T = 0;
      if (info.label == 'd') {
        T = betas(ap.letters()).period_T;
        r["period_T"] = T;
      }
      const double t_end = af_t_end > 0 ? af_t_end : (T > 0 ? 5 * T : 1.0);
      OdeOptions opt;
      opt.rtol = 1e-12;
      opt.atol = 1e-13;
      const AffineRun run = integrate_affine(affine_start(ap), ap.a, linspace(0, t_end, std::max(2, af_samples)), opt);
      r["escaped"] = run.stats.escaped;
      r["escape_time"] = detail::finite_or_null(run.stats.escape_time);
      double worst = 0;
      const double u0 = reduce(run.samples[0].w, ap.letters()).state.u;
      for (const auto& s : run.samples)
        worst = std::max(worst, std::abs(s.beta - beta_closed(reduce(s.w, ap.letters()).state.u, u0, s.t, ap.A,
                                                               run.samples[0].beta)));
      r["beta_closed_form_residual"] = worst;
      r["t_end"] = t_end;
      if (T > 0 && !run.stats.escaped) {
        const AffineRun shifted = integrate_affine(affine_start(ap), ap.a, {T}, opt);
        const cplx jump = shifted.samples.back().beta - ap.Cconst;
        r["translation_per_period"] = detail::complex_pair(jump);
        r["translation_residual"] = std::abs(jump - cplx(0, -ap.A * T));
      }
      if (!af_csv.empty()) write_out(af_csv, affine_run_csv(run, ap));
      return r;
    };
  }

  // report -------------------------------------------------------------------
  {
    Command& c = make("report", "run a compact verification report over the main constructions");
    c.run = [&](const ojson&) {
      ojson r;
      progress("betas at alpha = (1,2,2)");
      CentredParams p{3, 1, {1, 2, 2}, 1.0, 0.0};
      const BetaResult br = betas(p);
      const OdeBetaResult ob = betas_by_ode(p);
      double diff = 0;
      for (int j = 0; j < 3; ++j) diff = std::max(diff, std::abs(br.betas[static_cast<std::size_t>(j)] -
                                                                 ob.betas[static_cast<std::size_t>(j)]));
      r["betas"] = to_json(br);
      r["betas_quadrature_vs_ode"] = diff;
      r["limits"] = to_json(beta_limits(p.alphas, 1));
      progress("conformality at alpha = (2/3,4/3,4/3)");
      const std::array<double, 3> al{2.0 / 3, 4.0 / 3, 4.0 / 3};
      const CrossSection cs = cross_section(al);
      std::vector<double> s(40);
      for (int i = 0; i < 40; ++i) s[static_cast<std::size_t>(i)] = cs.period() * i / 40;
      const ConformalGrid g = conformal_map(al, 0.5, s, linspace(0, 3, 40));
      r["conformality"] = to_json(conformality_report(g));
      progress("special Lagrangian residuals");
      MeshResolution res;
      res.nt = 10;
      res.nq = 10;
      r["sl_centred_case_d"] = to_json(mesh_centred(p, 1.0, 0, 5, res).report());
      r["sl_link"] = to_json(mesh_link(g, true, false).report());
      r["sl_affine3_a2"] =
          to_json(mesh_affine3(affine3_from_initial(Affine3Variant::a2, {0.7, 0.2}, {-0.3, 0.9}), -1, 1, res).report());
      r["sl_affine3_a1"] =
          to_json(mesh_affine3(affine3_from_initial(Affine3Variant::a1, {0.7, 0.2}, {-0.3, 0.9}), -1, 1, res).report());
      return r;
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  for (auto& c : cmds) {
    if (!c->app->parsed()) continue;
    nlohmann::json cfg = nlohmann::json::object();
    if (!common.config.empty()) {
      try {
        cfg = nlohmann::json::parse(read_file(common.config));
      } catch (const nlohmann::json::exception& e) {
        throw invalid_input(std::string("config: ") + e.what());
      }
      detail::require(cfg.is_object(), "config: top level must be an object");
      if (cfg.contains("out") && c->app->get_option("--out")->count() == 0) common.out = cfg["out"].get<std::string>();
      if (cfg.contains("jobs")) {
        auto* o = c->app->get_option_no_throw("--jobs");
        if (o && o->count() == 0) common.jobs = cfg["jobs"].get<unsigned>();
      }
    }
    const ojson eff = c->reg->resolve(cfg);
    ojson result = c->run(eff);
    write_out(common.out, document(c->name, eff, result));
    if (c->name == "verify" && !result["pass"].get<bool>()) return kExitNumerical;
    return kExitOk;
  }
  return kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const invalid_input& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const numerical_failure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
