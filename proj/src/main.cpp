// Command-line experiment driver: prints the derived gas parameters, runs
// refinement studies and boundary-condition comparisons, and samples exact or
// solved fields onto grids. All tabular output is CSV with a leading comment
// line that records the binary version and the full run configuration, so
// every file is reproducible from its own header.
//
// Exit codes: 0 on success, 1 when an input or configuration is rejected,
// 2 when the iterative solver exhausts its budget.

#include <chrono>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>

#include "miwave/fem.hpp"
#include "miwave/geometry.hpp"
#include "miwave/manufactured.hpp"
#include "miwave/params.hpp"
#include "miwave/solver.hpp"

namespace {

namespace geom = miwave::geom;
namespace mf = miwave::manufactured;
namespace par = miwave::params;
namespace sol = miwave::solver;
using Cplx = std::complex<double>;

#ifndef MIWAVE_VERSION
#define MIWAVE_VERSION "0.0.0"
#endif
constexpr const char* kVersion = MIWAVE_VERSION;

// ---------------------------------------------------------------------------
// Option plumbing shared by the solve-driving subcommands.

struct RunOptions {
  std::string geometry = "square-hole";
  int degree = 2;
  std::string form = "coupled";
  std::string bc = "nonlocal";
  std::string sigma = "wavenumber";
  int levels = 4;        // refinement ladder length (convergence, bc-compare)
  int level = 0;         // single level (fields)
  double tol = 1e-12;
  int maxit = 200;
  int gamma_order = 10;
  int sigma_order = 6;
  int threads = 1;
  std::string out;       // empty or "-" writes to stdout
  std::string params_file;
  double gamma = 1.4;
  double m = 0.0;
  double lambda = 0.0;
};

void add_params_flags(CLI::App* sub, RunOptions* o) {
  sub->add_option("--params", o->params_file,
                  "Key-value file with gamma, M, Lambda");
  sub->add_option("--gamma", o->gamma, "Ratio of specific heats");
  sub->add_option("--M", o->m, "Thermal-scale ratio");
  sub->add_option("--Lambda", o->lambda, "Viscous-scale ratio");
}

void add_solve_flags(CLI::App* sub, RunOptions* o) {
  sub->add_option("--geometry", o->geometry,
                  "square-hole, tuning-fork, or msh:<path>");
  sub->add_option("--degree", o->degree, "Element degree")
      ->check(CLI::Range(1, 3));
  sub->add_option("--form", o->form, "System form")
      ->check(CLI::IsMember({"coupled", "decoupled", "single"}));
  sub->add_option("--bc", o->bc, "Outer boundary condition")
      ->check(CLI::IsMember({"neumann-both", "adhoc", "transmission",
                             "nonlocal"}));
  sub->add_option("--sigma", o->sigma, "Shift of the nonlocal condition")
      ->check(CLI::IsMember({"zero", "wavenumber"}));
  sub->add_option("--tol", o->tol, "GMRES relative residual tolerance");
  sub->add_option("--maxit", o->maxit, "GMRES iteration budget");
  sub->add_option("--gamma-order", o->gamma_order,
                  "Quadrature order on the scatterer boundary");
  sub->add_option("--sigma-order", o->sigma_order,
                  "Quadrature order on the outer boundary");
  sub->add_option("--threads", o->threads, "Assembly threads");
  sub->add_option("--out", o->out, "Output CSV path (default stdout)");
  add_params_flags(sub, o);
}

par::PhysicalParams load_params(const CLI::App& sub, const RunOptions& o) {
  par::PhysicalParams p;
  if (sub.count("--params")) p = par::read_params_file(o.params_file);
  if (sub.count("--gamma")) p.gamma = o.gamma;
  if (sub.count("--M")) p.m = o.m;
  if (sub.count("--Lambda")) p.lambda = o.lambda;
  p.validate();
  return p;
}

sol::SolveConfig make_config(const RunOptions& o) {
  sol::SolveConfig c;
  if (o.geometry == "square-hole") {
    c.geometry = sol::GeometryKind::SquareHole;
  } else if (o.geometry == "tuning-fork") {
    c.geometry = sol::GeometryKind::TuningFork;
  } else if (o.geometry.rfind("msh:", 0) == 0) {
    c.geometry = sol::GeometryKind::MshFile;
    c.msh_path = o.geometry.substr(4);
  } else {
    throw std::invalid_argument(
        "--geometry: expected square-hole, tuning-fork, or msh:<path>");
  }
  c.degree = o.degree;
  c.form = o.form == "coupled"     ? sol::Form::Coupled
           : o.form == "decoupled" ? sol::Form::Decoupled
                                   : sol::Form::Single;
  c.bc = o.bc == "neumann-both"   ? sol::Bc::NeumannBoth
         : o.bc == "adhoc"        ? sol::Bc::AdHoc
         : o.bc == "transmission" ? sol::Bc::Transmission
                                  : sol::Bc::Nonlocal;
  c.sigma = o.sigma == "zero" ? sol::SigmaChoice::Zero
                              : sol::SigmaChoice::Wavenumber;
  c.level = o.level;
  c.tol = o.tol;
  c.max_iterations = o.maxit;
  c.gamma_order = o.gamma_order;
  c.sigma_order = o.sigma_order;
  c.threads = o.threads;
  return c;
}

// The same mesh ladder the solver uses; needed when a command addresses the
// mesh directly (grids, dof coordinates).
geom::Mesh build_mesh(const sol::SolveConfig& c) {
  geom::Mesh m;
  switch (c.geometry) {
    case sol::GeometryKind::SquareHole:
      return geom::generate_square_with_hole(0.3 / double(1 << c.level));
    case sol::GeometryKind::TuningFork:
      m = geom::generate_tuning_fork(0.013);
      break;
    case sol::GeometryKind::MshFile:
      m = geom::read_msh(c.msh_path);
      break;
  }
  for (int l = 0; l < c.level; ++l) m = geom::refine(m);
  return m;
}

Eigen::Vector2d source_for(const sol::SolveConfig& c) {
  return c.geometry == sol::GeometryKind::SquareHole
             ? mf::square_hole_source()
             : mf::tuning_fork_source();
}

struct Output {
  std::ofstream file;
  std::ostream* os = nullptr;
};

Output open_out(const std::string& path) {
  Output o;
  if (path.empty() || path == "-") {
    o.os = &std::cout;
    return o;
  }
  o.file.open(path);
  if (!o.file) throw std::runtime_error("cannot open output file: " + path);
  o.os = &o.file;
  return o;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string config_line(const std::string& cmd, const RunOptions& o,
                        const par::PhysicalParams& p, bool ladder) {
  std::ostringstream s;
  s << "# miwave " << kVersion << ' ' << cmd << " geometry=" << o.geometry
    << " degree=" << o.degree << " form=" << o.form << " bc=" << o.bc
    << " sigma=" << o.sigma;
  if (ladder) {
    s << " levels=" << o.levels;
  } else {
    s << " level=" << o.level;
  }
  s << " tol=" << fmt_double(o.tol) << " maxit=" << o.maxit
    << " gamma-order=" << o.gamma_order << " sigma-order=" << o.sigma_order
    << " threads=" << o.threads << " gamma=" << fmt_double(p.gamma)
    << " M=" << fmt_double(p.m) << " Lambda=" << fmt_double(p.lambda);
  return s.str();
}

int report_nonconvergence(const sol::SolveResult& r) {
  std::fprintf(stderr,
               "gmres: no convergence within %d iterations "
               "(relative residual %.3e)\n",
               r.report.iterations, r.report.residuals.back());
  return 2;
}

// ---------------------------------------------------------------------------
// params: print the derived mode parameters and the decoupling residual.

void print_complex(const char* name, Cplx v) {
  std::printf("%-11s = %.17g %+.17gi\n", name, v.real(), v.imag());
}

int cmd_params(const par::PhysicalParams& p) {
  const par::DecoupledParams d = par::derive_decoupled(p);
  const par::DecoupleMatrix bm = par::decouple_matrix(p, d);
  const par::CoefficientMatrices cm = par::coefficient_matrices(p);

  Eigen::Matrix2cd diag = Eigen::Matrix2cd::Zero();
  diag(0, 0) = -d.k_t * d.k_t;
  diag(1, 1) = -d.k_p * d.k_p;
  const Eigen::Matrix2cd lhs = bm.b * cm.e.inverse() * cm.c * bm.b_inv;
  const double residual = (lhs - diag).norm() / diag.norm();

  std::printf("%-11s = %.17g\n", "gamma", p.gamma);
  std::printf("%-11s = %.17g\n", "M", p.m);
  std::printf("%-11s = %.17g\n", "Lambda", p.lambda);
  print_complex("Q", d.q);
  print_complex("t_plus", d.t_plus);
  print_complex("t_minus", d.t_minus);
  print_complex("k_t", d.k_t);
  print_complex("k_p", d.k_p);
  std::printf("%-11s = %.3e\n", "decoupling", residual);
  return 0;
}

// ---------------------------------------------------------------------------
// convergence: one row per refinement level.

int cmd_convergence(const CLI::App& sub, const RunOptions& o) {
  if (o.levels < 2) {
    throw std::invalid_argument("convergence: need at least 2 levels");
  }
  const par::PhysicalParams p = load_params(sub, o);
  sol::SolveConfig cfg = make_config(o);
  Output out = open_out(o.out);
  *out.os << config_line("convergence", o, p, true) << '\n';
  *out.os << "level,N_v,dofs,rel_l2,gmres_iters,seconds\n";

  char buf[160];
  for (int level = 0; level < o.levels; ++level) {
    cfg.level = level;
    const auto t0 = std::chrono::steady_clock::now();
    const sol::SolveResult r = sol::solve_morse_ingard(cfg, p);
    const std::chrono::duration<double> wall =
        std::chrono::steady_clock::now() - t0;
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.12e,%d,%.3f\n", level,
                  r.mesh_vertices, r.dofs, r.rel_l2, r.report.iterations,
                  wall.count());
    *out.os << buf << std::flush;
    if (!r.report.converged) return report_nonconvergence(r);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bc-compare: the three outer conditions on the tuning fork, level by level.

int cmd_bc_compare(const CLI::App& sub, const RunOptions& o) {
  if (o.levels < 1) {
    throw std::invalid_argument("bc-compare: need at least 1 level");
  }
  RunOptions oc = o;
  if (!sub.count("--geometry")) oc.geometry = "tuning-fork";
  if (oc.geometry == "square-hole") {
    throw std::invalid_argument(
        "bc-compare: contrasts the outer conditions on the tuning fork; "
        "pass tuning-fork or an msh:<path> mesh");
  }
  const par::PhysicalParams p = load_params(sub, oc);
  Output out = open_out(oc.out);
  oc.form = "coupled";  // adhoc exists only for the coupled system
  *out.os << config_line("bc-compare", oc, p, true) << '\n';
  *out.os << "bc,level,rel_l2\n";

  char buf[96];
  for (const char* bc : {"adhoc", "transmission", "nonlocal"}) {
    RunOptions ob = oc;
    ob.bc = bc;
    sol::SolveConfig cfg = make_config(ob);
    for (int level = 0; level < o.levels; ++level) {
      cfg.level = level;
      const sol::SolveResult r = sol::solve_morse_ingard(cfg, p);
      std::snprintf(buf, sizeof buf, "%s,%d,%.12e\n", bc, level, r.rel_l2);
      *out.os << buf << std::flush;
      if (!r.report.converged) return report_nonconvergence(r);
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// fields: exact reference grids, or the solved coefficients per dof.

int cmd_fields(const CLI::App& sub, const RunOptions& o,
               const std::string& source, const std::string& which,
               double box[4], int resolution) {
  const par::PhysicalParams p = load_params(sub, o);
  const sol::SolveConfig cfg = make_config(o);

  if (source == "solved" && which == "modes") {
    throw std::invalid_argument(
        "fields: solved output is in the physical fields; "
        "--which modes requires --source exact");
  }

  Output out = open_out(o.out);
  std::ostringstream extra;
  extra << " source=" << source << " which=" << which;

  if (source == "exact") {
    const geom::Mesh mesh = build_mesh(cfg);
    const Eigen::Vector2d x0 = source_for(cfg);
    if (geom::contains(mesh, x0)) {
      throw std::invalid_argument(
          "fields: source point lies in the flow domain");
    }
    const mf::PointSourceSolution s = mf::point_source(p, x0);
    Eigen::Vector2d lo(box[0], box[1]), hi(box[2], box[3]);
    if (!sub.count("--xmin") && !sub.count("--xmax") &&
        !sub.count("--ymin") && !sub.count("--ymax")) {
      lo.setConstant(std::numeric_limits<double>::max());
      hi.setConstant(std::numeric_limits<double>::lowest());
      for (const auto& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
      }
    }
    extra << " box=" << fmt_double(lo.x()) << ':' << fmt_double(lo.y()) << ':'
          << fmt_double(hi.x()) << ':' << fmt_double(hi.y())
          << " resolution=" << resolution;
    *out.os << config_line("fields", o, p, false) << extra.str() << '\n';
    mf::sample_grid(s, mesh, lo, hi, resolution,
                    which == "modes" ? mf::GridField::Modes
                                     : mf::GridField::Fields,
                    *out.os);
    return 0;
  }

  const sol::SolveResult r = sol::solve_morse_ingard(cfg, p);
  if (!r.report.converged) return report_nonconvergence(r);
  const geom::Mesh mesh = build_mesh(cfg);
  const miwave::fem::FeSpace s2 = miwave::fem::build_space(mesh, cfg.degree, 2);
  char buf[192];
  std::snprintf(buf, sizeof buf, " rel_l2=%.12e gmres_iters=%d",
                r.rel_l2, r.report.iterations);
  *out.os << config_line("fields", o, p, false) << extra.str() << buf << '\n';
  *out.os << "x,y,T_re,T_im,P_re,P_im\n";
  for (int i = 0; i < s2.scalar_dofs; ++i) {
    const Cplx t = r.fields[i];
    const Cplx pr = r.fields[s2.scalar_dofs + i];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  s2.dof_x[i].x(), s2.dof_x[i].y(), t.real(), t.imag(),
                  pr.real(), pr.imag());
    *out.os << buf;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermoacoustic scattering studies on truncated domains"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  RunOptions o;

  CLI::App* sp = app.add_subcommand(
      "params", "Print the derived mode parameters and wavenumbers");
  add_params_flags(sp, &o);

  CLI::App* sc = app.add_subcommand(
      "convergence", "Refinement study: error and iterations per level");
  add_solve_flags(sc, &o);
  sc->add_option("--levels", o.levels, "Number of refinement levels");

  CLI::App* sb = app.add_subcommand(
      "bc-compare", "Compare outer boundary conditions on one geometry");
  add_solve_flags(sb, &o);
  sb->add_option("--levels", o.levels, "Number of refinement levels");
  sb->get_option("--geometry")->default_str("tuning-fork");
  o.geometry = "tuning-fork";  // overridden when the flag is passed

  CLI::App* sf = app.add_subcommand(
      "fields", "Sample exact or solved fields to CSV");
  add_solve_flags(sf, &o);
  std::string source = "exact";
  std::string which = "fields";
  double box[4] = {0.0, 0.0, 0.0, 0.0};
  int resolution = 50;
  sf->add_option("--level", o.level, "Refinement level")
      ->check(CLI::Range(0, 8));
  sf->add_option("--source", source, "exact reference or solved coefficients")
      ->check(CLI::IsMember({"exact", "solved"}));
  sf->add_option("--which", which, "physical fields or decoupled modes")
      ->check(CLI::IsMember({"fields", "modes"}));
  sf->add_option("--xmin", box[0], "Grid box (default: mesh bounds)");
  sf->add_option("--ymin", box[1], "Grid box (default: mesh bounds)");
  sf->add_option("--xmax", box[2], "Grid box (default: mesh bounds)");
  sf->add_option("--ymax", box[3], "Grid box (default: mesh bounds)");
  sf->add_option("--resolution", resolution, "Grid intervals per side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sp->parsed()) return cmd_params(load_params(*sp, o));
    if (sc->parsed()) return cmd_convergence(*sc, o);
    if (sb->parsed()) return cmd_bc_compare(*sb, o);
    if (sf->parsed()) return cmd_fields(*sf, o, source, which, box, resolution);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
