#include "miwave/solver.hpp"

#include <Eigen/SparseLU>

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>

#include "miwave/geometry.hpp"
#include "miwave/manufactured.hpp"

namespace miwave::solver {
namespace {

using Vec2 = Eigen::Vector2d;
namespace mf = miwave::manufactured;
namespace lp = miwave::layerpot;

Eigen::VectorXcd random_probe(Eigen::Index n) {
  std::mt19937 rng(20240817u);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXcd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = Cplx(u(rng), u(rng));
  return y;
}

}  // namespace

struct LocalFactorization::Impl {
  fem::SparseMatrix a;
  Eigen::SparseLU<fem::SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
};

LocalFactorization::LocalFactorization(const fem::SparseMatrix& a)
    : impl_(std::make_unique<Impl>()), rows_(a.rows()) {
  if (a.rows() != a.cols()) {
    throw std::runtime_error("factorize: matrix is not square");
  }
  if (a.rows() == 0) {
    throw std::runtime_error("factorize: empty matrix");
  }
  impl_->a = a;
  impl_->a.makeCompressed();
  impl_->lu.compute(impl_->a);
  if (impl_->lu.info() != Eigen::Success) {
    throw std::runtime_error("factorize: singular local matrix");
  }
  const Eigen::VectorXcd y = random_probe(rows_);
  const Eigen::VectorXcd x = impl_->lu.solve(y);
  const double rel = (impl_->a * x - y).norm() / y.norm();
  if (!(rel <= 1e-10)) {
    throw std::runtime_error(
        "factorize: probe residual above 1e-10, matrix numerically singular");
  }
}

LocalFactorization::~LocalFactorization() = default;
LocalFactorization::LocalFactorization(LocalFactorization&& other) noexcept =
    default;
LocalFactorization& LocalFactorization::operator=(
    LocalFactorization&& other) noexcept = default;

Eigen::VectorXcd LocalFactorization::solve(const Eigen::VectorXcd& y) const {
  return impl_->lu.solve(y);
}

Eigen::VectorXcd CompositeOperator::apply(const Eigen::VectorXcd& x) const {
  Eigen::VectorXcd y = (*sparse) * x;
  if (dense != nullptr) y += lp::apply(*dense, x);
  return y;
}

Eigen::VectorXcd gmres(const CompositeOperator& op,
                       const LocalFactorization* pre,
                       const Eigen::VectorXcd& b, double tol, int maxit,
                       GmresReport* report) {
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  };
  const Eigen::Index n = b.size();
  const auto precondition = [&](const Eigen::VectorXcd& v) {
    return pre != nullptr ? pre->solve(v) : v;
  };

  GmresReport rep;
  const Eigen::VectorXcd r0 = precondition(b);
  const double beta = r0.norm();
  const double bnorm = b.norm();
  if (beta == 0.0) {
    rep.residuals = {0.0};
    rep.converged = true;
    rep.seconds = elapsed();
    if (report != nullptr) *report = rep;
    return Eigen::VectorXcd::Zero(n);
  }
  rep.residuals = {1.0};

  std::vector<Eigen::VectorXcd> v;  // Arnoldi basis
  v.push_back(r0 / beta);
  std::vector<std::vector<Cplx>> h;  // Hessenberg columns, rotated in place
  std::vector<Cplx> cs, sn;          // Givens rotations
  std::vector<Cplx> g = {Cplx(beta, 0.0)};
  bool converged = false;

  int j = 0;
  for (; j < maxit; ++j) {
    Eigen::VectorXcd w = precondition(op.apply(v[j]));
    const double wnorm = w.norm();
    std::vector<Cplx> hj(j + 2, Cplx(0.0));
    // Modified Gram-Schmidt with one unconditional reorthogonalization.
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) {
        const Cplx c = v[i].dot(w);  // conjugates the basis vector
        hj[i] += c;
        w -= c * v[i];
      }
    }
    const double hlast = w.norm();
    hj[j + 1] = Cplx(hlast, 0.0);
    const bool breakdown = hlast <= 1e-14 * wnorm;
    if (!breakdown) v.push_back(w / hlast);

    // Apply the accumulated rotations, then zero the subdiagonal entry.
    for (int i = 0; i < j; ++i) {
      const Cplx t = cs[i] * hj[i] + sn[i] * hj[i + 1];
      hj[i + 1] = -std::conj(sn[i]) * hj[i] + cs[i] * hj[i + 1];
      hj[i] = t;
    }
    Cplx c, s;
    const Cplx a = hj[j];
    const Cplx bb = hj[j + 1];
    if (a == Cplx(0.0)) {
      c = Cplx(0.0);
      s = Cplx(1.0);
    } else {
      const double denom = std::hypot(std::abs(a), std::abs(bb));
      const Cplx phase = a / std::abs(a);
      c = Cplx(std::abs(a) / denom, 0.0);
      s = phase * std::conj(bb) / denom;
    }
    hj[j] = c * a + s * bb;
    hj[j + 1] = Cplx(0.0);
    cs.push_back(c);
    sn.push_back(s);
    g.push_back(-std::conj(s) * g[j]);
    g[j] *= c;
    h.push_back(std::move(hj));

    const double rel = std::abs(g[j + 1]) / beta;
    rep.residuals.push_back(rel);
    if (rel <= tol || breakdown) {
      converged = true;
      ++j;
      break;
    }
  }
  rep.iterations = j;
  rep.converged = converged;

  // Back substitution on the rotated, upper-triangular system.
  const int m = j;
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(n);
  if (m > 0) {
    std::vector<Cplx> y(m);
    for (int i = m - 1; i >= 0; --i) {
      Cplx acc = g[i];
      for (int k = i + 1; k < m; ++k) acc -= h[k][i] * y[k];
      y[i] = acc / h[i][i];
    }
    for (int i = 0; i < m; ++i) x += y[i] * v[i];
  }
  rep.true_residual = (op.apply(x) - b).norm() / (bnorm > 0.0 ? bnorm : 1.0);
  rep.seconds = elapsed();
  if (report != nullptr) *report = rep;
  return x;
}

namespace {

struct Problem {
  geom::Mesh mesh;
  mf::PointSourceSolution src;
  params::DecoupledParams d;
  params::DecoupleMatrix bm;
  params::CoefficientMatrices cm;
  geom::BoundaryQuadrature gq;
  geom::BoundaryQuadrature sq;
};

void validate_config(const SolveConfig& cfg) {
  if (cfg.degree < 1 || cfg.degree > 3) {
    throw std::invalid_argument("solve: degree must be 1, 2, or 3");
  }
  if (cfg.level < 0 || cfg.level > 8) {
    throw std::invalid_argument("solve: level must lie in [0, 8]");
  }
  if (!(cfg.tol > 0.0)) {
    throw std::invalid_argument("solve: tolerance must be positive");
  }
  if (cfg.max_iterations < 1) {
    throw std::invalid_argument("solve: iteration budget must be positive");
  }
  if (cfg.gamma_order < 2 || cfg.gamma_order > 20 || cfg.sigma_order < 2 ||
      cfg.sigma_order > 20) {
    throw std::invalid_argument("solve: quadrature orders must lie in [2, 20]");
  }
  if (cfg.threads < 1) {
    throw std::invalid_argument("solve: thread count must be positive");
  }
  if (cfg.geometry == GeometryKind::MshFile && cfg.msh_path.empty()) {
    throw std::invalid_argument("solve: msh geometry needs a file path");
  }
  if (cfg.bc == Bc::AdHoc && cfg.form != Form::Coupled) {
    throw std::invalid_argument(
        "solve: the ad-hoc condition is not diagonal in the modes; use the "
        "coupled form");
  }
  if (cfg.bc == Bc::NeumannBoth && cfg.geometry != GeometryKind::SquareHole) {
    throw std::invalid_argument(
        "solve: Neumann data on both boundaries is the square-with-hole "
        "manufactured setup");
  }
}

Problem build_problem(const SolveConfig& cfg, const params::PhysicalParams& p) {
  Problem pr;
  switch (cfg.geometry) {
    case GeometryKind::SquareHole:
      pr.mesh = geom::generate_square_with_hole(0.3 / double(1 << cfg.level));
      break;
    case GeometryKind::TuningFork:
      pr.mesh = geom::generate_tuning_fork(0.013);
      for (int l = 0; l < cfg.level; ++l) pr.mesh = geom::refine(pr.mesh);
      break;
    case GeometryKind::MshFile:
      pr.mesh = geom::read_msh(cfg.msh_path);
      for (int l = 0; l < cfg.level; ++l) pr.mesh = geom::refine(pr.mesh);
      break;
  }
  const Vec2 x0 = cfg.geometry == GeometryKind::SquareHole
                      ? mf::square_hole_source()
                      : mf::tuning_fork_source();
  if (geom::contains(pr.mesh, x0)) {
    throw std::invalid_argument("solve: source point lies in the flow domain");
  }
  pr.src = mf::point_source(p, x0);
  pr.d = pr.src.d;
  pr.bm = pr.src.bm;
  pr.cm = params::coefficient_matrices(p);
  pr.gq = geom::boundary_quadrature(pr.mesh, geom::FacetTag::Gamma,
                                    cfg.gamma_order);
  pr.sq = geom::boundary_quadrature(pr.mesh, geom::FacetTag::Sigma,
                                    cfg.sigma_order);
  return pr;
}

params::SigmaPair sigma_pair(SigmaChoice choice,
                             const params::DecoupledParams& d) {
  return choice == SigmaChoice::Zero ? params::zero_sigma()
                                     : params::wavenumber_sigma(d);
}

// Mode-space Neumann samples at the scatterer quadrature points, oriented
// from the scatterer into the flow domain (the representation-formula flux
// orientation). Formed from the physical data by the pointwise transform,
// matching how a solver would receive them.
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> mode_fluxes(const Problem& pr) {
  const auto& pts = pr.gq.points;
  Eigen::VectorXcd ft(static_cast<Eigen::Index>(pts.size()));
  Eigen::VectorXcd fp(static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec2 nu = -pts[i].n;
    const Eigen::Vector2cd g = mf::exact_neumann_at(pr.src, pts[i].x, nu);
    const Eigen::Vector2cd gv = params::mode_neumann_data(g(0), g(1), pr.bm);
    ft[static_cast<Eigen::Index>(i)] = gv(0);
    fp[static_cast<Eigen::Index>(i)] = gv(1);
  }
  return {std::move(ft), std::move(fp)};
}

// Surface load of pointwise data against one field's test traces.
Eigen::VectorXcd boundary_load(const fem::FeSpace& s,
                               const geom::BoundaryQuadrature& q, int field,
                               const fem::BoundaryFn& fn) {
  const lp::TraceOperator tr = lp::make_trace(s, q);
  Eigen::VectorXcd vals(static_cast<Eigen::Index>(q.points.size()));
  for (size_t i = 0; i < q.points.size(); ++i) {
    vals[static_cast<Eigen::Index>(i)] = fn(q.points[i].x, q.points[i].n);
  }
  return lp::adjoint_integrate(tr, vals, field);
}

GmresReport merge_reports(const GmresReport& a, const GmresReport& b) {
  GmresReport r = a.iterations >= b.iterations ? a : b;
  r.seconds = a.seconds + b.seconds;
  r.converged = a.converged && b.converged;
  r.true_residual = std::max(a.true_residual, b.true_residual);
  return r;
}

// One scalar Helmholtz mode under the requested outer condition.
Eigen::VectorXcd solve_mode(const SolveConfig& cfg, const Problem& pr,
                            const fem::FeSpace& s1, int mode,
                            const Eigen::VectorXcd& flux, GmresReport* rep) {
  const Cplx kappa = mode == 0 ? pr.d.k_t : pr.d.k_p;
  const params::SigmaPair sig = sigma_pair(cfg.sigma, pr.d);
  const Cplx sigma_m = mode == 0 ? sig.sigma_t : sig.sigma_p;

  // Data for the scalar weak form (stiffness coefficient one): the mode
  // transform of the physical Neumann data at the stored normal.
  const fem::BoundaryFn mode_data = [&pr, mode](const Vec2& x, const Vec2& n) {
    const Eigen::Vector2cd g = mf::exact_neumann_at(pr.src, x, n);
    return params::mode_neumann_data(g(0), g(1), pr.bm)(mode);
  };

  fem::SparseMatrix a_local;
  lp::DenseBlock block;
  bool has_block = false;
  Eigen::VectorXcd b = boundary_load(s1, pr.gq, 0, mode_data);
  switch (cfg.bc) {
    case Bc::NeumannBoth:
      a_local = fem::assemble_helmholtz(s1, kappa, std::nullopt, nullptr);
      b += boundary_load(s1, pr.sq, 0, mode_data);
      break;
    case Bc::Transmission:
      a_local = fem::assemble_helmholtz(s1, kappa, kappa, &pr.sq);
      break;
    case Bc::Nonlocal:
      a_local = fem::assemble_helmholtz(
          s1, kappa,
          sigma_m == Cplx(0.0) ? std::optional<Cplx>() : std::optional<Cplx>(sigma_m),
          sigma_m == Cplx(0.0) ? nullptr : &pr.sq);
      block = lp::scalar_nonlocal_block(s1, kappa, sigma_m, pr.gq, pr.sq,
                                        cfg.threads, /*with_robin=*/false);
      has_block = true;
      b += lp::scalar_nonlocal_rhs(s1, kappa, sigma_m, flux, pr.gq, pr.sq,
                                   cfg.threads);
      break;
    case Bc::AdHoc:
      throw std::invalid_argument("solve: ad-hoc condition is coupled-only");
  }

  CompositeOperator op{&a_local, has_block ? &block : nullptr};
  std::optional<LocalFactorization> fac;
  if (cfg.precondition) fac.emplace(a_local);
  return gmres(op, fac ? &*fac : nullptr, b, cfg.tol, cfg.max_iterations, rep);
}

SolveResult solve_coupled(const SolveConfig& cfg, const Problem& pr,
                          const params::PhysicalParams& p) {
  const fem::FeSpace s2 = fem::build_space(pr.mesh, cfg.degree, 2);
  fem::SparseMatrix a_local = fem::assemble_a0(s2, p);
  const params::SigmaPair sig = sigma_pair(cfg.sigma, pr.d);

  // Scatterer load: the weak form carries E times the Neumann data.
  std::vector<fem::BoundaryFn> escaled;
  for (int f = 0; f < 2; ++f) {
    escaled.push_back([&pr, f](const Vec2& x, const Vec2& n) {
      return pr.cm.e(f, f) * mf::exact_neumann_at(pr.src, x, n)(f);
    });
  }
  Eigen::VectorXcd b = fem::assemble_neumann_rhs(s2, escaled, pr.gq);

  lp::DenseBlock block;
  bool has_block = false;
  switch (cfg.bc) {
    case Bc::NeumannBoth:
      for (int f = 0; f < 2; ++f) b += boundary_load(s2, pr.sq, f, escaled[f]);
      break;
    case Bc::AdHoc:
    case Bc::Transmission: {
      const params::BcKind kind = cfg.bc == Bc::AdHoc
                                      ? params::BcKind::AdHoc
                                      : params::BcKind::Transmission;
      a_local += fem::assemble_local_bc(s2, params::bc_matrix(kind, p, pr.d),
                                        pr.sq);
      break;
    }
    case Bc::Nonlocal: {
      if (sig.sigma_t != Cplx(0.0) || sig.sigma_p != Cplx(0.0)) {
        Eigen::Matrix2cd sd = Eigen::Matrix2cd::Zero();
        sd(0, 0) = sig.sigma_t;
        sd(1, 1) = sig.sigma_p;
        params::BcMatrix robin{pr.cm.e * pr.bm.b_inv * sd * pr.bm.b,
                               params::BcKind::Transmission};
        a_local += fem::assemble_local_bc(s2, robin, pr.sq);
      }
      block = lp::assemble_nonlocal_block(s2, p, pr.d, pr.bm.b, sig, pr.gq,
                                          pr.sq, cfg.threads,
                                          /*with_robin=*/false);
      has_block = true;
      const auto [ft, fp] = mode_fluxes(pr);
      b += lp::assemble_nonlocal_rhs(s2, p, pr.d, sig, ft, fp, pr.gq, pr.sq,
                                     cfg.threads);
      break;
    }
  }

  CompositeOperator op{&a_local, has_block ? &block : nullptr};
  std::optional<LocalFactorization> fac;
  if (cfg.precondition) fac.emplace(a_local);
  SolveResult out;
  out.fields = gmres(op, fac ? &*fac : nullptr, b, cfg.tol,
                     cfg.max_iterations, &out.report);
  out.dofs = int(out.fields.size());
  return out;
}

SolveResult solve_modes(const SolveConfig& cfg, const Problem& pr) {
  const fem::FeSpace s1 = fem::build_space(pr.mesh, cfg.degree, 1);
  const auto [ft, fp] = mode_fluxes(pr);

  GmresReport rep_p;
  const Eigen::VectorXcd vp = solve_mode(cfg, pr, s1, 1, fp, &rep_p);
  Eigen::VectorXcd vt = Eigen::VectorXcd::Zero(s1.scalar_dofs);
  SolveResult out;
  if (cfg.form == Form::Decoupled) {
    GmresReport rep_t;
    vt = solve_mode(cfg, pr, s1, 0, ft, &rep_t);
    out.report = merge_reports(rep_t, rep_p);
  } else {
    out.report = rep_p;
  }

  out.fields.resize(2 * s1.scalar_dofs);
  for (int i = 0; i < s1.scalar_dofs; ++i) {
    const Eigen::Vector2cd u = pr.bm.b_inv * Eigen::Vector2cd(vt[i], vp[i]);
    out.fields[i] = u(0);
    out.fields[s1.scalar_dofs + i] = u(1);
  }
  out.dofs = int(out.fields.size());
  return out;
}

}  // namespace

SolveResult solve_morse_ingard(const SolveConfig& cfg,
                               const params::PhysicalParams& p) {
  validate_config(cfg);
  p.validate();
  const Problem pr = build_problem(cfg, p);

  SolveResult out = cfg.form == Form::Coupled ? solve_coupled(cfg, pr, p)
                                              : solve_modes(cfg, pr);
  out.mesh_vertices = int(pr.mesh.vertices.size());

  const fem::FeSpace s2 = fem::build_space(pr.mesh, cfg.degree, 2);
  const std::vector<fem::PointFn> exact = {
      [&pr](const Vec2& x) { return mf::exact_fields(pr.src, x)(0); },
      [&pr](const Vec2& x) { return mf::exact_fields(pr.src, x)(1); }};
  out.rel_l2 = fem::l2_error(s2, out.fields, exact);
  return out;
}

}  // namespace miwave::solver
