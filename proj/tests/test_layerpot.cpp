#include "miwave/layerpot.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <set>
#include <vector>

#include "miwave/fem.hpp"
#include "miwave/geometry.hpp"
#include "miwave/params.hpp"
#include "miwave/specfun.hpp"

namespace {

using miwave::Cplx;
using Eigen::Vector2d;
namespace fem = miwave::fem;
namespace geom = miwave::geom;
namespace lp = miwave::layerpot;
namespace params = miwave::params;
namespace specfun = miwave::specfun;

const Cplx kI(0.0, 1.0);

params::PhysicalParams physical() { return params::PhysicalParams{}; }

// Recursive adaptive Simpson rule for complex integrands on [a, b].
template <class Fn>
Cplx simpson_step(const Fn& f, double a, double b, Cplx fa, Cplx fm, Cplx fb,
                  Cplx whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const Cplx flm = f(lm);
  const Cplx frm = f(rm);
  const Cplx left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const Cplx right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class Fn>
Cplx integrate(const Fn& f, double a, double b, double tol = 1e-13) {
  const Cplx fa = f(a);
  const Cplx fm = f(0.5 * (a + b));
  const Cplx fb = f(b);
  const Cplx whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, 40);
}

// Straight test panel with hand-placed Gauss points.
struct Panel {
  Vector2d a, b, normal;
  double length;
  lp::Sources sources;
  std::vector<double> t;  // panel parameters of the nodes
};

Panel make_panel(const Vector2d& a, const Vector2d& b, int order) {
  Panel p;
  p.a = a;
  p.b = b;
  const Vector2d d = b - a;
  p.length = d.norm();
  p.normal = Vector2d(d.y(), -d.x()) / p.length;
  std::vector<double> t, w;
  geom::gauss_legendre(order, &t, &w);
  p.t = t;
  for (int i = 0; i < order; ++i) {
    p.sources.x.push_back(a + t[i] * d);
    p.sources.w.push_back(w[i] * p.length);
    p.sources.n.push_back(p.normal);
  }
  return p;
}

Eigen::VectorXcd random_complex(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Eigen::VectorXcd v(n);
  for (int i = 0; i < n; ++i) v[i] = Cplx(dist(gen), dist(gen));
  return v;
}

std::vector<Vector2d> quad_points(const geom::BoundaryQuadrature& q) {
  std::vector<Vector2d> x;
  for (const auto& p : q.points) x.push_back(p.x);
  return x;
}

std::vector<Vector2d> quad_normals(const geom::BoundaryQuadrature& q) {
  std::vector<Vector2d> n;
  for (const auto& p : q.points) n.push_back(p.n);
  return n;
}

TEST(Evaluators, ZeroDensityGivesZeroPotentials) {
  const Panel p = make_panel({0.0, -0.3}, {0.4, 0.2}, 6);
  lp::Targets tgt;
  tgt.x = {{1.0, 0.5}, {-0.7, 0.9}};
  tgt.n = {{1.0, 0.0}, {0.0, 1.0}};
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(6);
  for (const auto& out : {lp::eval_single_layer(Cplx(1.0), p.sources, zero, tgt),
                          lp::eval_double_layer(Cplx(1.0), p.sources, zero, tgt)}) {
    EXPECT_EQ(out.value.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(out.dn.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Evaluators, SingleLayerMatchesAdaptiveQuadratureOnAPanel) {
  const Cplx kappa(1.5, 0.3);
  const Panel p = make_panel({0.0, -0.3}, {0.4, 0.2}, 12);
  const auto density_fn = [](double t) { return Cplx(1.0 + 0.3 * t, 0.2 * t * t); };
  Eigen::VectorXcd density(12);
  for (int i = 0; i < 12; ++i) density[i] = density_fn(p.t[i]);

  lp::Targets tgt;
  tgt.x = {{1.2, 0.9}};
  tgt.n = {{0.8, 0.6}};
  const auto out = lp::eval_single_layer(kappa, p.sources, density, tgt);

  const Vector2d d = p.b - p.a;
  const Cplx val = integrate([&](double t) {
    const Vector2d r = tgt.x[0] - (p.a + t * d);
    return specfun::kernel(kappa, r) * density_fn(t) * p.length;
  }, 0.0, 1.0);
  const Cplx dn = integrate([&](double t) {
    const Vector2d r = tgt.x[0] - (p.a + t * d);
    return specfun::kernel_dnx(kappa, r, tgt.n[0]) * density_fn(t) * p.length;
  }, 0.0, 1.0);
  EXPECT_NEAR(std::abs(out.value[0] - val), 0.0, 5e-12);
  EXPECT_NEAR(std::abs(out.dn[0] - dn), 0.0, 5e-12);
}

TEST(Evaluators, DoubleLayerMatchesAdaptiveQuadratureOnAPanel) {
  const Cplx kappa(1.5, 0.3);
  const Panel p = make_panel({0.0, -0.3}, {0.4, 0.2}, 12);
  const auto density_fn = [](double t) { return Cplx(0.7 - 0.2 * t, 0.4 * t); };
  Eigen::VectorXcd density(12);
  for (int i = 0; i < 12; ++i) density[i] = density_fn(p.t[i]);

  lp::Targets tgt;
  tgt.x = {{1.2, 0.9}};
  tgt.n = {{0.8, 0.6}};
  const auto out = lp::eval_double_layer(kappa, p.sources, density, tgt);

  const Vector2d d = p.b - p.a;
  const Cplx val = integrate([&](double t) {
    const Vector2d r = tgt.x[0] - (p.a + t * d);
    return specfun::kernel_dny(kappa, r, p.normal) * density_fn(t) * p.length;
  }, 0.0, 1.0);
  const Cplx dn = integrate([&](double t) {
    const Vector2d r = tgt.x[0] - (p.a + t * d);
    return specfun::kernel_dnx_dny(kappa, r, tgt.n[0], p.normal) * density_fn(t) *
           p.length;
  }, 0.0, 1.0);
  EXPECT_NEAR(std::abs(out.value[0] - val), 0.0, 5e-12);
  EXPECT_NEAR(std::abs(out.dn[0] - dn), 0.0, 5e-12);
}

TEST(Evaluators, PotentialsAreLinearInTheDensity) {
  const Panel p = make_panel({-0.2, 0.0}, {0.3, 0.4}, 9);
  const Eigen::VectorXcd f = random_complex(9, 11);
  const Eigen::VectorXcd g = random_complex(9, 22);
  const Cplx alpha(0.6, -1.1), beta(-0.4, 0.25);
  lp::Targets tgt;
  tgt.x = {{1.0, -0.8}, {0.9, 1.1}, {-1.3, 0.2}};
  tgt.n = {{0.0, 1.0}, {1.0, 0.0}, {0.6, -0.8}};
  const Cplx kappa(2.0, 0.1);

  const auto combo =
      lp::eval_single_layer(kappa, p.sources, alpha * f + beta * g, tgt);
  const auto yf = lp::eval_single_layer(kappa, p.sources, f, tgt);
  const auto yg = lp::eval_single_layer(kappa, p.sources, g, tgt);
  EXPECT_LT((combo.value - alpha * yf.value - beta * yg.value).norm(),
            1e-14 * combo.value.norm());
  EXPECT_LT((combo.dn - alpha * yf.dn - beta * yg.dn).norm(),
            1e-14 * combo.dn.norm());
}

TEST(Evaluators, CoincidentTargetThrows) {
  const Panel p = make_panel({0.0, 0.0}, {1.0, 0.0}, 5);
  const Eigen::VectorXcd density = Eigen::VectorXcd::Ones(5);
  lp::Targets tgt;
  tgt.x = {p.sources.x[3]};
  EXPECT_THROW(lp::eval_single_layer(Cplx(1.0), p.sources, density, tgt),
               std::invalid_argument);
  EXPECT_THROW(lp::eval_double_layer(Cplx(1.0), p.sources, density, tgt),
               std::invalid_argument);
}

TEST(Evaluators, ThreadCountDoesNotChangeValues) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 6);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);
  const lp::Sources src = lp::sources_from_quadrature(gq, true);
  const Eigen::VectorXcd density =
      random_complex(static_cast<int>(src.x.size()), 7);
  lp::Targets tgt;
  tgt.x = quad_points(sq);
  tgt.n = quad_normals(sq);
  const auto a = lp::eval_double_layer(Cplx(1.0, 0.2), src, density, tgt, 1);
  const auto b = lp::eval_double_layer(Cplx(1.0, 0.2), src, density, tgt, 4);
  EXPECT_TRUE((a.value.array() == b.value.array()).all());
  EXPECT_TRUE((a.dn.array() == b.dn.array()).all());
}

// A radiating wave u with its source inside the scatterer satisfies
//   u = D[u|_Gamma] - S[du/dnu|_Gamma]   outside Gamma,
// with the layer normals pointing from the scatterer into the domain. The
// identity holds exactly on the discretized boundary, so high-order panel
// quadrature must reproduce it to near machine precision.
TEST(GreenIdentity, ReconstructsARadiatingFieldOnTheOuterBoundary) {
  const Cplx kappa(1.0);
  const auto run = [&](const geom::Mesh& m, int order) {
    const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);
    lp::Targets tgt;
    tgt.x = quad_points(sq);
    tgt.n = quad_normals(sq);
    const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, order);
    const lp::Sources src = lp::sources_from_quadrature(gq, true);
    const int ns = static_cast<int>(src.x.size());
    Eigen::VectorXcd u_gamma(ns), flux(ns);
    for (int i = 0; i < ns; ++i) {
      u_gamma[i] = specfun::kernel(kappa, src.x[i]);
      flux[i] = specfun::kernel_dnx(kappa, src.x[i], src.n[i]);
    }
    const auto dl = lp::eval_double_layer(kappa, src, u_gamma, tgt);
    const auto sl = lp::eval_single_layer(kappa, src, flux, tgt);
    double err = 0.0, err_dn = 0.0;
    for (int i = 0; i < static_cast<int>(tgt.x.size()); ++i) {
      const Cplx u = specfun::kernel(kappa, tgt.x[i]);
      const Cplx du = specfun::kernel_dnx(kappa, tgt.x[i], tgt.n[i]);
      err = std::max(err, std::abs(dl.value[i] - sl.value[i] - u));
      err_dn = std::max(err_dn, std::abs(dl.dn[i] - sl.dn[i] - du));
    }
    return std::make_pair(err, err_dn);
  };

  // On a fine boundary the 8-point rule reproduces the identity to machine
  // noise; the remaining error is pure quadrature error, which a midpoint
  // rule on a coarse boundary makes visible.
  const auto [err8, err8_dn] = run(geom::refine(geom::generate_square_with_hole(0.1)), 8);
  const geom::Mesh coarse = geom::generate_square_with_hole(0.3);
  const auto [c1, c1_dn] = run(coarse, 1);
  const auto [c8, c8_dn] = run(coarse, 8);
  std::printf("green fine8 %.2e %.2e coarse1 %.2e %.2e coarse8 %.2e %.2e\n",
              err8, err8_dn, c1, c1_dn, c8, c8_dn);
  EXPECT_LT(err8, 1e-12);
  EXPECT_LT(err8_dn, 1e-12);
  EXPECT_GT(c1, 100.0 * c8);
  EXPECT_GT(c1_dn, 100.0 * c8_dn);
}

TEST(GreenIdentity, FlippedNormalsPinTheSign) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 8);
  const Cplx kappa(1.0);
  lp::Targets tgt;
  tgt.x = quad_points(sq);

  // Keep the mesh normals (pointing out of the flow domain, i.e. into the
  // scatterer) and differentiate along them: the reconstruction flips sign.
  const lp::Sources src = lp::sources_from_quadrature(gq, false);
  const int ns = static_cast<int>(src.x.size());
  Eigen::VectorXcd u_gamma(ns), flux(ns);
  for (int i = 0; i < ns; ++i) {
    u_gamma[i] = specfun::kernel(kappa, src.x[i]);
    flux[i] = specfun::kernel_dnx(kappa, src.x[i], src.n[i]);
  }
  const auto dl = lp::eval_double_layer(kappa, src, u_gamma, tgt);
  const auto sl = lp::eval_single_layer(kappa, src, flux, tgt);

  double err_minus = 0.0, err_plus = 0.0, scale = 0.0;
  for (int i = 0; i < static_cast<int>(tgt.x.size()); ++i) {
    const Cplx u = specfun::kernel(kappa, tgt.x[i]);
    err_minus = std::max(err_minus, std::abs(dl.value[i] - sl.value[i] + u));
    err_plus = std::max(err_plus, std::abs(dl.value[i] - sl.value[i] - u));
    scale = std::max(scale, std::abs(u));
  }
  EXPECT_LT(err_minus, 1e-5);
  EXPECT_GT(err_plus, 0.5 * scale);
}

TEST(Traces, ValuesMatchElementEvaluation) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const fem::FeSpace s = fem::build_space(m, 3, 2);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 5);
  const lp::TraceOperator tr = lp::make_trace(s, gq);
  const Eigen::VectorXcd u = random_complex(s.dofs(), 31);
  for (int field = 0; field < 2; ++field) {
    const Eigen::VectorXcd tv = lp::trace_values(tr, u, field);
    ASSERT_EQ(tv.size(), static_cast<int>(gq.points.size()));
    for (int i = 0; i < tv.size(); i += 7) {
      const auto& qp = gq.points[i];
      const Cplx ref = fem::evaluate(s, u, qp.cell, qp.xi, qp.eta, field);
      EXPECT_NEAR(std::abs(tv[i] - ref), 0.0, 1e-13);
    }
  }
}

TEST(Traces, AdjointIsTheTransposeOfTheRule) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const fem::FeSpace s = fem::build_space(m, 2, 2);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 3);
  const lp::TraceOperator tr = lp::make_trace(s, sq);
  const int np = static_cast<int>(sq.points.size());

  // <values, trace(u)>_rule == u . adjoint(values), without conjugation.
  const Eigen::VectorXcd u = random_complex(s.dofs(), 5);
  const Eigen::VectorXcd vals = random_complex(np, 6);
  const Eigen::VectorXcd tv = lp::trace_values(tr, u, 1);
  Cplx lhs(0.0);
  for (int i = 0; i < np; ++i) lhs += sq.points[i].w * vals[i] * tv[i];
  const Cplx rhs = u.transpose() * lp::adjoint_integrate(tr, vals, 1);
  EXPECT_NEAR(std::abs(lhs - rhs), 0.0, 1e-13 * std::abs(lhs));

  // Integrating the constant 1 gives the total arc length: the outer square
  // has perimeter 12 and its facets are straight.
  const Eigen::VectorXcd load =
      lp::adjoint_integrate(tr, Eigen::VectorXcd::Ones(np), 0);
  EXPECT_NEAR(std::abs(load.sum() - 12.0), 0.0, 1e-12);

  // Only dofs supported on the quadrature boundary receive contributions.
  const std::vector<int> sdofs = fem::boundary_dofs(s, geom::FacetTag::Sigma);
  const std::set<int> on_sigma(sdofs.begin(), sdofs.end());
  for (int i = 0; i < s.scalar_dofs; ++i) {
    if (on_sigma.count(i) == 0) {
      EXPECT_EQ(std::abs(load[i]), 0.0);
    }
  }
  EXPECT_EQ(load.tail(s.scalar_dofs).cwiseAbs().maxCoeff(), 0.0);

  EXPECT_THROW(lp::trace_values(tr, Eigen::VectorXcd::Zero(3), 0),
               std::invalid_argument);
  EXPECT_THROW(lp::trace_values(tr, u, 2), std::invalid_argument);
  EXPECT_THROW(lp::adjoint_integrate(tr, Eigen::VectorXcd::Zero(np + 1), 0),
               std::invalid_argument);
}

struct BlockSetup {
  geom::Mesh mesh;
  params::PhysicalParams p;
  params::DecoupledParams d;
  params::DecoupleMatrix bm;
  geom::BoundaryQuadrature gq, sq;

  explicit BlockSetup(double h, int gamma_order = 4, int sigma_order = 2)
      : mesh(geom::generate_square_with_hole(h)),
        p(physical()),
        d(params::derive_decoupled(p)),
        bm(params::decouple_matrix(p, d)),
        gq(geom::boundary_quadrature(mesh, geom::FacetTag::Gamma, gamma_order)),
        sq(geom::boundary_quadrature(mesh, geom::FacetTag::Sigma, sigma_order)) {}
};

TEST(NonlocalBlock, RowsAndColumnsAreBoundarySupported) {
  BlockSetup bs(0.3);
  const fem::FeSpace s = fem::build_space(bs.mesh, 2, 2);
  const lp::DenseBlock blk = lp::assemble_nonlocal_block(
      s, bs.p, bs.d, bs.bm.b, params::zero_sigma(), bs.gq, bs.sq);

  const std::vector<int> gdofs = fem::boundary_dofs(s, geom::FacetTag::Gamma);
  const std::vector<int> sdofs = fem::boundary_dofs(s, geom::FacetTag::Sigma);
  const std::set<int> on_gamma(gdofs.begin(), gdofs.end());
  const std::set<int> on_sigma(sdofs.begin(), sdofs.end());

  EXPECT_EQ(blk.dofs, s.dofs());
  ASSERT_EQ(static_cast<int>(blk.rows.size()), 2 * static_cast<int>(sdofs.size()));
  for (int r : blk.rows) EXPECT_TRUE(on_sigma.count(r % s.scalar_dofs) == 1);
  for (int c : blk.cols) {
    const int sc = c % s.scalar_dofs;
    EXPECT_TRUE(on_gamma.count(sc) == 1 || on_sigma.count(sc) == 1);
  }

  // With sigma = 0 the Robin part vanishes, so outer-boundary columns are
  // exactly zero while scatterer columns carry the layer coupling.
  const Eigen::MatrixXcd full = lp::materialize(blk);
  double sigma_cols = 0.0, gamma_cols = 0.0;
  for (int c : blk.cols) {
    const int sc = c % s.scalar_dofs;
    if (on_sigma.count(sc) == 1) {
      sigma_cols = std::max(sigma_cols, full.col(c).cwiseAbs().maxCoeff());
    } else {
      gamma_cols = std::max(gamma_cols, full.col(c).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_EQ(sigma_cols, 0.0);
  EXPECT_GT(gamma_cols, 0.0);

  // With the wavenumber shift the Robin mass appears on the outer boundary.
  const lp::DenseBlock blk_w = lp::assemble_nonlocal_block(
      s, bs.p, bs.d, bs.bm.b, params::wavenumber_sigma(bs.d), bs.gq, bs.sq);
  const Eigen::MatrixXcd full_w = lp::materialize(blk_w);
  double sigma_cols_w = 0.0;
  for (int c : blk_w.cols) {
    if (on_sigma.count(c % s.scalar_dofs) == 1) {
      sigma_cols_w = std::max(sigma_cols_w, full_w.col(c).cwiseAbs().maxCoeff());
    }
  }
  EXPECT_GT(sigma_cols_w, 1e-6);
}

// With the mode matrix set to the identity and unit coefficient scales the
// coupled assembly must reduce to two independent scalar problems.
TEST(NonlocalBlock, IdentityModeMatrixReducesToScalarBlocks) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 4);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);
  params::PhysicalParams p;
  p.gamma = 1.4;
  p.m = 1.0;
  p.lambda = 0.0;
  params::DecoupledParams d;
  d.k_t = Cplx(2.0, 0.1);
  d.k_p = Cplx(1.0, 0.05);
  d.t_plus = Cplx(0.3, 0.0);
  d.t_minus = Cplx(-0.5, 0.0);
  const params::SigmaPair sigma{Cplx(0.3, 0.1), Cplx(0.7, -0.2)};

  const fem::FeSpace s2 = fem::build_space(m, 1, 2);
  const fem::FeSpace s1 = fem::build_space(m, 1, 1);
  const int n = s1.scalar_dofs;

  const lp::DenseBlock coupled = lp::assemble_nonlocal_block(
      s2, p, d, Eigen::Matrix2cd::Identity(), sigma, gq, sq);
  const lp::DenseBlock bt =
      lp::scalar_nonlocal_block(s1, d.k_t, sigma.sigma_t, gq, sq);
  const lp::DenseBlock bp =
      lp::scalar_nonlocal_block(s1, d.k_p, sigma.sigma_p, gq, sq);

  const Eigen::MatrixXcd full = lp::materialize(coupled);
  const Eigen::MatrixXcd ft = lp::materialize(bt);
  const Eigen::MatrixXcd fp = lp::materialize(bp);
  const double scale = ft.cwiseAbs().maxCoeff();
  ASSERT_GT(scale, 0.0);
  EXPECT_LT((full.block(0, 0, n, n) - ft).cwiseAbs().maxCoeff(), 1e-14 * scale);
  EXPECT_LT((full.block(n, n, n, n) - fp).cwiseAbs().maxCoeff(), 1e-14 * scale);
  EXPECT_EQ(full.block(0, n, n, n).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(full.block(n, 0, n, n).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NonlocalBlock, ThermalModeUnderflowsAcrossTheStandoff) {
  BlockSetup bs(0.3);
  const fem::FeSpace s = fem::build_space(bs.mesh, 2, 2);
  const params::SigmaPair sigma = params::wavenumber_sigma(bs.d);

  // Shifted thermal double layer of an O(1) boundary trace, evaluated on the
  // outer boundary: the standoff distance is 1.5 - 2/3, and exp(-Im k_t
  // times that) is below 1e-40, so the wave is dead on arrival.
  const fem::FeSpace s1 = fem::build_space(bs.mesh, 2, 1);
  const Eigen::VectorXcd smooth = fem::interpolate(
      s1, {[](const Vector2d& x) { return std::exp(0.2 * x.x() + 0.3 * x.y()); }});
  const lp::TraceOperator trg = lp::make_trace(s1, bs.gq);
  const lp::TraceOperator trs = lp::make_trace(s1, bs.sq);
  const Eigen::VectorXcd density = lp::trace_values(trg, smooth, 0);
  const lp::Sources src = lp::sources_from_quadrature(bs.gq, true);
  lp::Targets tgt;
  tgt.x = quad_points(bs.sq);
  tgt.n = quad_normals(bs.sq);
  const auto dl = lp::eval_double_layer(bs.d.k_t, src, density, tgt);
  const Eigen::VectorXcd w_t = kI * sigma.sigma_t * dl.value - dl.dn;
  EXPECT_LT(w_t.cwiseAbs().maxCoeff(), 1e-38);
  EXPECT_LT(lp::adjoint_integrate(trs, w_t, 0).norm(), 1e-30);

  // The assembled coupled block stays finite regardless.
  const lp::DenseBlock blk =
      lp::assemble_nonlocal_block(s, bs.p, bs.d, bs.bm.b, sigma, bs.gq, bs.sq);
  EXPECT_TRUE(blk.a.allFinite());
  EXPECT_GT(blk.a.cwiseAbs().maxCoeff(), 0.0);
}

TEST(NonlocalBlock, ThreadCountDoesNotChangeTheMatrix) {
  BlockSetup bs(0.3);
  const fem::FeSpace s = fem::build_space(bs.mesh, 1, 2);
  const params::SigmaPair sigma = params::wavenumber_sigma(bs.d);
  const lp::DenseBlock a =
      lp::assemble_nonlocal_block(s, bs.p, bs.d, bs.bm.b, sigma, bs.gq, bs.sq, 1);
  const lp::DenseBlock b =
      lp::assemble_nonlocal_block(s, bs.p, bs.d, bs.bm.b, sigma, bs.gq, bs.sq, 3);
  ASSERT_EQ(a.rows, b.rows);
  ASSERT_EQ(a.cols, b.cols);
  EXPECT_TRUE((a.a.array() == b.a.array()).all());
}

TEST(NonlocalBlock, RejectsBadSpacesTagsAndModes) {
  BlockSetup bs(0.3);
  const fem::FeSpace s2 = fem::build_space(bs.mesh, 1, 2);
  const fem::FeSpace s1 = fem::build_space(bs.mesh, 1, 1);
  const params::SigmaPair sigma = params::zero_sigma();

  EXPECT_THROW(lp::assemble_nonlocal_block(s1, bs.p, bs.d, bs.bm.b, sigma, bs.gq,
                                           bs.sq),
               std::invalid_argument);
  EXPECT_THROW(lp::scalar_nonlocal_block(s2, Cplx(1.0), Cplx(1.0), bs.gq, bs.sq),
               std::invalid_argument);
  // Swapped boundary rules.
  EXPECT_THROW(lp::assemble_nonlocal_block(s2, bs.p, bs.d, bs.bm.b, sigma, bs.sq,
                                           bs.gq),
               std::invalid_argument);
  EXPECT_THROW(lp::scalar_nonlocal_rhs(s1, Cplx(1.0), Cplx(1.0),
                                       Eigen::VectorXcd::Zero(4), bs.sq, bs.gq),
               std::invalid_argument);
  // Singular mode matrix.
  EXPECT_THROW(lp::assemble_nonlocal_block(s2, bs.p, bs.d,
                                           Eigen::Matrix2cd::Ones(), sigma,
                                           bs.gq, bs.sq),
               std::invalid_argument);
  // Flux sampled on the wrong rule.
  const int ng = static_cast<int>(bs.gq.points.size());
  EXPECT_THROW(lp::assemble_nonlocal_rhs(s2, bs.p, bs.d, sigma,
                                         Eigen::VectorXcd::Zero(ng + 1),
                                         Eigen::VectorXcd::Zero(ng + 1), bs.gq,
                                         bs.sq),
               std::invalid_argument);
}

TEST(DenseBlockOps, ApplyMatchesMaterialize) {
  BlockSetup bs(0.3);
  const fem::FeSpace s = fem::build_space(bs.mesh, 2, 2);
  const lp::DenseBlock blk = lp::assemble_nonlocal_block(
      s, bs.p, bs.d, bs.bm.b, params::wavenumber_sigma(bs.d), bs.gq, bs.sq);
  const Eigen::VectorXcd x = random_complex(blk.dofs, 99);
  const Eigen::VectorXcd y1 = lp::apply(blk, x);
  const Eigen::VectorXcd y2 = lp::materialize(blk) * x;
  EXPECT_LT((y1 - y2).norm(), 1e-14 * y2.norm());
  EXPECT_THROW(lp::apply(blk, Eigen::VectorXcd::Zero(blk.dofs + 1)),
               std::invalid_argument);
}

TEST(NonlocalRhs, ZeroFluxGivesZeroLoadAndTheMapIsLinear) {
  BlockSetup bs(0.3, 4, 2);
  const fem::FeSpace s = fem::build_space(bs.mesh, 2, 2);
  const params::SigmaPair sigma = params::wavenumber_sigma(bs.d);
  const int ng = static_cast<int>(bs.gq.points.size());

  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(ng);
  EXPECT_EQ(lp::assemble_nonlocal_rhs(s, bs.p, bs.d, sigma, zero, zero, bs.gq,
                                      bs.sq)
                .cwiseAbs()
                .maxCoeff(),
            0.0);

  const Eigen::VectorXcd ft = random_complex(ng, 3);
  const Eigen::VectorXcd fp = random_complex(ng, 4);
  const Eigen::VectorXcd both =
      lp::assemble_nonlocal_rhs(s, bs.p, bs.d, sigma, ft, fp, bs.gq, bs.sq);
  const Eigen::VectorXcd only_t =
      lp::assemble_nonlocal_rhs(s, bs.p, bs.d, sigma, ft, zero, bs.gq, bs.sq);
  const Eigen::VectorXcd only_p =
      lp::assemble_nonlocal_rhs(s, bs.p, bs.d, sigma, zero, fp, bs.gq, bs.sq);
  EXPECT_LT((both - only_t - only_p).norm(), 1e-13 * both.norm());

  const Cplx lam(0.7, -1.3);
  const Eigen::VectorXcd scaled = lp::assemble_nonlocal_rhs(
      s, bs.p, bs.d, sigma, (lam * ft).eval(), (lam * fp).eval(), bs.gq, bs.sq);
  EXPECT_LT((scaled - lam * both).norm(), 1e-13 * scaled.norm());

  // Support: the load lives on outer-boundary dofs of both fields.
  const std::vector<int> sdofs = fem::boundary_dofs(s, geom::FacetTag::Sigma);
  const std::set<int> on_sigma(sdofs.begin(), sdofs.end());
  for (int i = 0; i < s.dofs(); ++i) {
    if (on_sigma.count(i % s.scalar_dofs) == 0) {
      EXPECT_EQ(std::abs(both[i]), 0.0);
    }
  }
}

// Feeding a flux through one mode only must reproduce the scalar assembly
// times the mode-combination coefficients t_minus/(t_minus - t_plus) (field
// T) and -1/(t_minus - t_plus) (field P); the viscous and diffusive scales
// cancel between the coefficient and mode matrices.
TEST(NonlocalRhs, FieldCombinationMatchesScalarAssembly) {
  BlockSetup bs(0.3, 4, 2);
  const fem::FeSpace s2 = fem::build_space(bs.mesh, 2, 2);
  const fem::FeSpace s1 = fem::build_space(bs.mesh, 2, 1);
  const params::SigmaPair sigma = params::wavenumber_sigma(bs.d);
  const int ng = static_cast<int>(bs.gq.points.size());
  const int n = s1.scalar_dofs;
  const Cplx den = bs.d.t_minus - bs.d.t_plus;

  Eigen::VectorXcd smooth(ng);
  for (int i = 0; i < ng; ++i) {
    smooth[i] = specfun::kernel(Cplx(1.0), bs.gq.points[i].x - Vector2d(0.1, 0.05));
  }
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(ng);

  const Eigen::VectorXcd via_t =
      lp::assemble_nonlocal_rhs(s2, bs.p, bs.d, sigma, smooth, zero, bs.gq, bs.sq);
  const Eigen::VectorXcd ref_t =
      lp::scalar_nonlocal_rhs(s1, bs.d.k_t, sigma.sigma_t, smooth, bs.gq, bs.sq);
  EXPECT_LT((via_t.head(n) - (bs.d.t_minus / den) * ref_t).norm(),
            1e-13 * ref_t.norm());
  EXPECT_LT((via_t.tail(n) - (-1.0 / den) * ref_t).norm(), 1e-13 * ref_t.norm());

  const Eigen::VectorXcd via_p =
      lp::assemble_nonlocal_rhs(s2, bs.p, bs.d, sigma, zero, smooth, bs.gq, bs.sq);
  const Eigen::VectorXcd ref_p =
      lp::scalar_nonlocal_rhs(s1, bs.d.k_p, sigma.sigma_p, smooth, bs.gq, bs.sq);
  EXPECT_LT((via_p.head(n) - (-bs.d.t_plus / den) * ref_p).norm(),
            1e-13 * ref_p.norm());
  EXPECT_LT((via_p.tail(n) - (1.0 / den) * ref_p).norm(), 1e-13 * ref_p.norm());
}

// Panel rules of order 10 and 12 agree to well below the discretization
// error, so order 10 is on the quadrature plateau for these standoffs.
TEST(QuadratureRules, GammaOrdersTenAndTwelveAgree) {
  const geom::Mesh m = geom::generate_square_with_hole(0.1);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 1);
  lp::Targets tgt;
  tgt.x = quad_points(sq);
  tgt.n = quad_normals(sq);
  const Vector2d x0(0.1, 0.05);
  const params::DecoupledParams d = params::derive_decoupled(physical());

  for (const Cplx kappa : {Cplx(1.0), d.k_p}) {
    std::vector<lp::PotentialValues> sl, dl;
    for (const int order : {10, 12}) {
      const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, order);
      const lp::Sources src = lp::sources_from_quadrature(gq, true);
      const int ns = static_cast<int>(src.x.size());
      Eigen::VectorXcd density(ns);
      for (int i = 0; i < ns; ++i) {
        density[i] = specfun::kernel(kappa, src.x[i] - x0);
      }
      sl.push_back(lp::eval_single_layer(kappa, src, density, tgt));
      dl.push_back(lp::eval_double_layer(kappa, src, density, tgt));
    }
    EXPECT_LT((sl[0].value - sl[1].value).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((sl[0].dn - sl[1].dn).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((dl[0].value - dl[1].value).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((dl[0].dn - dl[1].dn).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ScalarPath, RobinColumnsMatchTheImpedanceOperator) {
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const fem::FeSpace s = fem::build_space(m, 2, 1);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 4);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);
  const Cplx kappa(1.3, 0.2), sigma(0.8, -0.3);

  const lp::DenseBlock blk = lp::scalar_nonlocal_block(s, kappa, sigma, gq, sq);
  const fem::SparseMatrix with_imp = fem::assemble_helmholtz(s, kappa, sigma, &sq);
  const fem::SparseMatrix without = fem::assemble_helmholtz(s, kappa, {}, nullptr);

  // A vector supported on the outer boundary only sees the Robin mass, which
  // must agree with the impedance term of the volumetric assembly.
  Eigen::VectorXcd x = Eigen::VectorXcd::Zero(s.dofs());
  const std::vector<int> sdofs = fem::boundary_dofs(s, geom::FacetTag::Sigma);
  const Eigen::VectorXcd rnd = random_complex(static_cast<int>(sdofs.size()), 17);
  for (std::size_t i = 0; i < sdofs.size(); ++i) x[sdofs[i]] = rnd[i];

  const Eigen::VectorXcd y1 = lp::apply(blk, x);
  const Eigen::VectorXcd y2 = (with_imp - without) * x;
  EXPECT_GT(y2.norm(), 0.0);
  EXPECT_LT((y1 - y2).norm(), 1e-13 * y2.norm());
}

// The Robin mass can be kept out of the dense block and assembled into the
// sparse part instead; both placements must add up to the same operator.
TEST(NonlocalBlock, RobinTermCanMoveToTheSparsePart) {
  BlockSetup bs(0.3);
  const fem::FeSpace s = fem::build_space(bs.mesh, 2, 2);
  const params::SigmaPair sig = params::wavenumber_sigma(bs.d);

  const lp::DenseBlock full = lp::assemble_nonlocal_block(
      s, bs.p, bs.d, bs.bm.b, sig, bs.gq, bs.sq, 1, true);
  const lp::DenseBlock bare = lp::assemble_nonlocal_block(
      s, bs.p, bs.d, bs.bm.b, sig, bs.gq, bs.sq, 1, false);

  params::BcMatrix robin;
  robin.kind = params::BcKind::Transmission;
  Eigen::Matrix2cd sd = Eigen::Matrix2cd::Zero();
  sd(0, 0) = sig.sigma_t;
  sd(1, 1) = sig.sigma_p;
  robin.a = params::coefficient_matrices(bs.p).e * bs.bm.b_inv * sd * bs.bm.b;
  const fem::SparseMatrix mass = fem::assemble_local_bc(s, robin, bs.sq);

  const Eigen::VectorXcd x = random_complex(s.dofs(), 23);
  const Eigen::VectorXcd y_full = lp::apply(full, x);
  const Eigen::VectorXcd y_split = lp::apply(bare, x) + mass * x;
  EXPECT_GT(y_full.norm(), 0.0);
  EXPECT_LT((y_full - y_split).norm(), 1e-13 * y_full.norm());

  // Without the Robin mass, outer-boundary columns vanish identically: the
  // layer coupling only reads scatterer traces.
  Eigen::VectorXcd xs = Eigen::VectorXcd::Zero(s.dofs());
  for (int sd2 : fem::boundary_dofs(s, geom::FacetTag::Sigma)) {
    xs[sd2] = 1.0;
    xs[s.scalar_dofs + sd2] = 1.0;
  }
  EXPECT_EQ(lp::apply(bare, xs).norm(), 0.0);
}

// Plugging the interpolant of an exact radiating solution into the fully
// assembled scalar system leaves a residual that is pure discretization
// error, so it must shrink under refinement at the interpolation rate.
TEST(ScalarPath, GreensResidualDecaysUnderRefinement) {
  const Cplx kappa(1.0), sigma(1.0);
  std::vector<double> rel;
  geom::Mesh m = geom::generate_square_with_hole(0.3);
  for (int level = 0; level < 3; ++level) {
    if (level > 0) m = geom::refine(m);
    const fem::FeSpace s = fem::build_space(m, 2, 1);
    const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 10);
    const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 6);

    const Eigen::VectorXcd u_i = fem::interpolate(
        s, {[&](const Vector2d& x) { return specfun::kernel(kappa, x); }});
    const fem::SparseMatrix a0 = fem::assemble_helmholtz(s, kappa, {}, nullptr);
    const lp::DenseBlock blk = lp::scalar_nonlocal_block(s, kappa, sigma, gq, sq);

    const Eigen::VectorXcd b_n = fem::assemble_neumann_rhs(
        s,
        {[&](const Vector2d& x, const Vector2d& n) {
          return specfun::kernel_dnx(kappa, x, n);
        }},
        gq);
    const int ng = static_cast<int>(gq.points.size());
    Eigen::VectorXcd flux(ng);
    for (int i = 0; i < ng; ++i) {
      flux[i] =
          specfun::kernel_dnx(kappa, gq.points[i].x, (-gq.points[i].n).eval());
    }
    const Eigen::VectorXcd b_nl =
        lp::scalar_nonlocal_rhs(s, kappa, sigma, flux, gq, sq);

    const Eigen::VectorXcd r = a0 * u_i + lp::apply(blk, u_i) - b_n - b_nl;
    rel.push_back(r.norm() / (b_n + b_nl).norm());
  }
  std::printf("scalar residuals: %.3e %.3e %.3e ratios %.2f %.2f\n", rel[0],
              rel[1], rel[2], rel[0] / rel[1], rel[1] / rel[2]);
  EXPECT_LT(rel[0], 1e-1);
  EXPECT_GT(rel[0] / rel[1], 2.5);
  EXPECT_GT(rel[1] / rel[2], 2.5);
}

// The coupled analogue: interpolate exact fields built from one radiating
// wave per mode, assemble volume + nonlocal operator and loads, and check
// that the residual decays at the interpolation rate.
TEST(CoupledPath, PointSourceResidualDecaysUnderRefinement) {
  const params::PhysicalParams p = physical();
  const params::DecoupledParams d = params::derive_decoupled(p);
  const params::DecoupleMatrix bm = params::decouple_matrix(p, d);
  const params::SigmaPair sigma = params::wavenumber_sigma(d);
  const Eigen::Matrix2cd e = params::coefficient_matrices(p).e;

  const auto mode = [&](int m_idx, const Vector2d& x) {
    return specfun::kernel(m_idx == 0 ? d.k_t : d.k_p, x);
  };
  const auto mode_dn = [&](int m_idx, const Vector2d& x, const Vector2d& n) {
    return specfun::kernel_dnx(m_idx == 0 ? d.k_t : d.k_p, x, n);
  };

  std::vector<double> rel;
  geom::Mesh m = geom::generate_square_with_hole(0.3);
  for (int level = 0; level < 3; ++level) {
    if (level > 0) m = geom::refine(m);
    const fem::FeSpace s = fem::build_space(m, 2, 2);
    const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 10);
    const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 6);

    const Eigen::VectorXcd u_i = fem::interpolate(
        s, {[&](const Vector2d& x) {
              return bm.b_inv(0, 0) * mode(0, x) + bm.b_inv(0, 1) * mode(1, x);
            },
            [&](const Vector2d& x) {
              return bm.b_inv(1, 0) * mode(0, x) + bm.b_inv(1, 1) * mode(1, x);
            }});

    const fem::SparseMatrix a0 = fem::assemble_a0(s, p);
    const lp::DenseBlock blk =
        lp::assemble_nonlocal_block(s, p, d, bm.b, sigma, gq, sq);

    // Neumann loads carry the diffusive and viscous scales of the flux term.
    const Eigen::VectorXcd b_n = fem::assemble_neumann_rhs(
        s,
        {[&](const Vector2d& x, const Vector2d& n) {
          return e(0, 0) * (bm.b_inv(0, 0) * mode_dn(0, x, n) +
                            bm.b_inv(0, 1) * mode_dn(1, x, n));
        },
         [&](const Vector2d& x, const Vector2d& n) {
           return e(1, 1) * (bm.b_inv(1, 0) * mode_dn(0, x, n) +
                             bm.b_inv(1, 1) * mode_dn(1, x, n));
         }},
        gq);

    const int ng = static_cast<int>(gq.points.size());
    Eigen::VectorXcd flux_t(ng), flux_p(ng);
    for (int i = 0; i < ng; ++i) {
      const Vector2d nu = -gq.points[i].n;
      flux_t[i] = mode_dn(0, gq.points[i].x, nu);
      flux_p[i] = mode_dn(1, gq.points[i].x, nu);
    }
    const Eigen::VectorXcd b_nl =
        lp::assemble_nonlocal_rhs(s, p, d, sigma, flux_t, flux_p, gq, sq);

    const Eigen::VectorXcd r = a0 * u_i + lp::apply(blk, u_i) - b_n - b_nl;
    rel.push_back(r.norm() / (b_n + b_nl).norm());
  }
  std::printf("coupled residuals: %.3e %.3e %.3e ratios %.2f %.2f\n", rel[0],
              rel[1], rel[2], rel[0] / rel[1], rel[1] / rel[2]);
  EXPECT_LT(rel[0], 1e-1);
  EXPECT_GT(rel[0] / rel[1], 2.5);
  EXPECT_GT(rel[1] / rel[2], 2.5);
}

}  // namespace
