#include "miwave/manufactured.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "miwave/fem.hpp"
#include "miwave/geometry.hpp"
#include "miwave/layerpot.hpp"
#include "miwave/params.hpp"
#include "miwave/specfun.hpp"

namespace {

using miwave::Cplx;
using Eigen::Vector2cd;
using Eigen::Vector2d;
namespace fem = miwave::fem;
namespace geom = miwave::geom;
namespace lp = miwave::layerpot;
namespace mf = miwave::manufactured;
namespace params = miwave::params;
namespace specfun = miwave::specfun;

params::PhysicalParams physical() { return params::PhysicalParams{}; }

// Five-point stencil Laplacian of a complex point function.
Cplx fd_laplacian(const std::function<Cplx(const Vector2d&)>& f,
                  const Vector2d& x, double h) {
  return (f(x + Vector2d(h, 0)) + f(x - Vector2d(h, 0)) +
          f(x + Vector2d(0, h)) + f(x - Vector2d(0, h)) - 4.0 * f(x)) /
         (h * h);
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += (c == '\n');
  return n;
}

TEST(PointSource, ZeroAmplitudesGiveZeroFields) {
  const auto s =
      mf::point_source(physical(), Vector2d(0.1, -0.2), Cplx(0), Cplx(0));
  const Vector2d x(0.9, 0.4);
  EXPECT_EQ(mf::exact_modes(s, x).norm(), 0.0);
  EXPECT_EQ(mf::exact_fields(s, x).norm(), 0.0);
  EXPECT_EQ(mf::exact_neumann_at(s, x, Vector2d(0, 1)).norm(), 0.0);
}

TEST(PointSource, EvaluatingAtTheSourceThrows) {
  const auto s = mf::point_source(physical(), Vector2d(0.1, -0.2));
  EXPECT_THROW(mf::exact_fields(s, s.x0), std::invalid_argument);
  EXPECT_THROW(mf::exact_modes(s, s.x0), std::invalid_argument);
  EXPECT_THROW(mf::exact_neumann_at(s, s.x0, Vector2d(1, 0)),
               std::invalid_argument);
  EXPECT_THROW(
      mf::exact_neumann(s, {s.x0}, {Vector2d(1, 0), Vector2d(0, 1)}),
      std::invalid_argument);
}

// Each mode is an outgoing kernel, so a five-point Laplacian plus k^2 times
// the value must shrink at second order in the stencil width.
TEST(PointSource, ModesSolveTheirHelmholtzEquations) {
  const auto s = mf::point_source(physical(), Vector2d(0.1, -0.2));
  const Vector2d x(0.75, 0.55);  // about one length unit from the source
  const Cplx k[2] = {s.d.k_t, s.d.k_p};
  for (int m = 0; m < 2; ++m) {
    const Cplx k2 = k[m] * k[m];
    const auto f = [&](const Vector2d& y) { return mf::exact_modes(s, y)[m]; };
    std::vector<double> rel;
    for (double h : {1e-3, 5e-4}) {
      const Cplx r = fd_laplacian(f, x, h) + k2 * f(x);
      rel.push_back(std::abs(r) / std::abs(k2 * f(x)));
    }
    SCOPED_TRACE(m == 0 ? "thermal" : "acoustic");
    EXPECT_LT(rel[0], m == 0 ? 5e-3 : 1e-6);
    const double ratio = rel[0] / rel[1];
    EXPECT_GT(ratio, 3.3) << "rel " << rel[0] << " " << rel[1];
    EXPECT_LT(ratio, 4.7) << "rel " << rel[0] << " " << rel[1];
  }
}

// The back-transformed pair satisfies the coupled system: -E lap(U) + C U = 0.
// Far from the source the acoustic part dominates; close to it the thermal
// kernel is still alive, so both regimes are checked.
TEST(PointSource, FieldsSolveTheCoupledEquations) {
  const auto s = mf::point_source(physical(), Vector2d(0.1, -0.2));
  const auto cm = params::coefficient_matrices(s.p);
  struct Probe {
    Vector2d x;
    double h0;
  };
  const Probe probes[] = {{s.x0 + Vector2d(0.8, 0.6), 2e-2},
                          {s.x0 + Vector2d(0.018, 0.024), 2e-4}};
  for (const Probe& pr : probes) {
    SCOPED_TRACE(pr.h0);
    std::vector<double> rel;
    for (double h : {pr.h0, 0.5 * pr.h0}) {
      Vector2cd lap;
      for (int fld = 0; fld < 2; ++fld) {
        lap[fld] = fd_laplacian(
            [&](const Vector2d& y) { return mf::exact_fields(s, y)[fld]; },
            pr.x, h);
      }
      const Vector2cd resid = -cm.e * lap + cm.c * mf::exact_fields(s, pr.x);
      rel.push_back(resid.norm() / (cm.e * lap).norm());
    }
    EXPECT_LT(rel[0], 1e-3) << rel[0];
    const double ratio = rel[0] / rel[1];
    EXPECT_GT(ratio, 3.3) << "rel " << rel[0] << " " << rel[1];
    EXPECT_LT(ratio, 4.7) << "rel " << rel[0] << " " << rel[1];
  }
}

// The closed-form normal derivatives agree with central difference quotients.
TEST(PointSource, NeumannMatchesDifferenceQuotients) {
  const auto s = mf::point_source(physical(), Vector2d(0.1, -0.2));
  const double eps = 1e-6;
  // Field data at moderate distance; direction tilted off the radial ray.
  {
    const Vector2d x = s.x0 + Vector2d(0.6, 0.35);
    const Vector2d r = (x - s.x0).normalized();
    const Vector2d n(std::cos(0.3) * r.x() - std::sin(0.3) * r.y(),
                     std::sin(0.3) * r.x() + std::cos(0.3) * r.y());
    const Vector2cd fd =
        (mf::exact_fields(s, x + eps * n) - mf::exact_fields(s, x - eps * n)) /
        (2.0 * eps);
    const Vector2cd g = mf::exact_neumann_at(s, x, n);
    EXPECT_LT((fd - g).norm(), 1e-8 * g.norm());
  }
  // Mode data close to the source, where the thermal kernel is observable.
  {
    const Vector2d x = s.x0 + Vector2d(0.03, 0.04);
    const Vector2d n = Vector2d(1.0, 0.4).normalized();
    const Vector2cd fd = (mf::exact_modes(s, x + eps * n) -
                          mf::exact_modes(s, x - eps * n)) /
                         (2.0 * eps);
    const Vector2cd g = mf::exact_mode_neumann(s, x, n);
    EXPECT_LT(std::abs(fd[0] - g[0]), 1e-7 * std::abs(g[0]));
    EXPECT_LT(std::abs(fd[1] - g[1]), 1e-7 * std::abs(g[1]));
  }
}

TEST(PointSource, NeumannFlipsWithTheNormal) {
  const auto s = mf::point_source(physical(), Vector2d(0.1, -0.2));
  const Vector2d x(0.8, -0.5);
  const Vector2d n = Vector2d(0.3, -0.9).normalized();
  const Vector2cd plus = mf::exact_neumann_at(s, x, n);
  const Vector2cd minus = mf::exact_neumann_at(s, x, -n);
  EXPECT_LT((plus + minus).norm(), 1e-15 * plus.norm());
}

// Transforming the physical Neumann pair back to modes recovers the kernel
// derivatives, through both the matrix and the params helper.
TEST(PointSource, ModeDataMatchesTransformedFieldData) {
  const auto s =
      mf::point_source(physical(), Vector2d(0.1, -0.2), Cplx(0.7, 0.1),
                       Cplx(1.3, -0.4));
  const Vector2d x(0.9, 0.2);
  const Vector2d n = Vector2d(-0.5, 0.8).normalized();
  const Vector2cd g = mf::exact_neumann_at(s, x, n);
  const Vector2cd modes = mf::exact_mode_neumann(s, x, n);
  EXPECT_LT((s.bm.b * g - modes).norm(), 1e-12 * modes.norm());
  const Vector2cd via_helper = params::mode_neumann_data(g[0], g[1], s.bm);
  EXPECT_LT((via_helper - modes).norm(), 1e-12 * modes.norm());
}

// Batch data matches the pointwise evaluator entry by entry.
TEST(PointSource, BatchNeumannMatchesPointwise) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 4);
  std::vector<Vector2d> pts, nrm;
  for (const auto& q : gq.points) {
    pts.push_back(q.x);
    nrm.push_back(q.n);
  }
  const mf::NeumannData nd = mf::exact_neumann(s, pts, nrm);
  ASSERT_EQ(nd.g_t.size(), static_cast<int>(pts.size()));
  for (int i = 0; i < nd.g_t.size(); i += 7) {
    const Vector2cd g = mf::exact_neumann_at(s, pts[i], nrm[i]);
    EXPECT_EQ(nd.g_t[i], g[0]);
    EXPECT_EQ(nd.g_p[i], g[1]);
  }
}

// The acoustic mode trace and flux on the hole reproduce the mode on the
// outer boundary through the representation formula, tying the manufactured
// data to the layer potentials with no shared code path.
TEST(PointSource, AcousticModeSatisfiesGreensIdentity) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  const auto gq = geom::boundary_quadrature(m, geom::FacetTag::Gamma, 8);
  const auto sq = geom::boundary_quadrature(m, geom::FacetTag::Sigma, 2);

  const int ng = static_cast<int>(gq.points.size());
  Eigen::VectorXcd trace(ng), flux(ng);
  for (int q = 0; q < ng; ++q) {
    trace[q] = mf::exact_modes(s, gq.points[q].x)[1];
    flux[q] =
        mf::exact_mode_neumann(s, gq.points[q].x, -gq.points[q].n)[1];
  }
  const lp::Sources src = lp::sources_from_quadrature(gq, true);
  lp::Targets tgt;
  for (const auto& q : sq.points) tgt.x.push_back(q.x);
  const auto dbl = lp::eval_double_layer(s.d.k_p, src, trace, tgt, 1);
  const auto sgl = lp::eval_single_layer(s.d.k_p, src, flux, tgt, 1);

  double err = 0.0, scale = 0.0;
  for (std::size_t t = 0; t < tgt.x.size(); ++t) {
    const Cplx exact = mf::exact_modes(s, tgt.x[t])[1];
    err = std::max(err, std::abs(dbl.value[t] - sgl.value[t] - exact));
    scale = std::max(scale, std::abs(exact));
  }
  EXPECT_LT(err, 1e-10 * scale) << err / scale;
}

// Thermal-to-acoustic magnitude at a tenth of a length unit from the source.
TEST(PointSource, ThermalModeDiesAwayFromTheSource) {
  const auto s = mf::point_source(physical(), mf::tuning_fork_source());
  const Vector2d x = s.x0 + Vector2d(0.1, 0.0);
  const Vector2cd v = mf::exact_modes(s, x);
  EXPECT_GT(std::abs(v[0]), 0.0);
  EXPECT_LT(std::abs(v[0]), 1e-3 * std::abs(v[1]));
}

TEST(PointSource, CanonicalSourcesSitInsideTheScatterers) {
  const geom::Mesh hole = geom::generate_square_with_hole(0.3);
  const geom::Mesh fork = geom::generate_tuning_fork(0.012);
  const struct {
    const geom::Mesh* m;
    Vector2d x0;
  } cases[] = {{&hole, mf::square_hole_source()},
               {&fork, mf::tuning_fork_source()}};
  for (const auto& c : cases) {
    EXPECT_FALSE(geom::contains(*c.m, c.x0));
    // A small disk around the source stays out of the flow domain.
    for (int k = 0; k < 8; ++k) {
      const double a = 2.0 * M_PI * k / 8;
      const Vector2d y = c.x0 + 5e-3 * Vector2d(std::cos(a), std::sin(a));
      EXPECT_FALSE(geom::contains(*c.m, y)) << y.transpose();
    }
  }
}

// Interpolating the exact pair on nested meshes converges at the full rate
// of the element.
TEST(PointSource, InterpolantConvergesAtFullOrder) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  geom::Mesh m = geom::generate_square_with_hole(0.3);
  std::vector<double> err;
  for (int level = 0; level < 3; ++level) {
    if (level > 0) m = geom::refine(m);
    const fem::FeSpace space = fem::build_space(m, 2, 2);
    const Eigen::VectorXcd u = fem::interpolate(
        space, {[&](const Vector2d& x) { return mf::exact_fields(s, x)[0]; },
                [&](const Vector2d& x) { return mf::exact_fields(s, x)[1]; }});
    err.push_back(fem::l2_error(
        space, u,
        {[&](const Vector2d& x) { return mf::exact_fields(s, x)[0]; },
         [&](const Vector2d& x) { return mf::exact_fields(s, x)[1]; }}));
  }
  EXPECT_LT(err.back(), 1e-4);
  for (std::size_t l = 1; l < err.size(); ++l) {
    const double ratio = err[l - 1] / err[l];
    EXPECT_GT(ratio, 6.0) << "errors " << err[l - 1] << " " << err[l];
    EXPECT_LT(ratio, 10.0) << "errors " << err[l - 1] << " " << err[l];
  }
}

TEST(SampleGrid, ResolutionOneSamplesTheCorners) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  std::ostringstream out;
  mf::sample_grid(s, m, Vector2d(1.0, 1.0), Vector2d(1.4, 1.4), 1,
                  mf::GridField::Fields, out);
  const std::string text = out.str();
  EXPECT_EQ(count_lines(text), 5);
  EXPECT_EQ(text.rfind("x,y,T_re,T_im,P_re,P_im\n", 0), 0u);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
    EXPECT_EQ(line.find(",,"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(text.find("1,1,"), text.find('\n') + 1);
}

TEST(SampleGrid, MasksTheScattererButKeepsCoordinates) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  std::ostringstream out;
  mf::sample_grid(s, m, Vector2d(-0.8, -0.8), Vector2d(0.8, 0.8), 2,
                  mf::GridField::Modes, out);
  const std::string text = out.str();
  EXPECT_EQ(count_lines(text), 10);
  EXPECT_EQ(text.rfind("x,y,Vt_re,Vt_im,Vp_re,Vp_im\n", 0), 0u);
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  int masked = 0, filled = 0;
  while (std::getline(in, line)) {
    if (line.find(",,,,") != std::string::npos) {
      ++masked;
      EXPECT_EQ(line.substr(line.size() - 4), ",,,,");
    } else {
      ++filled;
    }
  }
  // Only the grid center lands inside the hole.
  EXPECT_EQ(masked, 1);
  EXPECT_EQ(filled, 8);
  EXPECT_NE(text.find("\n0,0,,,,\n"), std::string::npos);
}

TEST(SampleGrid, OutputIsDeterministicAndSymmetric) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  std::ostringstream a, b;
  mf::sample_grid(s, m, Vector2d(-1.2, -1.2), Vector2d(1.2, 1.2), 6,
                  mf::GridField::Fields, a);
  mf::sample_grid(s, m, Vector2d(-1.2, -1.2), Vector2d(1.2, 1.2), 6,
                  mf::GridField::Fields, b);
  EXPECT_EQ(a.str(), b.str());

  // The source sits at the origin, so the fields are radial.
  const Vector2cd left = mf::exact_fields(s, Vector2d(-0.9, 0.4));
  const Vector2cd right = mf::exact_fields(s, Vector2d(0.9, 0.4));
  EXPECT_EQ(left[0], right[0]);
  EXPECT_EQ(left[1], right[1]);
}

TEST(SampleGrid, ThermalStaysNearTheForkSource) {
  const auto s = mf::point_source(physical(), mf::tuning_fork_source());
  const geom::Mesh m = geom::generate_tuning_fork(0.012);
  std::ostringstream out;
  mf::sample_grid(s, m, Vector2d(-0.1125, 0.0), Vector2d(0.1125, 0.723), 8,
                  mf::GridField::Modes, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  double max_vt = 0.0, max_vp = 0.0;
  int filled = 0;
  while (std::getline(in, line)) {
    if (line.find(",,,,") != std::string::npos) continue;
    ++filled;
    double x, y, vt_re, vt_im, vp_re, vp_im;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &x, &y,
                          &vt_re, &vt_im, &vp_re, &vp_im),
              6)
        << line;
    max_vt = std::max(max_vt, std::hypot(vt_re, vt_im));
    max_vp = std::max(max_vp, std::hypot(vp_re, vp_im));
  }
  EXPECT_GT(filled, 20);
  EXPECT_GT(max_vt, 0.0);
  EXPECT_LT(max_vt, 0.05 * max_vp);
}

TEST(SampleGrid, RejectsBadBoxesAndResolutions) {
  const auto s = mf::point_source(physical(), mf::square_hole_source());
  const geom::Mesh m = geom::generate_square_with_hole(0.3);
  std::ostringstream out;
  EXPECT_THROW(mf::sample_grid(s, m, Vector2d(0, 0), Vector2d(1, 1), 0,
                               mf::GridField::Fields, out),
               std::invalid_argument);
  EXPECT_THROW(mf::sample_grid(s, m, Vector2d(1, 0), Vector2d(1, 1), 4,
                               mf::GridField::Fields, out),
               std::invalid_argument);
  EXPECT_THROW(mf::sample_grid(s, m, Vector2d(0, 2), Vector2d(1, 1), 4,
                               mf::GridField::Fields, out),
               std::invalid_argument);
}

}  // namespace
