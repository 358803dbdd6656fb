#include "miwave/manufactured.hpp"

#include <cstdio>
#include <stdexcept>

#include "miwave/specfun.hpp"

namespace miwave::manufactured {

PointSourceSolution point_source(const params::PhysicalParams& p,
                                 const Eigen::Vector2d& x0, Cplx c_t,
                                 Cplx c_p) {
  PointSourceSolution s;
  s.x0 = x0;
  s.c_t = c_t;
  s.c_p = c_p;
  s.p = p;
  s.d = params::derive_decoupled(p);
  s.bm = params::decouple_matrix(p, s.d);
  return s;
}

Eigen::Vector2d square_hole_source() { return Eigen::Vector2d::Zero(); }

Eigen::Vector2d tuning_fork_source() {
  return Eigen::Vector2d(-0.0375, 0.1665);
}

namespace {

Eigen::Vector2d offset(const PointSourceSolution& s, const Eigen::Vector2d& x) {
  const Eigen::Vector2d r = x - s.x0;
  if (r.squaredNorm() == 0.0) {
    throw std::invalid_argument(
        "manufactured: evaluation at the source point");
  }
  return r;
}

}  // namespace

Eigen::Vector2cd exact_modes(const PointSourceSolution& s,
                             const Eigen::Vector2d& x) {
  const Eigen::Vector2d r = offset(s, x);
  return {s.c_t * specfun::kernel(s.d.k_t, r),
          s.c_p * specfun::kernel(s.d.k_p, r)};
}

Eigen::Vector2cd exact_fields(const PointSourceSolution& s,
                              const Eigen::Vector2d& x) {
  return s.bm.b_inv * exact_modes(s, x);
}

Eigen::Vector2cd exact_mode_neumann(const PointSourceSolution& s,
                                    const Eigen::Vector2d& x,
                                    const Eigen::Vector2d& n) {
  const Eigen::Vector2d r = offset(s, x);
  return {s.c_t * specfun::kernel_dnx(s.d.k_t, r, n),
          s.c_p * specfun::kernel_dnx(s.d.k_p, r, n)};
}

Eigen::Vector2cd exact_neumann_at(const PointSourceSolution& s,
                                  const Eigen::Vector2d& x,
                                  const Eigen::Vector2d& n) {
  return s.bm.b_inv * exact_mode_neumann(s, x, n);
}

NeumannData exact_neumann(const PointSourceSolution& s,
                          const std::vector<Eigen::Vector2d>& points,
                          const std::vector<Eigen::Vector2d>& normals) {
  if (points.size() != normals.size()) {
    throw std::invalid_argument("exact_neumann: points/normals size mismatch");
  }
  const int n = static_cast<int>(points.size());
  NeumannData out;
  out.g_t.resize(n);
  out.g_p.resize(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2cd g = exact_neumann_at(s, points[i], normals[i]);
    out.g_t[i] = g[0];
    out.g_p[i] = g[1];
  }
  return out;
}

void sample_grid(const PointSourceSolution& s, const geom::Mesh& m,
                 const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                 int resolution, GridField which, std::ostream& out) {
  if (resolution < 1) {
    throw std::invalid_argument("sample_grid: resolution must be positive");
  }
  if (!(hi.x() > lo.x()) || !(hi.y() > lo.y())) {
    throw std::invalid_argument("sample_grid: empty bounding box");
  }
  out << (which == GridField::Fields ? "x,y,T_re,T_im,P_re,P_im\n"
                                     : "x,y,Vt_re,Vt_im,Vp_re,Vp_im\n");
  char buf[96];
  for (int j = 0; j <= resolution; ++j) {
    const double y = lo.y() + (hi.y() - lo.y()) * j / resolution;
    for (int i = 0; i <= resolution; ++i) {
      const double x = lo.x() + (hi.x() - lo.x()) * i / resolution;
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", x, y);
      out << buf;
      const Eigen::Vector2d pt(x, y);
      if (geom::contains(m, pt)) {
        const Eigen::Vector2cd v = which == GridField::Fields
                                       ? exact_fields(s, pt)
                                       : exact_modes(s, pt);
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g",
                      v[0].real(), v[0].imag(), v[1].real(), v[1].imag());
        out << buf;
      } else {
        out << ",,,,";
      }
      out << "\n";
    }
  }
}

}  // namespace miwave::manufactured
