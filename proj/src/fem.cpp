#include "miwave/fem.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

namespace miwave::fem {
namespace {

using Vec2 = Eigen::Vector2d;
using Triplet = Eigen::Triplet<Cplx>;

constexpr int kMaxDofs = 10;

struct VolPoint {
  double xi, eta, w;
};

// Collapsed tensor-product Gauss rule on the unit triangle, exact for total
// degree d: the Duffy map xi = u(1-v), eta = v carries an extra factor (1-v),
// so n = ceil((d+2)/2) points per direction suffice.
std::vector<VolPoint> cell_rule(int degree) {
  const int n = (degree + 3) / 2;
  std::vector<double> t, w;
  geom::gauss_legendre(n, &t, &w);
  std::vector<VolPoint> rule;
  rule.reserve(n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      rule.push_back({t[i] * (1.0 - t[j]), t[j], w[i] * w[j] * (1.0 - t[j])});
    }
  }
  return rule;
}

bool cell_is_curved(const geom::Mesh& m, int cell) {
  for (int e = 0; e < 3; ++e) {
    const Vec2& a = m.vertices[m.cells[cell][e]];
    const Vec2& b = m.vertices[m.cells[cell][(e + 1) % 3]];
    const Vec2& mid = m.vertices[m.cells[cell][3 + e]];
    if ((mid - 0.5 * (a + b)).norm() > 1e-12 * (b - a).norm()) return true;
  }
  return false;
}

// Local real stiffness and mass matrices of one cell, quadrature exact for
// straight cells and two degrees higher on curved ones.
void local_matrices(const FeSpace& s, int cell, Eigen::MatrixXd* stiff,
                    Eigen::MatrixXd* mass) {
  const int np = dofs_per_cell(s.degree);
  stiff->setZero(np, np);
  mass->setZero(np, np);
  const int qdeg = 2 * s.degree + (cell_is_curved(*s.mesh, cell) ? 2 : 0);
  double phi[kMaxDofs];
  double dphi[kMaxDofs][2];
  Vec2 grad[kMaxDofs];
  for (const VolPoint& q : cell_rule(qdeg)) {
    eval_basis(s.degree, q.xi, q.eta, phi);
    eval_basis_grad(s.degree, q.xi, q.eta, dphi);
    Eigen::Matrix2d jac;
    const double det = geom::map_jacobian(*s.mesh, cell, q.xi, q.eta, &jac);
    const Eigen::Matrix2d jinv_t = jac.inverse().transpose();
    for (int i = 0; i < np; ++i) grad[i] = jinv_t * Vec2(dphi[i][0], dphi[i][1]);
    const double dw = q.w * det;
    for (int i = 0; i < np; ++i) {
      for (int j = 0; j < np; ++j) {
        (*stiff)(i, j) += dw * grad[i].dot(grad[j]);
        (*mass)(i, j) += dw * phi[i] * phi[j];
      }
    }
  }
}

void append_filtered(std::vector<Triplet>* out, int row, int col, Cplx value) {
  if (value != 0.0) out->emplace_back(row, col, value);
}

SparseMatrix from_triplets(int n, std::vector<Triplet>&& trips) {
  SparseMatrix a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  a.prune([](int, int, const Cplx& v) { return v != 0.0; });
  a.makeCompressed();
  return a;
}

// Volume assembly of E_ff (grad, grad) + C_fg (u, v) over all field pairs.
SparseMatrix assemble_volume(const FeSpace& s, const Eigen::Matrix2cd& e,
                             const Eigen::Matrix2cd& c) {
  const int n = s.scalar_dofs;
  const int nf = s.field_count;
  std::vector<Triplet> trips;
  Eigen::MatrixXd stiff, mass;
  for (std::size_t cell = 0; cell < s.mesh->cells.size(); ++cell) {
    local_matrices(s, static_cast<int>(cell), &stiff, &mass);
    const auto& gd = s.cell_dofs[cell];
    const int np = static_cast<int>(gd.size());
    for (int f = 0; f < nf; ++f) {
      for (int g = 0; g < nf; ++g) {
        const Cplx cs = f == g ? e(f, f) : Cplx(0.0);
        const Cplx cm = c(f, g);
        if (cs == 0.0 && cm == 0.0) continue;
        for (int i = 0; i < np; ++i) {
          for (int j = 0; j < np; ++j) {
            append_filtered(&trips, f * n + gd[i], g * n + gd[j],
                            cs * stiff(i, j) + cm * mass(i, j));
          }
        }
      }
    }
  }
  return from_triplets(nf * n, std::move(trips));
}

}  // namespace

int dofs_per_cell(int degree) {
  switch (degree) {
    case 1: return 3;
    case 2: return 6;
    case 3: return 10;
    default: throw std::invalid_argument("fem: degree must be 1, 2, or 3");
  }
}

void eval_basis(int degree, double xi, double eta, double* phi) {
  const double l0 = 1.0 - xi - eta;
  const double l1 = xi;
  const double l2 = eta;
  switch (degree) {
    case 1:
      phi[0] = l0;
      phi[1] = l1;
      phi[2] = l2;
      return;
    case 2:
      phi[0] = l0 * (2.0 * l0 - 1.0);
      phi[1] = l1 * (2.0 * l1 - 1.0);
      phi[2] = l2 * (2.0 * l2 - 1.0);
      phi[3] = 4.0 * l0 * l1;
      phi[4] = 4.0 * l1 * l2;
      phi[5] = 4.0 * l2 * l0;
      return;
    case 3:
      phi[0] = 0.5 * l0 * (3.0 * l0 - 1.0) * (3.0 * l0 - 2.0);
      phi[1] = 0.5 * l1 * (3.0 * l1 - 1.0) * (3.0 * l1 - 2.0);
      phi[2] = 0.5 * l2 * (3.0 * l2 - 1.0) * (3.0 * l2 - 2.0);
      phi[3] = 4.5 * l0 * l1 * (3.0 * l0 - 1.0);
      phi[4] = 4.5 * l0 * l1 * (3.0 * l1 - 1.0);
      phi[5] = 4.5 * l1 * l2 * (3.0 * l1 - 1.0);
      phi[6] = 4.5 * l1 * l2 * (3.0 * l2 - 1.0);
      phi[7] = 4.5 * l2 * l0 * (3.0 * l2 - 1.0);
      phi[8] = 4.5 * l2 * l0 * (3.0 * l0 - 1.0);
      phi[9] = 27.0 * l0 * l1 * l2;
      return;
    default: throw std::invalid_argument("fem: degree must be 1, 2, or 3");
  }
}

void eval_basis_grad(int degree, double xi, double eta, double grad[][2]) {
  const double l0 = 1.0 - xi - eta;
  const double l1 = xi;
  const double l2 = eta;
  const int np = dofs_per_cell(degree);
  // Barycentric partials first; dL0 = (-1,-1), dL1 = (1,0), dL2 = (0,1).
  double d[kMaxDofs][3] = {};
  switch (degree) {
    case 1:
      d[0][0] = 1.0;
      d[1][1] = 1.0;
      d[2][2] = 1.0;
      break;
    case 2:
      d[0][0] = 4.0 * l0 - 1.0;
      d[1][1] = 4.0 * l1 - 1.0;
      d[2][2] = 4.0 * l2 - 1.0;
      d[3][0] = 4.0 * l1;
      d[3][1] = 4.0 * l0;
      d[4][1] = 4.0 * l2;
      d[4][2] = 4.0 * l1;
      d[5][2] = 4.0 * l0;
      d[5][0] = 4.0 * l2;
      break;
    case 3:
      d[0][0] = 13.5 * l0 * l0 - 9.0 * l0 + 1.0;
      d[1][1] = 13.5 * l1 * l1 - 9.0 * l1 + 1.0;
      d[2][2] = 13.5 * l2 * l2 - 9.0 * l2 + 1.0;
      d[3][0] = 4.5 * l1 * (6.0 * l0 - 1.0);
      d[3][1] = 4.5 * l0 * (3.0 * l0 - 1.0);
      d[4][0] = 4.5 * l1 * (3.0 * l1 - 1.0);
      d[4][1] = 4.5 * l0 * (6.0 * l1 - 1.0);
      d[5][1] = 4.5 * l2 * (6.0 * l1 - 1.0);
      d[5][2] = 4.5 * l1 * (3.0 * l1 - 1.0);
      d[6][1] = 4.5 * l2 * (3.0 * l2 - 1.0);
      d[6][2] = 4.5 * l1 * (6.0 * l2 - 1.0);
      d[7][2] = 4.5 * l0 * (6.0 * l2 - 1.0);
      d[7][0] = 4.5 * l2 * (3.0 * l2 - 1.0);
      d[8][2] = 4.5 * l0 * (3.0 * l0 - 1.0);
      d[8][0] = 4.5 * l2 * (6.0 * l0 - 1.0);
      d[9][0] = 27.0 * l1 * l2;
      d[9][1] = 27.0 * l0 * l2;
      d[9][2] = 27.0 * l0 * l1;
      break;
    default: throw std::invalid_argument("fem: degree must be 1, 2, or 3");
  }
  for (int i = 0; i < np; ++i) {
    grad[i][0] = d[i][1] - d[i][0];
    grad[i][1] = d[i][2] - d[i][0];
  }
}

std::vector<int> edge_local_dofs(int degree, int edge) {
  std::vector<int> out = {edge, (edge + 1) % 3};
  if (degree == 2) out.push_back(3 + edge);
  if (degree == 3) {
    out.push_back(3 + 2 * edge);
    out.push_back(4 + 2 * edge);
  }
  return out;
}

FeSpace build_space(const geom::Mesh& m, int degree, int field_count) {
  if (degree < 1 || degree > 3) {
    throw std::invalid_argument("build_space: degree must be 1, 2, or 3");
  }
  if (field_count < 1 || field_count > 2) {
    throw std::invalid_argument("build_space: field_count must be 1 or 2");
  }

  FeSpace s;
  s.mesh = &m;
  s.degree = degree;
  s.field_count = field_count;

  // Dof numbering follows mesh entities, not cell order: corner vertices by
  // vertex id, edges by their sorted vertex pair, interior dofs by the cell's
  // sorted corner triple.
  std::map<int, int> vertex_dof;
  std::map<std::pair<int, int>, int> edge_base;
  struct EdgeGeo {
    int mid;
  };
  std::map<std::pair<int, int>, EdgeGeo> edge_geo;
  for (const auto& cell : m.cells) {
    for (int e = 0; e < 3; ++e) {
      vertex_dof.emplace(cell[e], -1);
      const int u = cell[e];
      const int v = cell[(e + 1) % 3];
      edge_geo.emplace(std::minmax(u, v), EdgeGeo{cell[3 + e]});
    }
  }
  int next = 0;
  for (auto& [vid, dof] : vertex_dof) dof = next++;
  if (degree >= 2) {
    for (const auto& [key, geo] : edge_geo) {
      edge_base.emplace(key, next);
      next += degree - 1;
    }
  }
  std::map<std::array<int, 3>, int> interior_dof;
  if (degree == 3) {
    for (std::size_t c = 0; c < m.cells.size(); ++c) {
      std::array<int, 3> tri{m.cells[c][0], m.cells[c][1], m.cells[c][2]};
      std::sort(tri.begin(), tri.end());
      interior_dof.emplace(tri, -1);
    }
    for (auto& [tri, dof] : interior_dof) dof = next++;
  }
  s.scalar_dofs = next;
  s.dof_x.assign(next, Vec2::Zero());

  for (const auto& [vid, dof] : vertex_dof) s.dof_x[dof] = m.vertices[vid];
  if (degree >= 2) {
    const auto edge_point = [&m](int a, int b, int mid, double t) {
      return (1.0 - t) * (1.0 - 2.0 * t) * m.vertices[a] +
             t * (2.0 * t - 1.0) * m.vertices[b] +
             4.0 * t * (1.0 - t) * m.vertices[mid];
    };
    for (const auto& [key, base] : edge_base) {
      const int mid = edge_geo.at(key).mid;
      if (degree == 2) {
        s.dof_x[base] = m.vertices[mid];
      } else {
        s.dof_x[base] = edge_point(key.first, key.second, mid, 1.0 / 3.0);
        s.dof_x[base + 1] = edge_point(key.first, key.second, mid, 2.0 / 3.0);
      }
    }
  }

  s.cell_dofs.resize(m.cells.size());
  for (std::size_t c = 0; c < m.cells.size(); ++c) {
    auto& gd = s.cell_dofs[c];
    gd.reserve(dofs_per_cell(degree));
    for (int e = 0; e < 3; ++e) gd.push_back(vertex_dof.at(m.cells[c][e]));
    if (degree >= 2) {
      for (int e = 0; e < 3; ++e) {
        const int u = m.cells[c][e];
        const int v = m.cells[c][(e + 1) % 3];
        const int base = edge_base.at(std::minmax(u, v));
        if (degree == 2) {
          gd.push_back(base);
        } else if (u < v) {
          gd.push_back(base);
          gd.push_back(base + 1);
        } else {
          gd.push_back(base + 1);
          gd.push_back(base);
        }
      }
    }
    if (degree == 3) {
      std::array<int, 3> tri{m.cells[c][0], m.cells[c][1], m.cells[c][2]};
      std::sort(tri.begin(), tri.end());
      const int dof = interior_dof.at(tri);
      gd.push_back(dof);
      s.dof_x[dof] = geom::map_point(m, static_cast<int>(c), 1.0 / 3.0, 1.0 / 3.0);
    }
  }
  return s;
}

std::vector<int> boundary_dofs(const FeSpace& s, geom::FacetTag tag) {
  std::vector<int> out;
  for (const auto& f : s.mesh->facets) {
    if (f.tag != tag) continue;
    for (int loc : edge_local_dofs(s.degree, f.edge)) {
      out.push_back(s.cell_dofs[f.cell][loc]);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SparseMatrix assemble_a0(const FeSpace& s, const params::PhysicalParams& p) {
  if (s.field_count != 2) {
    throw std::invalid_argument("assemble_a0: needs the coupled two-field space");
  }
  const params::CoefficientMatrices cm = params::coefficient_matrices(p);
  return assemble_volume(s, cm.e, cm.c);
}

SparseMatrix assemble_mass(const FeSpace& s) {
  return assemble_volume(s, Eigen::Matrix2cd::Zero(), Eigen::Matrix2cd::Identity());
}

SparseMatrix assemble_local_bc(const FeSpace& s, const params::BcMatrix& a,
                               const geom::BoundaryQuadrature& quad) {
  if (s.field_count != 2) {
    throw std::invalid_argument("assemble_local_bc: needs the coupled two-field space");
  }
  if (quad.tag != geom::FacetTag::Sigma) {
    throw std::invalid_argument("assemble_local_bc: quadrature must be on Sigma");
  }
  const int n = s.scalar_dofs;
  const int np = dofs_per_cell(s.degree);
  const Cplx mi(0.0, -1.0);
  std::vector<Triplet> trips;
  double phi[kMaxDofs];
  for (const auto& qp : quad.points) {
    eval_basis(s.degree, qp.xi, qp.eta, phi);
    const auto& gd = s.cell_dofs[qp.cell];
    for (int f = 0; f < 2; ++f) {
      for (int g = 0; g < 2; ++g) {
        const Cplx coef = mi * a.a(f, g);
        if (coef == 0.0) continue;
        for (int i = 0; i < np; ++i) {
          if (phi[i] == 0.0) continue;
          for (int j = 0; j < np; ++j) {
            append_filtered(&trips, f * n + gd[i], g * n + gd[j],
                            coef * (qp.w * phi[i] * phi[j]));
          }
        }
      }
    }
  }
  return from_triplets(2 * n, std::move(trips));
}

Eigen::VectorXcd assemble_neumann_rhs(const FeSpace& s,
                                      const std::vector<BoundaryFn>& g,
                                      const geom::BoundaryQuadrature& quad) {
  if (static_cast<int>(g.size()) != s.field_count) {
    throw std::invalid_argument("assemble_neumann_rhs: one function per field");
  }
  if (quad.tag != geom::FacetTag::Gamma) {
    throw std::invalid_argument("assemble_neumann_rhs: quadrature must be on Gamma");
  }
  const int n = s.scalar_dofs;
  const int np = dofs_per_cell(s.degree);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(s.dofs());
  double phi[kMaxDofs];
  for (const auto& qp : quad.points) {
    eval_basis(s.degree, qp.xi, qp.eta, phi);
    const auto& gd = s.cell_dofs[qp.cell];
    for (int f = 0; f < s.field_count; ++f) {
      const Cplx gv = g[f](qp.x, qp.n);
      if (gv == 0.0) continue;
      for (int i = 0; i < np; ++i) {
        rhs[f * n + gd[i]] += qp.w * phi[i] * gv;
      }
    }
  }
  return rhs;
}

SparseMatrix assemble_helmholtz(const FeSpace& s, Cplx kappa,
                                const std::optional<Cplx>& sigma,
                                const geom::BoundaryQuadrature* sigma_quad) {
  if (s.field_count != 1) {
    throw std::invalid_argument("assemble_helmholtz: needs a scalar space");
  }
  Eigen::Matrix2cd e = Eigen::Matrix2cd::Zero();
  Eigen::Matrix2cd c = Eigen::Matrix2cd::Zero();
  e(0, 0) = 1.0;
  c(0, 0) = -kappa * kappa;
  SparseMatrix a = assemble_volume(s, e, c);
  if (!sigma) return a;
  if (!sigma_quad || sigma_quad->tag != geom::FacetTag::Sigma) {
    throw std::invalid_argument("assemble_helmholtz: impedance needs a Sigma quadrature");
  }
  const int np = dofs_per_cell(s.degree);
  const Cplx coef = Cplx(0.0, -1.0) * *sigma;
  std::vector<Triplet> trips;
  double phi[kMaxDofs];
  for (const auto& qp : sigma_quad->points) {
    eval_basis(s.degree, qp.xi, qp.eta, phi);
    const auto& gd = s.cell_dofs[qp.cell];
    for (int i = 0; i < np; ++i) {
      if (phi[i] == 0.0) continue;
      for (int j = 0; j < np; ++j) {
        append_filtered(&trips, gd[i], gd[j], coef * (qp.w * phi[i] * phi[j]));
      }
    }
  }
  SparseMatrix b(s.scalar_dofs, s.scalar_dofs);
  b.setFromTriplets(trips.begin(), trips.end());
  a += b;
  a.prune([](int, int, const Cplx& v) { return v != 0.0; });
  a.makeCompressed();
  return a;
}

Eigen::VectorXcd interpolate(const FeSpace& s, const std::vector<PointFn>& fields) {
  if (static_cast<int>(fields.size()) != s.field_count) {
    throw std::invalid_argument("interpolate: one function per field");
  }
  Eigen::VectorXcd u(s.dofs());
  for (int f = 0; f < s.field_count; ++f) {
    for (int i = 0; i < s.scalar_dofs; ++i) {
      u[f * s.scalar_dofs + i] = fields[f](s.dof_x[i]);
    }
  }
  return u;
}

Cplx evaluate(const FeSpace& s, const Eigen::VectorXcd& u, int cell, double xi,
              double eta, int field) {
  double phi[kMaxDofs];
  eval_basis(s.degree, xi, eta, phi);
  const auto& gd = s.cell_dofs[cell];
  Cplx v = 0.0;
  for (std::size_t i = 0; i < gd.size(); ++i) {
    v += phi[i] * u[field * s.scalar_dofs + gd[i]];
  }
  return v;
}

double l2_error(const FeSpace& s, const Eigen::VectorXcd& u_h,
                const std::vector<PointFn>& exact) {
  if (static_cast<int>(exact.size()) != s.field_count) {
    throw std::invalid_argument("l2_error: one function per field");
  }
  const auto rule = cell_rule(2 * s.degree + 4);
  const int np = dofs_per_cell(s.degree);
  double num = 0.0;
  double den = 0.0;
  double phi[kMaxDofs];
  for (std::size_t c = 0; c < s.mesh->cells.size(); ++c) {
    const auto& gd = s.cell_dofs[c];
    for (const VolPoint& q : rule) {
      eval_basis(s.degree, q.xi, q.eta, phi);
      const double dw =
          q.w * geom::map_jacobian(*s.mesh, static_cast<int>(c), q.xi, q.eta, nullptr);
      const Vec2 x = geom::map_point(*s.mesh, static_cast<int>(c), q.xi, q.eta);
      for (int f = 0; f < s.field_count; ++f) {
        Cplx vh = 0.0;
        for (int i = 0; i < np; ++i) vh += phi[i] * u_h[f * s.scalar_dofs + gd[i]];
        const Cplx ve = exact[f](x);
        num += dw * std::norm(vh - ve);
        den += dw * std::norm(ve);
      }
    }
  }
  if (den == 0.0) throw std::domain_error("l2_error: exact solution has zero norm");
  return std::sqrt(num / den);
}

void write_solution_csv(const FeSpace& s, const Eigen::VectorXcd& u,
                        const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_solution_csv: cannot open " + path);
  out << (s.field_count == 2 ? "x,y,T_re,T_im,P_re,P_im\n" : "x,y,u_re,u_im\n");
  char buf[64];
  for (int i = 0; i < s.scalar_dofs; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", s.dof_x[i].x(), s.dof_x[i].y());
    out << buf;
    for (int f = 0; f < s.field_count; ++f) {
      const Cplx v = u[f * s.scalar_dofs + i];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g", v.real(), v.imag());
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_solution_csv: write failed for " + path);
}

}  // namespace miwave::fem
