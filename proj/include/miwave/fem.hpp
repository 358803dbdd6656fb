// Continuous Lagrange elements of degree 1 to 3 on the quadratic triangle
// meshes, with assembly of the volumetric thermoacoustic form, local boundary
// terms, Neumann right-hand sides, interpolation, and L2 error norms.
//
// Coupled spaces store the temperature block first and the pressure block
// second: dof i of field f is global index f * scalar_dofs + i.
#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "miwave/geometry.hpp"
#include "miwave/params.hpp"

namespace miwave::fem {

using Cplx = std::complex<double>;
using SparseMatrix = Eigen::SparseMatrix<Cplx>;
using PointFn = std::function<Cplx(const Eigen::Vector2d&)>;
// Boundary data evaluated at a point with the outward unit normal there.
using BoundaryFn = std::function<Cplx(const Eigen::Vector2d&, const Eigen::Vector2d&)>;

struct FeSpace {
  const geom::Mesh* mesh = nullptr;
  int degree = 0;
  int field_count = 1;
  int scalar_dofs = 0;
  // Scalar dof positions; shared edge dofs are numbered from shared mesh
  // entities, so the numbering does not depend on cell order.
  std::vector<Eigen::Vector2d> dof_x;
  std::vector<std::vector<int>> cell_dofs;  // scalar dof ids, reference order

  int dofs() const { return field_count * scalar_dofs; }
};

FeSpace build_space(const geom::Mesh& m, int degree, int field_count);

// Reference basis on the unit triangle in the local order used by cell_dofs:
// corners, then edge dofs per edge, then the interior dof (degree 3).
int dofs_per_cell(int degree);
void eval_basis(int degree, double xi, double eta, double* phi);
void eval_basis_grad(int degree, double xi, double eta, double grad[][2]);
// Local dof indices whose basis functions are nonzero on the given edge.
std::vector<int> edge_local_dofs(int degree, int edge);

// Sorted scalar dof ids supported on the facets of one boundary tag.
std::vector<int> boundary_dofs(const FeSpace& s, geom::FacetTag tag);

// Volumetric part of the coupled weak form: for fields (T, P) the blocks are
//   E_ff (grad u_f, grad v_f) + C_fg (u_g, v_f)
// with E and C taken from the gas parameters. Test functions enter the inner
// product conjugated; with the real Lagrange basis the entries are the
// complex coefficients times real integrals.
SparseMatrix assemble_a0(const FeSpace& s, const params::PhysicalParams& p);

// Field-block-diagonal mass matrix (u, v).
SparseMatrix assemble_mass(const FeSpace& s);

// Local impedance-style boundary term -i <A u, v> on the outer boundary,
// where A couples the (T, P) traces. Requires a Sigma quadrature.
SparseMatrix assemble_local_bc(const FeSpace& s, const params::BcMatrix& a,
                               const geom::BoundaryQuadrature& quad);

// Neumann load <g_f, v_f> on the scatterer boundary; g has one entry per
// field. Requires a Gamma quadrature.
Eigen::VectorXcd assemble_neumann_rhs(const FeSpace& s,
                                      const std::vector<BoundaryFn>& g,
                                      const geom::BoundaryQuadrature& quad);

// Scalar Helmholtz operator (grad u, grad v) - kappa^2 (u, v), optionally
// with the impedance term -i sigma <u, v> on Sigma.
SparseMatrix assemble_helmholtz(const FeSpace& s, Cplx kappa,
                                const std::optional<Cplx>& sigma,
                                const geom::BoundaryQuadrature* sigma_quad);

// Coefficients of the Lagrange interpolant; one point function per field.
Eigen::VectorXcd interpolate(const FeSpace& s, const std::vector<PointFn>& fields);

// Finite element function value at a reference point of one cell.
Cplx evaluate(const FeSpace& s, const Eigen::VectorXcd& u, int cell, double xi,
              double eta, int field);

// Relative L2 error over the meshed domain; for two fields the norm is the
// root of the sum of the squared per-field norms.
double l2_error(const FeSpace& s, const Eigen::VectorXcd& u_h,
                const std::vector<PointFn>& exact);

// CSV export: one row per scalar dof with its coordinates and the complex
// value of every field.
void write_solution_csv(const FeSpace& s, const Eigen::VectorXcd& u,
                        const std::string& path);

}  // namespace miwave::fem
