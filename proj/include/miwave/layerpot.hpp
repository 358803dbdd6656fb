#pragma once

// Helmholtz layer potentials evaluated by direct summation over boundary
// quadrature points, and the dense boundary operators that realize the
// Green's-formula radiation condition: the trace of the solution on the
// scattering boundary is convolved with the free-space kernel and tested on
// the outer boundary, turning the unknown outer flux into a nonlocal coupling
// between the two boundaries plus a local Robin term.
//
// Orientation convention: a source set's normals and any flux densities fed
// to the potentials share one orientation. The representation identity
// "double layer of the trace minus single layer of the flux equals the field
// on the outer boundary" holds when the scattering-boundary normals point
// from the scatterer into the air domain - the reverse of what
// boundary_quadrature returns there (its normals point out of the air
// domain). sources_from_quadrature(..., flip_normals = true) performs the
// flip, and the assemblers below do it internally; flux arguments must be
// given in that same scatterer-to-air orientation.

#include <complex>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "miwave/fem.hpp"
#include "miwave/geometry.hpp"
#include "miwave/params.hpp"

namespace miwave::layerpot {

// Quadrature description of a source curve: points, weights, unit normals.
struct Sources {
  std::vector<Eigen::Vector2d> x;
  std::vector<double> w;
  std::vector<Eigen::Vector2d> n;
};

Sources sources_from_quadrature(const geom::BoundaryQuadrature& q,
                                bool flip_normals);

// Evaluation points; when n is nonempty (one normal per point), the
// target-normal derivative of the potential is computed as well.
struct Targets {
  std::vector<Eigen::Vector2d> x;
  std::vector<Eigen::Vector2d> n;
};

struct PotentialValues {
  Eigen::VectorXcd value;
  Eigen::VectorXcd dn;  // empty unless target normals were supplied
};

// S[f](x) = sum_q w_q K_kappa(x - y_q) f(y_q), plus d/dn_x when requested.
// Direct O(targets x sources) summation, parallelized over targets; results
// are identical for any thread count. Throws std::invalid_argument if a
// target coincides with a source point.
PotentialValues eval_single_layer(Cplx kappa, const Sources& src,
                                  const Eigen::VectorXcd& density,
                                  const Targets& tgt, int threads = 1);

// D[u](x) = sum_q w_q (dK_kappa/dn_y)(x - y_q) u(y_q), plus d/dn_x.
PotentialValues eval_double_layer(Cplx kappa, const Sources& src,
                                  const Eigen::VectorXcd& density,
                                  const Targets& tgt, int threads = 1);

// Sampling of finite element functions at boundary quadrature points and the
// adjoint accumulation of point values into test-function integrals.
struct TraceOperator {
  const fem::FeSpace* space = nullptr;
  int points = 0;
  int dpc = 0;                 // scalar basis functions per cell
  std::vector<int> dofs;       // points x dpc scalar dof ids
  std::vector<double> phi;     // points x dpc basis values
  std::vector<double> weight;  // quadrature weight per point
};

TraceOperator make_trace(const fem::FeSpace& s,
                         const geom::BoundaryQuadrature& q);

// Point values of one field of u at the quadrature points.
Eigen::VectorXcd trace_values(const TraceOperator& t,
                              const Eigen::VectorXcd& u, int field);

// out[dof] = sum_q w_q phi_dof(q) values[q], scattered into a global vector
// (full space size, entries only for the given field on the traced boundary).
Eigen::VectorXcd adjoint_integrate(const TraceOperator& t,
                                   const Eigen::VectorXcd& values, int field);

// Dense operator of logical shape dofs x dofs, stored condensed on its
// support: rows are the test dofs touching the outer boundary, columns the
// trial dofs touching either boundary.
struct DenseBlock {
  int dofs = 0;
  std::vector<int> rows;
  std::vector<int> cols;
  Eigen::MatrixXcd a;  // rows.size() x cols.size()
};

// y = B x on the logical full-size vectors.
Eigen::VectorXcd apply(const DenseBlock& b, const Eigen::VectorXcd& x);

// Full dofs x dofs matrix (tests and small problems only).
Eigen::MatrixXcd materialize(const DenseBlock& b);

// Boundary part of the coupled variational form under the Green's-formula
// condition with shift pair sigma. Trial traces on the scattering boundary
// are mapped to mode densities by b_mat, each mode's shifted double layer
// (i sigma_m - d/dn_x) D_{k_m} is evaluated at the outer-boundary quadrature
// points, the mode equations are recombined with E b_mat^-1, and the result
// is integrated against test traces. With with_robin, the local Robin matrix
// E b_mat^-1 diag(sigma) b_mat enters the same block with the -i convention
// of assemble_local_bc; solvers that keep the Robin term in their sparse
// (preconditioning) part pass with_robin = false and get the shifted double
// layer alone. Throws on tag mismatch, wrong field count, or coincident
// quadrature points between the two boundaries.
DenseBlock assemble_nonlocal_block(const fem::FeSpace& s,
                                   const params::PhysicalParams& p,
                                   const params::DecoupledParams& d,
                                   const Eigen::Matrix2cd& b_mat,
                                   const params::SigmaPair& sigma,
                                   const geom::BoundaryQuadrature& gamma_q,
                                   const geom::BoundaryQuadrature& sigma_q,
                                   int threads = 1, bool with_robin = true);

// Right-hand-side contribution of the known scattering-boundary fluxes:
// G_m = (i sigma_m - d/dn_x) S_{k_m}[flux_m], recombined with E B^-1 and
// integrated against test traces on the outer boundary. flux_t / flux_p are
// mode-flux samples at the gamma_q points, oriented from the scatterer into
// the domain (see the orientation note above).
Eigen::VectorXcd assemble_nonlocal_rhs(const fem::FeSpace& s,
                                       const params::PhysicalParams& p,
                                       const params::DecoupledParams& d,
                                       const params::SigmaPair& sigma,
                                       const Eigen::VectorXcd& flux_t,
                                       const Eigen::VectorXcd& flux_p,
                                       const geom::BoundaryQuadrature& gamma_q,
                                       const geom::BoundaryQuadrature& sigma_q,
                                       int threads = 1);

// Scalar Helmholtz version of the same pair, for single-mode solves:
// block = <(i sigma - d/dn) D_kappa(u), v> - i sigma <u, v> on the outer
// boundary, rhs = <(i sigma - d/dn) S_kappa[flux], v>. with_robin as above.
DenseBlock scalar_nonlocal_block(const fem::FeSpace& s, Cplx kappa, Cplx sigma,
                                 const geom::BoundaryQuadrature& gamma_q,
                                 const geom::BoundaryQuadrature& sigma_q,
                                 int threads = 1, bool with_robin = true);

Eigen::VectorXcd scalar_nonlocal_rhs(const fem::FeSpace& s, Cplx kappa,
                                     Cplx sigma,
                                     const Eigen::VectorXcd& flux,
                                     const geom::BoundaryQuadrature& gamma_q,
                                     const geom::BoundaryQuadrature& sigma_q,
                                     int threads = 1);

}  // namespace miwave::layerpot
