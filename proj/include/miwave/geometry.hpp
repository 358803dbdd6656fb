#pragma once

// Triangle meshes for the two scattering geometries. Cells are 6-node
// quadratic triangles (3 corners + 3 edge midpoints); midpoints on curved
// boundary pieces are snapped to the analytic curve so the boundary is
// resolved one order better than the straight-sided mesh would allow, while
// interior edges stay straight. Boundary facets carry a tag (Gamma for the
// scatterer, Sigma for the outer truncation boundary) and an optional
// reference to the analytic curve they discretize.

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace miwave::geom {

enum class FacetTag { Gamma = 1, Sigma = 2 };

// Circular arc support; the only curved boundary kind the generators emit.
struct Curve {
  Eigen::Vector2d center;
  double radius;
};

// Local edge e of a cell runs from corner e to corner (e+1)%3 and owns
// midpoint node 3+e. Boundary traversal in this orientation keeps the domain
// on the left.
struct Facet {
  int cell;
  int edge;
  FacetTag tag;
  int curve;  // index into Mesh::curves, -1 when straight or parabolic
};

struct Mesh {
  std::vector<Eigen::Vector2d> vertices;   // corners and midpoints
  std::vector<std::array<int, 6>> cells;   // v0 v1 v2 m01 m12 m20, counterclockwise
  std::vector<Facet> facets;
  std::vector<Curve> curves;
  double h = 0.0;  // nominal spacing the mesh was generated with
};

// Square [-half_width, half_width]^2 with a centered circular hole. Circle
// facets are tagged Gamma and curved, square facets Sigma. Throws
// std::invalid_argument when h would leave the circle with fewer than
// 8 facets.
Mesh generate_square_with_hole(double half_width, double radius, double h);
Mesh generate_square_with_hole(double h);  // half_width 1.5, radius 2/3

// Rectangle (-0.1125, 0) x (0.1125, 0.723) minus a tuning fork: prongs of
// width 0.06 around a 0.03 wide slot whose bottom is rounded by a
// semicircular arc of radius 0.015 centered at (0, 0.298). Fork boundary is
// Gamma (arc facets curved), the rectangle Sigma. Throws when h cannot
// resolve the slot.
Mesh generate_tuning_fork(double h);

// ASCII Gmsh 2.2 subset: 3- or 6-node triangles, 2- or 3-node boundary lines
// with physical tag 1 (Gamma) or 2 (Sigma). 3-node triangles are promoted to
// 6-node by midpoint insertion. Throws std::runtime_error with file:line on
// parse errors and on violated mesh invariants. File meshes carry no
// analytic curves; their curved edges refine along the quadratic edge shape.
Mesh read_msh(const std::string& path);

// Writes the subset read_msh accepts; coordinates round-trip bit exactly.
void write_msh(const Mesh& m, const std::string& path);

// Uniform refinement: each triangle splits into 4, new boundary midpoints
// snap to the facet's analytic curve when it has one.
Mesh refine(const Mesh& m);

// Checks the mesh invariants (boundary edges belong to one cell and are all
// tagged, positive Jacobians, facets of each tag close into loops); throws
// std::runtime_error naming the violated invariant.
void validate(const Mesh& m);

// Point location by winding number of the tagged boundary, with analytic
// treatment of curved facets; facets without a curve reference count as
// straight chords.
bool contains(const Mesh& m, const Eigen::Vector2d& p);

// Area of the meshed domain via the quadratic geometry map.
double mesh_area(const Mesh& m);

// Quadratic geometry map of one cell at reference coordinates (xi, eta) on
// the unit triangle (0,0)-(1,0)-(0,1); map_jacobian returns det and
// optionally the Jacobian matrix (columns d x/d xi, d x/d eta).
Eigen::Vector2d map_point(const Mesh& m, int cell, double xi, double eta);
double map_jacobian(const Mesh& m, int cell, double xi, double eta,
                    Eigen::Matrix2d* jac = nullptr);

struct QuadPoint {
  Eigen::Vector2d x;   // physical position
  double w;            // weight including the arc-length Jacobian
  Eigen::Vector2d n;   // outward unit normal (out of the flow domain)
  int cell;            // parent cell
  double xi, eta;      // parent-cell reference coordinates
  int facet;           // index into Mesh::facets
};

struct BoundaryQuadrature {
  std::vector<QuadPoint> points;  // facet-major, per_facet points each
  int per_facet = 0;
  FacetTag tag = FacetTag::Gamma;
};

// Gauss-Legendre rule of `order` points per facet, mapped through the exact
// arc for curved facets and the quadratic edge shape otherwise.
BoundaryQuadrature boundary_quadrature(const Mesh& m, FacetTag tag, int order);

// Gauss-Legendre nodes and weights on [0,1]; exact through degree 2n-1.
void gauss_legendre(int n, std::vector<double>* t, std::vector<double>* w);

}  // namespace miwave::geom
