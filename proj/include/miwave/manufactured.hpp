// Closed-form reference solutions: a point source placed strictly inside the
// scatterer radiates one outgoing kernel per decoupled mode, and the physical
// temperature and pressure follow by the inverse mode transform. The pair
// satisfies the coupled equations and the radiation condition exactly, so it
// serves as the measuring stick for every solver configuration.
#pragma once

#include <complex>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "miwave/geometry.hpp"
#include "miwave/params.hpp"

namespace miwave::manufactured {

using Cplx = std::complex<double>;

struct PointSourceSolution {
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();  // source, inside the scatterer
  Cplx c_t{1.0, 0.0};                            // thermal mode amplitude
  Cplx c_p{1.0, 0.0};                            // acoustic mode amplitude
  params::PhysicalParams p;
  params::DecoupledParams d;
  params::DecoupleMatrix bm;
};

// Derives the mode parameters and transform for the given gas. The source
// must lie inside the scatterer (outside the flow domain); callers that hold
// the mesh check this with geom::contains.
PointSourceSolution point_source(const params::PhysicalParams& p,
                                 const Eigen::Vector2d& x0,
                                 Cplx c_t = Cplx(1.0, 0.0),
                                 Cplx c_p = Cplx(1.0, 0.0));

// Canonical source locations: the hole center of the square-with-hole domain
// and a point inside the left prong of the tuning fork.
Eigen::Vector2d square_hole_source();
Eigen::Vector2d tuning_fork_source();

// Mode values (V_t, V_p) = (c_t K_{k_t}(x - x0), c_p K_{k_p}(x - x0)).
// All evaluators throw std::invalid_argument at the source point itself.
Eigen::Vector2cd exact_modes(const PointSourceSolution& s,
                             const Eigen::Vector2d& x);

// Physical fields (T, P) = B^-1 (V_t, V_p).
Eigen::Vector2cd exact_fields(const PointSourceSolution& s,
                              const Eigen::Vector2d& x);

// Directional derivatives of the modes along n at x (closed form).
Eigen::Vector2cd exact_mode_neumann(const PointSourceSolution& s,
                                    const Eigen::Vector2d& x,
                                    const Eigen::Vector2d& n);

// Directional derivatives (dT/dn, dP/dn) of the physical fields.
Eigen::Vector2cd exact_neumann_at(const PointSourceSolution& s,
                                  const Eigen::Vector2d& x,
                                  const Eigen::Vector2d& n);

// Batch form of exact_neumann_at for quadrature point sets.
struct NeumannData {
  Eigen::VectorXcd g_t;  // dT/dn samples
  Eigen::VectorXcd g_p;  // dP/dn samples
};
NeumannData exact_neumann(const PointSourceSolution& s,
                          const std::vector<Eigen::Vector2d>& points,
                          const std::vector<Eigen::Vector2d>& normals);

// What the grid sampler writes per point.
enum class GridField { Fields, Modes };

// Regular grid over [lo.x, hi.x] x [lo.y, hi.y] with `resolution` intervals
// per side (resolution 1 samples the four corners). One CSV row per point;
// points inside the scatterer or outside the meshed domain keep their
// coordinates but leave the value columns empty. Throws on an empty box or
// nonpositive resolution.
void sample_grid(const PointSourceSolution& s, const geom::Mesh& m,
                 const Eigen::Vector2d& lo, const Eigen::Vector2d& hi,
                 int resolution, GridField which, std::ostream& out);

}  // namespace miwave::manufactured
