#pragma once
// Direct factorization of the sparse local operator, the composite
// local-plus-dense-block operator, full preconditioned GMRES, and the
// experiment driver that meshes, assembles, solves, and measures one
// configuration of the scattered-field gas problem.

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "miwave/fem.hpp"
#include "miwave/layerpot.hpp"
#include "miwave/params.hpp"

namespace miwave::solver {

using Cplx = std::complex<double>;

// Sparse LU of the local matrix with a fill-reducing column ordering. The
// constructor factorizes a compressed copy and checks it against a
// fixed-seed random probe, ||a solve(y) - y|| / ||y|| <= 1e-10; structural
// or numeric singularity surfaces as std::runtime_error, never as a silent
// bad factorization.
class LocalFactorization {
 public:
  explicit LocalFactorization(const fem::SparseMatrix& a);
  ~LocalFactorization();
  LocalFactorization(LocalFactorization&& other) noexcept;
  LocalFactorization& operator=(LocalFactorization&& other) noexcept;

  Eigen::VectorXcd solve(const Eigen::VectorXcd& y) const;
  Eigen::Index rows() const { return rows_; }

 private:
  struct Impl;  // hides the non-movable Eigen solver state
  std::unique_ptr<Impl> impl_;
  Eigen::Index rows_ = 0;
};

// The assembled operator a = sparse + dense; the dense block is absent for
// purely local boundary conditions. Both parts are borrowed and must
// outlive the operator.
struct CompositeOperator {
  const fem::SparseMatrix* sparse = nullptr;
  const layerpot::DenseBlock* dense = nullptr;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& x) const;
};

struct GmresReport {
  int iterations = 0;
  // Relative preconditioned residuals, entry 0 is the initial 1; for full
  // (non-restarted) iterations the sequence is nonincreasing.
  std::vector<double> residuals;
  bool converged = false;
  double true_residual = 0.0;  // ||a x - b|| / ||b||, unpreconditioned
  double seconds = 0.0;
};

// Full (no restart) left-preconditioned GMRES from a zero initial guess:
// modified Gram-Schmidt with one unconditional reorthogonalization pass and
// Givens rotations on the Hessenberg columns. pre == nullptr means the
// identity preconditioner. Convergence is declared on the preconditioned
// relative residual ||pre^-1 (a x - b)|| / ||pre^-1 b|| <= tol; a lucky
// breakdown converges, and an exhausted iteration budget returns the last
// (in exact arithmetic best) iterate with converged = false. The true
// residual is reported either way.
Eigen::VectorXcd gmres(const CompositeOperator& op,
                       const LocalFactorization* pre,
                       const Eigen::VectorXcd& b, double tol, int maxit,
                       GmresReport* report);

enum class Form { Coupled, Decoupled, Single };
enum class Bc { NeumannBoth, AdHoc, Transmission, Nonlocal };
enum class SigmaChoice { Zero, Wavenumber };
enum class GeometryKind { SquareHole, TuningFork, MshFile };

struct SolveConfig {
  GeometryKind geometry = GeometryKind::SquareHole;
  std::string msh_path;  // used only with GeometryKind::MshFile
  int level = 0;         // position on the geometry's refinement ladder
  int degree = 2;
  Form form = Form::Coupled;
  Bc bc = Bc::Nonlocal;
  SigmaChoice sigma = SigmaChoice::Wavenumber;
  double tol = 1e-12;
  int max_iterations = 200;
  bool precondition = true;
  int gamma_order = 10;  // panel quadrature order on the scatterer boundary
  int sigma_order = 6;   // quadrature order on the outer boundary
  int threads = 1;
};

struct SolveResult {
  // Coefficients on the two-field space: temperature block then pressure
  // block. Mode-space forms are back-transformed per dof; the single form
  // freezes the thermal mode at zero.
  Eigen::VectorXcd fields;
  int dofs = 0;
  int mesh_vertices = 0;  // corner plus midpoint nodes of the solved mesh
  double rel_l2 = 0.0;    // against the point-source reference solution
  // For the decoupled form the two scalar solves are merged: max
  // iterations, summed seconds, and-ed converged flags, and the history of
  // the longer run.
  GmresReport report;
};

// Meshes the requested geometry at the requested ladder level (the square
// with hole regenerates at size 0.3 / 2^level; the tuning fork and msh
// geometries refine uniformly from their base mesh), places the geometry's
// canonical point source, assembles the requested form and boundary
// condition with data taken from that source, solves with GMRES
// preconditioned by the factorized local part, and measures the relative
// L2 error. Throws std::invalid_argument on inconsistent configurations:
// the ad-hoc condition exists only for the coupled form, Neumann data on
// both boundaries only for the square with hole, and the source must land
// inside the scatterer.
SolveResult solve_morse_ingard(const SolveConfig& cfg,
                               const params::PhysicalParams& p);

}  // namespace miwave::solver
