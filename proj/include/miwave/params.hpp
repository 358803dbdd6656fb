#pragma once

// Gas parameters and the decoupling algebra: the thermoacoustic system in the
// fields U = (T, P) turns into two scalar Helmholtz problems in the mode
// fields V = (V_t, V_p) = B U, with a strongly damped thermal wavenumber k_t
// and a weakly damped acoustic wavenumber k_p. Also the 2x2 matrices of the
// local (ad hoc / transmission) absorbing boundary conditions.

#include <complex>
#include <string>

#include <Eigen/Core>

namespace miwave {

using Cplx = std::complex<double>;

namespace params {

struct PhysicalParams {
  double gamma = 1.4;                   // ratio of specific heats
  double m = 3.664152973215096e-5;      // thermal-scale ratio
  double lambda = 5.370572762330994e-5; // viscous-scale ratio

  // throws std::invalid_argument unless gamma > 1, m > 0, lambda > 0,
  // m != lambda, all finite
  void validate() const;
};

// Key-value file with keys gamma, M, Lambda ("key = value" or "key value"
// per line, # comments). Missing keys keep their defaults; unknown keys are
// an error. The result is validated.
PhysicalParams read_params_file(const std::string& path);

struct DecoupledParams {
  Cplx q;        // the square root discriminant, sign-fixed by the branch rule
  Cplx t_plus;   // mode-mixing coefficients; |t_plus| << |t_minus| for gases
  Cplx t_minus;
  Cplx k_t;      // thermal wavenumber, Re ~ Im (strong damping)
  Cplx k_p;      // acoustic wavenumber, Im << 1
};

// Square-root branches are resolved by requiring both wavenumbers in the
// open first quadrant and |k_t| > |k_p|; throws std::domain_error when no
// branch assignment achieves that. The returned set is self-checked against
// the similarity identity B E^-1 C B^-1 = -diag(k_t^2, k_p^2).
DecoupledParams derive_decoupled(const PhysicalParams& p);

struct DecoupleMatrix {
  Eigen::Matrix2cd b;      // [[m, t+ L], [m, t- L]], L = 1 - i gamma lambda
  Eigen::Matrix2cd b_inv;
};

// throws std::invalid_argument if |det B| < 1e-300
DecoupleMatrix decouple_matrix(const PhysicalParams& p, const DecoupledParams& d);

struct CoefficientMatrices {
  Eigen::Matrix2cd e;  // diag(m, 1 - i gamma lambda)
  Eigen::Matrix2cd c;  // zeroth-order coupling terms; the PDE is -E dU + C U = 0
};

CoefficientMatrices coefficient_matrices(const PhysicalParams& p);

enum class BcKind { AdHoc, Transmission };

struct BcMatrix {
  Eigen::Matrix2cd a;
  BcKind kind;
};

// Matrix of the local absorbing condition E dU/dn = i A U on the outer
// boundary. AdHoc: only the pressure entry sqrt(gamma) (1 - i gamma lambda)
// is nonzero. Transmission: A = E B^-1 diag(k_t, k_p) B, the exact per-mode
// radiation condition dV_m/dn = i k_m V_m mapped back to (T, P).
BcMatrix bc_matrix(BcKind kind, const PhysicalParams& p, const DecoupledParams& d);

// Neumann data transforms by the same change of variables as the fields.
Eigen::Vector2cd mode_neumann_data(Cplx g_t, Cplx g_p, const DecoupleMatrix& bm);

// Shift parameters of the subtracted-phase nonlocal condition.
struct SigmaPair {
  Cplx sigma_t;
  Cplx sigma_p;
};

inline SigmaPair zero_sigma() { return {Cplx(0, 0), Cplx(0, 0)}; }
inline SigmaPair wavenumber_sigma(const DecoupledParams& d) { return {d.k_t, d.k_p}; }

}  // namespace params
}  // namespace miwave
