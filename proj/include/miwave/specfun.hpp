#pragma once

// Special functions for the Helmholtz kernels: Hankel functions of the first
// kind for complex argument in the closed upper half plane, and the free-space
// kernels (fundamental solutions) built from them together with their normal
// derivatives at source and target.

#include <complex>

#include <Eigen/Core>

namespace miwave::specfun {

using Cplx = std::complex<double>;

// H_nu^(1)(z) for nu in {0, 1}, Im z >= 0, z != 0.
// Ascending series for |z| <= 18, large-argument expansion beyond; series
// evaluations escalate from 80-bit to quad precision where cancellation
// against the e^(-Im z) decay would otherwise eat the accuracy, keeping the
// relative error near 1e-13 across 1e-2 <= |z| <= 1e3 in the whole closed
// upper half plane. Underflows to 0 rather than NaN when Im z is huge.
// Throws std::invalid_argument for other orders, std::domain_error for
// Im z < 0 or z = 0.
Cplx hankel1(int order, Cplx z);

// Fundamental solution K_kappa of -(Laplace) - kappa^2 evaluated at r = x - y:
// dim 2: (i/4) H_0^(1)(kappa |r|); dim 3: e^(i kappa |r|) / (4 pi |r|).
Cplx kernel(Cplx kappa, const Eigen::Vector2d& r, int dim = 2);
Cplx kernel3d(Cplx kappa, const Eigen::Vector3d& r);

// Kernel value together with its gradient with respect to the target point x.
// Gradient entries are finite whenever |r| > 0.
struct KernelValue {
  Cplx value;
  Eigen::Vector2cd gradient;
};
KernelValue kernel_with_gradient(Cplx kappa, const Eigen::Vector2d& r);

// Normal derivatives of the 2D kernel, r = x - y:
//   d/dn_y K = (i kappa / 4) H_1^(1)(kappa |r|) (r . n_y) / |r|
//   d/dn_x K = -(i kappa / 4) H_1^(1)(kappa |r|) (r . n_x) / |r|
//   d^2/dn_x dn_y K via H_2 = (2/z) H_1 - H_0.
Cplx kernel_dny(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& ny);
Cplx kernel_dnx(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& nx);
Cplx kernel_dnx_dny(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& nx,
                    const Eigen::Vector2d& ny);

}  // namespace miwave::specfun
