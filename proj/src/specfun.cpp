#include "miwave/specfun.hpp"

#include <quadmath.h>

#include <cmath>
#include <complex>
#include <stdexcept>

namespace miwave::specfun {
namespace {

using CplxL = std::complex<long double>;

constexpr long double kPi = 3.141592653589793238462643383279502884L;
constexpr long double kEuler = 0.577215664901532860606512090082402431L;

// Regime boundaries. Large arguments go to the asymptotic expansion, whose
// optimally truncated error is ~e^(-2|z|), comfortably below 1e-13 beyond
// |z| = 18. Below that the ascending series is used; its rounding error is
// amplified by e^(|z| + Im z) through cancellation between the growing terms
// and the exponentially small result, so the 64-bit-mantissa fast path is
// restricted to |z| + Im z <= 14 and the remainder of the disc runs in
// quad precision.
constexpr long double kAsymptoticSplit = 18.0L;
constexpr long double kSeriesFastBudget = 14.0L;

// ---------------------------------------------------------------------------
// quad-precision complex scratch arithmetic (only what the series needs)

struct QC {
  __float128 re, im;
};

inline QC operator+(QC a, QC b) { return {a.re + b.re, a.im + b.im}; }
inline QC operator-(QC a, QC b) { return {a.re - b.re, a.im - b.im}; }
inline QC operator*(QC a, QC b) {
  return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
inline QC operator*(__float128 s, QC a) { return {s * a.re, s * a.im}; }
inline QC qdiv(QC a, __float128 s) { return {a.re / s, a.im / s}; }
inline __float128 qabs(QC a) { return hypotq(a.re, a.im); }
inline QC qlog(QC a) { return {logq(qabs(a)), atan2q(a.im, a.re)}; }
inline QC qinv(QC a) {
  const __float128 d = a.re * a.re + a.im * a.im;
  return {a.re / d, -a.im / d};
}

__float128 quad_pi() {
  static const __float128 v =
      strtoflt128("3.14159265358979323846264338327950288419716939937511", nullptr);
  return v;
}

__float128 quad_euler() {
  static const __float128 v =
      strtoflt128("0.57721566490153286060651209008240243104215933593992", nullptr);
  return v;
}

// ---------------------------------------------------------------------------
// ascending series, 64-bit-mantissa path
//
// J_0(z) = sum_m q^m / (m!)^2,  q = -z^2/4
// Y_0(z) = (2/pi) [ (ln(z/2) + gamma) J_0(z) - sum_{m>=1} H_m q^m / (m!)^2 ]
// J_1(z) = (z/2) sum_m q^m / (m! (m+1)!)
// Y_1(z) = -2/(pi z) + (2/pi) ln(z/2) J_1(z)
//          - (z/(2 pi)) sum_m (H_m + H_{m+1} - 2 gamma) q^m / (m! (m+1)!)

CplxL hankel1_series(int order, CplxL z) {
  const CplxL q = -z * z * 0.25L;
  const long double eps = 1e-21L;

  if (order == 0) {
    CplxL term(1.0L, 0.0L);
    CplxL jsum = term;
    CplxL ysum(0.0L, 0.0L);
    long double harmonic = 0.0L;
    for (int m = 1; m <= 200; ++m) {
      term = term * q / static_cast<long double>(m) / static_cast<long double>(m);
      harmonic += 1.0L / static_cast<long double>(m);
      jsum += term;
      ysum -= harmonic * term;
      if (std::abs(term) < eps * (std::abs(jsum) + 1e-30L) && m > 4) break;
    }
    const CplxL lg = std::log(z * 0.5L) + kEuler;
    const CplxL y0 = (2.0L / kPi) * (lg * jsum + ysum);
    return jsum + CplxL(0.0L, 1.0L) * y0;
  }

  // order == 1
  CplxL term(1.0L, 0.0L);  // q^m / (m! (m+1)!)
  CplxL jsum = term;
  long double hm = 0.0L;   // H_m
  long double hm1 = 1.0L;  // H_{m+1}
  CplxL psum = (hm + hm1 - 2.0L * kEuler) * term;
  for (int m = 1; m <= 200; ++m) {
    term = term * q / static_cast<long double>(m) / static_cast<long double>(m + 1);
    hm += 1.0L / static_cast<long double>(m);
    hm1 += 1.0L / static_cast<long double>(m + 1);
    jsum += term;
    psum += (hm + hm1 - 2.0L * kEuler) * term;
    if (std::abs(term) < eps * (std::abs(jsum) + 1e-30L) && m > 4) break;
  }
  const CplxL j1 = 0.5L * z * jsum;
  const CplxL y1 = -2.0L / (kPi * z) + (2.0L / kPi) * std::log(z * 0.5L) * j1 -
                   (z / (2.0L * kPi)) * psum;
  return j1 + CplxL(0.0L, 1.0L) * y1;
}

// Same series in quad precision. Separate from the template-free fast path
// on purpose: the QC scratch type only exists inside this translation unit.
Cplx hankel1_series_quad(int order, Cplx zc) {
  const QC z{static_cast<__float128>(zc.real()), static_cast<__float128>(zc.imag())};
  const QC q = qdiv(QC{0, 0} - z * z, 4.0);
  const __float128 pi = quad_pi();
  const __float128 eps = 1e-36;

  if (order == 0) {
    QC term{1, 0};
    QC jsum = term;
    QC ysum{0, 0};
    __float128 harmonic = 0;
    for (int m = 1; m <= 400; ++m) {
      term = qdiv(term * q, static_cast<__float128>(m) * static_cast<__float128>(m));
      harmonic += 1.0 / static_cast<__float128>(m);
      jsum = jsum + term;
      ysum = ysum - harmonic * term;
      if (qabs(term) < eps * (qabs(jsum) + 1e-60) && m > 4) break;
    }
    const QC lg = qlog(qdiv(z, 2.0)) + QC{quad_euler(), 0};
    const QC y0 = (2.0 / pi) * (lg * jsum + ysum);
    const QC h = jsum + QC{0, 1} * y0;
    return {static_cast<double>(h.re), static_cast<double>(h.im)};
  }

  QC term{1, 0};
  QC jsum = term;
  __float128 hm = 0;
  __float128 hm1 = 1;
  const __float128 g2 = 2.0 * quad_euler();
  QC psum = (hm + hm1 - g2) * term;
  for (int m = 1; m <= 400; ++m) {
    term = qdiv(term * q, static_cast<__float128>(m) * static_cast<__float128>(m + 1));
    hm += 1.0 / static_cast<__float128>(m);
    hm1 += 1.0 / static_cast<__float128>(m + 1);
    jsum = jsum + term;
    psum = psum + (hm + hm1 - g2) * term;
    if (qabs(term) < eps * (qabs(jsum) + 1e-60) && m > 4) break;
  }
  const QC j1 = 0.5 * (z * jsum);
  const QC y1 = qdiv(QC{-2, 0} * qinv(z), pi) + (2.0 / pi) * (qlog(qdiv(z, 2.0)) * j1) -
                qdiv(z * psum, 2.0 * pi);
  const QC h = j1 + QC{0, 1} * y1;
  return {static_cast<double>(h.re), static_cast<double>(h.im)};
}

// ---------------------------------------------------------------------------
// large-argument expansion (DLMF 10.17.5)
//
// H_nu^(1)(z) ~ sqrt(2/(pi z)) e^{i(z - nu pi/2 - pi/4)} sum_k a_k(nu) (i/z)^k,
// a_k recurrence: a_k = a_{k-1} (4 nu^2 - (2k-1)^2) / (8k). Truncated at the
// smallest term; the attainable relative error is ~e^(-2|z|).

CplxL hankel1_asymptotic(int order, CplxL z) {
  const long double mu = 4.0L * order * order;
  CplxL term(1.0L, 0.0L);
  CplxL sum = term;
  long double prev = 1e30L;
  for (int k = 1; k <= 60; ++k) {
    const long double num = mu - (2.0L * k - 1.0L) * (2.0L * k - 1.0L);
    term = term * CplxL(0.0L, 1.0L) * (num / (8.0L * k)) / z;
    const long double mag = std::abs(term);
    if (mag >= prev) break;  // series started diverging
    sum += term;
    prev = mag;
    if (mag < 1e-22L * std::abs(sum)) break;
  }
  const long double phase_shift = 0.5L * kPi * order + 0.25L * kPi;
  const CplxL expo = std::exp(CplxL(0.0L, 1.0L) * (z - phase_shift));
  return std::sqrt(2.0L / (kPi * z)) * expo * sum;
}

}  // namespace

Cplx hankel1(int order, Cplx z) {
  if (order != 0 && order != 1) {
    throw std::invalid_argument("hankel1: only orders 0 and 1 are supported");
  }
  if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
    throw std::domain_error("hankel1: non-finite argument");
  }
  if (z.real() == 0.0 && z.imag() == 0.0) {
    throw std::domain_error("hankel1: argument must be nonzero");
  }
  if (z.imag() < 0.0) {
    throw std::domain_error("hankel1: argument must have nonnegative imaginary part");
  }

  const CplxL zl(z.real(), z.imag());
  const long double r = std::abs(zl);
  if (r > kAsymptoticSplit) {
    const CplxL h = hankel1_asymptotic(order, zl);
    return {static_cast<double>(h.real()), static_cast<double>(h.imag())};
  }
  if (r + zl.imag() <= kSeriesFastBudget) {
    const CplxL h = hankel1_series(order, zl);
    return {static_cast<double>(h.real()), static_cast<double>(h.imag())};
  }
  return hankel1_series_quad(order, z);
}

Cplx kernel(Cplx kappa, const Eigen::Vector2d& r, int dim) {
  if (dim == 3) {
    return kernel3d(kappa, Eigen::Vector3d(r.x(), r.y(), 0.0));
  }
  if (dim != 2) {
    throw std::invalid_argument("kernel: dim must be 2 or 3");
  }
  const double rho = r.norm();
  if (rho == 0.0) {
    throw std::domain_error("kernel: evaluation at the singular point");
  }
  return Cplx(0.0, 0.25) * hankel1(0, kappa * rho);
}

Cplx kernel3d(Cplx kappa, const Eigen::Vector3d& r) {
  const double rho = r.norm();
  if (rho == 0.0) {
    throw std::domain_error("kernel3d: evaluation at the singular point");
  }
  return std::exp(Cplx(0.0, 1.0) * kappa * rho) / (4.0 * M_PI * rho);
}

KernelValue kernel_with_gradient(Cplx kappa, const Eigen::Vector2d& r) {
  const double rho = r.norm();
  if (rho == 0.0) {
    throw std::domain_error("kernel_with_gradient: evaluation at the singular point");
  }
  KernelValue kv;
  kv.value = Cplx(0.0, 0.25) * hankel1(0, kappa * rho);
  // grad_x (i/4) H_0(kappa |x-y|) = -(i kappa/4) H_1(kappa rho) r/rho
  const Cplx scale = Cplx(0.0, -0.25) * kappa * hankel1(1, kappa * rho) / rho;
  kv.gradient = Eigen::Vector2cd(scale * r.x(), scale * r.y());
  return kv;
}

Cplx kernel_dny(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& ny) {
  const double rho = r.norm();
  if (rho == 0.0) {
    throw std::domain_error("kernel_dny: evaluation at the singular point");
  }
  // d/dn_y (i/4) H_0(kappa |x-y|) = (i kappa/4) H_1(kappa rho) (r . n_y)/rho
  return Cplx(0.0, 0.25) * kappa * hankel1(1, kappa * rho) * (r.dot(ny) / rho);
}

Cplx kernel_dnx(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& nx) {
  // the target-point derivative only differs by the sign of r
  return -kernel_dny(kappa, r, nx);
}

Cplx kernel_dnx_dny(Cplx kappa, const Eigen::Vector2d& r, const Eigen::Vector2d& nx,
                    const Eigen::Vector2d& ny) {
  const double rho = r.norm();
  if (rho == 0.0) {
    throw std::domain_error("kernel_dnx_dny: evaluation at the singular point");
  }
  const Cplx z = kappa * rho;
  const Cplx h0 = hankel1(0, z);
  const Cplx h1 = hankel1(1, z);
  const Cplx h2 = 2.0 / z * h1 - h0;  // H_2 by recurrence
  const double cx = r.dot(nx) / rho;
  const double cy = r.dot(ny) / rho;
  // d^2/dn_x dn_y K = (i k^2/4) (H_0 - H_2)/2 cx cy + (i k/4) H_1 (nx.ny - cx cy)/rho
  return Cplx(0.0, 0.25) * kappa * kappa * 0.5 * (h0 - h2) * cx * cy +
         Cplx(0.0, 0.25) * kappa * h1 * ((nx.dot(ny) - cx * cy) / rho);
}

}  // namespace miwave::specfun
