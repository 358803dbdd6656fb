#include "miwave/params.hpp"

#include <Eigen/LU>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace miwave::params {
namespace {

constexpr Cplx kI(0.0, 1.0);

Cplx viscous_factor(const PhysicalParams& p) {
  return 1.0 - kI * p.gamma * p.lambda;  // 1 - i gamma lambda
}

// Largest entry deviation of B E^-1 C B^-1 from -diag(k_t^2, k_p^2),
// relative to the dominant eigenvalue scale.
double similarity_residual(const PhysicalParams& p, const DecoupledParams& d) {
  const CoefficientMatrices cm = coefficient_matrices(p);
  const DecoupleMatrix bm = decouple_matrix(p, d);
  const Eigen::Matrix2cd s =
      bm.b * cm.e.inverse() * cm.c * bm.b_inv;
  Eigen::Matrix2cd target = Eigen::Matrix2cd::Zero();
  target(0, 0) = -d.k_t * d.k_t;
  target(1, 1) = -d.k_p * d.k_p;
  const double scale = std::max(std::abs(target(0, 0)), std::abs(target(1, 1)));
  return (s - target).cwiseAbs().maxCoeff() / scale;
}

bool first_quadrant(Cplx z) { return z.real() > 0.0 && z.imag() > 0.0; }

// Of the two square roots of w, return the one in the open first quadrant,
// or nullopt-like failure through the flag.
bool quadrant_root(Cplx w, Cplx* out) {
  const Cplx r = std::sqrt(w);
  if (first_quadrant(r)) {
    *out = r;
    return true;
  }
  if (first_quadrant(-r)) {
    *out = -r;
    return true;
  }
  return false;
}

}  // namespace

void PhysicalParams::validate() const {
  if (!std::isfinite(gamma) || !std::isfinite(m) || !std::isfinite(lambda)) {
    throw std::invalid_argument("params: non-finite value");
  }
  if (gamma <= 1.0) {
    throw std::invalid_argument("params: gamma must exceed 1");
  }
  if (m <= 0.0 || lambda <= 0.0) {
    throw std::invalid_argument("params: scale ratios must be positive");
  }
  if (m == lambda) {
    throw std::invalid_argument("params: m and lambda must differ");
  }
}

PhysicalParams read_params_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("params: cannot open " + path);
  }
  PhysicalParams p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string key;
    std::istringstream ls(line);
    if (!(ls >> key)) continue;  // blank
    std::string rest;
    std::getline(ls, rest);
    // accept "key = value" and "key value"
    const auto eq = rest.find('=');
    if (eq != std::string::npos) rest.erase(0, eq + 1);
    std::istringstream vs(rest);
    double value;
    std::string trailing;
    if (!(vs >> value) || (vs >> trailing)) {
      throw std::invalid_argument("params: bad value at " + path + ":" +
                                  std::to_string(lineno));
    }
    if (key == "gamma") {
      p.gamma = value;
    } else if (key == "M") {
      p.m = value;
    } else if (key == "Lambda") {
      p.lambda = value;
    } else {
      throw std::invalid_argument("params: unknown key '" + key + "' at " + path +
                                  ":" + std::to_string(lineno));
    }
  }
  p.validate();
  return p;
}

DecoupledParams derive_decoupled(const PhysicalParams& p) {
  p.validate();
  const double g = p.gamma;
  const double m = p.m;
  const double lam = p.lambda;
  const Cplx big_l = viscous_factor(p);

  // For gas-like parameters Q sits within 1e-9 of 1, so 1 - Q computed from
  // sqrt(Q^2) loses seven digits.  Expanding Q^2 - 1 in m and lambda removes
  // the cancellation:
  //   Q^2 - 1 = 4(i m + gamma m lambda) + w^2 - 1
  //           = -(gamma m - lambda)^2 + 2 i (2 m - gamma m - lambda),
  // and Q - 1 = (Q^2 - 1)/(1 + sqrt(1 + (Q^2 - 1))) keeps full precision
  // because the square root only enters a denominator near 2.
  const double gm = g * m;
  const Cplx q2m1(-(gm - lam) * (gm - lam), 2.0 * (2.0 * m - gm - lam));
  const Cplx qm1 = q2m1 / (1.0 + std::sqrt(1.0 + q2m1));
  const Cplx one_minus_q = -qm1;
  const Cplx one_plus_q = 2.0 + qm1;

  // The two roots of a complex square are antipodal, so at most one lies in
  // the open first quadrant; trying both signs of Q covers every branch
  // assignment (negating Q swaps the two modes).
  for (const double sq : {1.0, -1.0}) {
    const Cplx up = sq > 0.0 ? one_plus_q : one_minus_q;   // 1 + sq*Q
    const Cplx um = sq > 0.0 ? one_minus_q : one_plus_q;   // 1 - sq*Q
    const Cplx kt2 = (kI / (2.0 * m)) * (up - kI * (gm + lam)) / big_l;
    const Cplx kp2 = (kI / (2.0 * m)) * (um - kI * (gm + lam)) / big_l;
    DecoupledParams d;
    if (!quadrant_root(kt2, &d.k_t) || !quadrant_root(kp2, &d.k_p)) continue;
    if (std::abs(d.k_t) <= std::abs(d.k_p)) continue;  // the -q pass covers the swap
    const Cplx den = 2.0 * g * (lam - m) * (kI * lam * g - 1.0);
    const double s0 = 2.0 * lam * g - lam - m * g;
    d.q = sq * (1.0 + qm1);
    d.t_plus = m * (s0 + kI * um) / den;
    d.t_minus = m * (s0 + kI * up) / den;
    if (similarity_residual(p, d) > 1e-8) {
      throw std::runtime_error("derive_decoupled: branch candidate fails the"
                               " decoupling identity");
    }
    return d;
  }
  throw std::domain_error(
      "derive_decoupled: no square-root branch puts both wavenumbers in the"
      " first quadrant");
}

DecoupleMatrix decouple_matrix(const PhysicalParams& p, const DecoupledParams& d) {
  const Cplx big_l = viscous_factor(p);
  DecoupleMatrix bm;
  bm.b << p.m, d.t_plus * big_l, p.m, d.t_minus * big_l;
  const Cplx det = p.m * big_l * (d.t_minus - d.t_plus);
  if (std::abs(det) < 1e-300) {
    throw std::invalid_argument("decouple_matrix: degenerate parameters");
  }
  bm.b_inv << d.t_minus * big_l / det, -d.t_plus * big_l / det, -p.m / det,
      p.m / det;
  return bm;
}

CoefficientMatrices coefficient_matrices(const PhysicalParams& p) {
  const double g = p.gamma;
  const double ratio = p.lambda / p.m;
  CoefficientMatrices cm;
  cm.e = Eigen::Matrix2cd::Zero();
  cm.e(0, 0) = p.m;
  cm.e(1, 1) = viscous_factor(p);
  cm.c << -kI, kI * (g - 1.0) / g, g * (1.0 - ratio), -(g * (1.0 - ratio) + ratio);
  return cm;
}

BcMatrix bc_matrix(BcKind kind, const PhysicalParams& p, const DecoupledParams& d) {
  BcMatrix out;
  out.kind = kind;
  if (kind == BcKind::AdHoc) {
    out.a = Eigen::Matrix2cd::Zero();
    out.a(1, 1) = std::sqrt(p.gamma) * viscous_factor(p);
    return out;
  }
  const DecoupleMatrix bm = decouple_matrix(p, d);
  const CoefficientMatrices cm = coefficient_matrices(p);
  Eigen::Matrix2cd k = Eigen::Matrix2cd::Zero();
  k(0, 0) = d.k_t;
  k(1, 1) = d.k_p;
  out.a = cm.e * bm.b_inv * k * bm.b;
  return out;
}

Eigen::Vector2cd mode_neumann_data(Cplx g_t, Cplx g_p, const DecoupleMatrix& bm) {
  return bm.b * Eigen::Vector2cd(g_t, g_p);
}

}  // namespace miwave::params
