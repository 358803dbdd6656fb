#include "miwave/layerpot.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <atomic>
#include <stdexcept>
#include <thread>
#include <utility>
#include <vector>

#include "miwave/specfun.hpp"

namespace miwave::layerpot {
namespace {

using Vec2 = Eigen::Vector2d;

const Cplx kI(0.0, 1.0);

// Runs fn(lo, hi) over a partition of [0, n). Each index is handled by
// exactly one invocation, so per-index results never depend on the split.
template <class Fn>
void parallel_for(int n, int threads, const Fn& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

PotentialValues eval_layer(bool double_layer, Cplx kappa, const Sources& src,
                           const Eigen::VectorXcd& density, const Targets& tgt,
                           int threads) {
  const int ns = static_cast<int>(src.x.size());
  const int nt = static_cast<int>(tgt.x.size());
  if (static_cast<int>(src.w.size()) != ns ||
      static_cast<int>(src.n.size()) != ns) {
    throw std::invalid_argument("layerpot: inconsistent source arrays");
  }
  if (density.size() != ns) {
    throw std::invalid_argument("layerpot: density size does not match sources");
  }
  const bool want_dn = !tgt.n.empty();
  if (want_dn && static_cast<int>(tgt.n.size()) != nt) {
    throw std::invalid_argument("layerpot: target normal count mismatch");
  }

  PotentialValues out;
  out.value.setZero(nt);
  if (want_dn) out.dn.setZero(nt);
  std::atomic<bool> coincident{false};

  parallel_for(nt, threads, [&](int lo, int hi) {
    for (int t = lo; t < hi; ++t) {
      Cplx v(0.0);
      Cplx g(0.0);
      for (int q = 0; q < ns; ++q) {
        const Vec2 r = tgt.x[t] - src.x[q];
        if (r.squaredNorm() == 0.0) {
          coincident.store(true);
          return;
        }
        const Cplx wf = src.w[q] * density[q];
        if (double_layer) {
          v += wf * specfun::kernel_dny(kappa, r, src.n[q]);
          if (want_dn) {
            g += wf * specfun::kernel_dnx_dny(kappa, r, tgt.n[t], src.n[q]);
          }
        } else {
          v += wf * specfun::kernel(kappa, r);
          if (want_dn) g += wf * specfun::kernel_dnx(kappa, r, tgt.n[t]);
        }
      }
      out.value[t] = v;
      if (want_dn) out.dn[t] = g;
    }
  });
  if (coincident.load()) {
    throw std::invalid_argument("layerpot: target coincides with a source point");
  }
  return out;
}

// Sorted scalar dofs supported on a boundary, with an inverse position map.
struct DofIndex {
  std::vector<int> dofs;
  std::vector<int> pos;  // scalar_dofs entries, -1 where absent
};

DofIndex index_dofs(const fem::FeSpace& s, geom::FacetTag tag) {
  DofIndex di;
  di.dofs = fem::boundary_dofs(s, tag);
  di.pos.assign(s.scalar_dofs, -1);
  for (int i = 0; i < static_cast<int>(di.dofs.size()); ++i) {
    di.pos[di.dofs[i]] = i;
  }
  return di;
}

void check_tags(const geom::BoundaryQuadrature& gamma_q,
                const geom::BoundaryQuadrature& sigma_q) {
  if (gamma_q.tag != geom::FacetTag::Gamma) {
    throw std::invalid_argument(
        "layerpot: scattering-boundary quadrature has the wrong tag");
  }
  if (sigma_q.tag != geom::FacetTag::Sigma) {
    throw std::invalid_argument(
        "layerpot: outer-boundary quadrature has the wrong tag");
  }
}

// Shifted double-layer matrices of each (kappa, sigma) mode, sampled from the
// scattering-boundary trace and integrated against outer-boundary test
// traces, plus (optionally) the outer-boundary mass matrix. mats[m] has shape
// (sigma dofs) x (gamma dofs); robin has shape (sigma dofs) x (sigma dofs).
void boundary_mode_matrices(const TraceOperator& trg, const TraceOperator& trs,
                            const geom::BoundaryQuadrature& gamma_q,
                            const geom::BoundaryQuadrature& sigma_q,
                            const DofIndex& gi, const DofIndex& si,
                            const std::vector<std::pair<Cplx, Cplx>>& modes,
                            int threads, std::vector<Eigen::MatrixXcd>* mats,
                            Eigen::MatrixXcd* robin) {
  const int nx = trs.points;
  const int ny = trg.points;
  const int nrows = static_cast<int>(si.dofs.size());
  const int ngam = static_cast<int>(gi.dofs.size());
  const int nm = static_cast<int>(modes.size());

  mats->assign(nm, Eigen::MatrixXcd::Zero(nrows, ngam));
  if (robin != nullptr) robin->setZero(nrows, nrows);

  // Scattering-boundary sources with normals flipped toward the domain.
  std::vector<Vec2> ys(ny), nu(ny);
  std::vector<double> wy(ny);
  for (int q = 0; q < ny; ++q) {
    ys[q] = gamma_q.points[q].x;
    nu[q] = -gamma_q.points[q].n;
    wy[q] = gamma_q.points[q].w;
  }

  const int batch = 128;
  std::vector<Eigen::MatrixXcd> rowbuf(nm, Eigen::MatrixXcd(batch, ngam));
  std::atomic<bool> coincident{false};

  for (int b0 = 0; b0 < nx; b0 += batch) {
    const int bn = std::min(batch, nx - b0);
    parallel_for(bn, threads, [&](int lo, int hi) {
      for (int bt = lo; bt < hi; ++bt) {
        const int t = b0 + bt;
        const Vec2 xt = sigma_q.points[t].x;
        const Vec2 nx_t = sigma_q.points[t].n;
        for (int m = 0; m < nm; ++m) rowbuf[m].row(bt).setZero();
        for (int q = 0; q < ny; ++q) {
          const Vec2 r = xt - ys[q];
          if (r.squaredNorm() == 0.0) {
            coincident.store(true);
            return;
          }
          for (int m = 0; m < nm; ++m) {
            const Cplx ker =
                wy[q] * (kI * modes[m].second *
                             specfun::kernel_dny(modes[m].first, r, nu[q]) -
                         specfun::kernel_dnx_dny(modes[m].first, r, nx_t,
                                                 nu[q]));
            for (int j = 0; j < trg.dpc; ++j) {
              // Basis functions of dofs away from the facet vanish on it, up
              // to roundoff of the barycentric products; index by boundary
              // membership, not by the computed value.
              const int c = gi.pos[trg.dofs[q * trg.dpc + j]];
              if (c < 0) continue;
              rowbuf[m](bt, c) += ker * trg.phi[q * trg.dpc + j];
            }
          }
        }
      }
    });
    if (coincident.load()) {
      throw std::invalid_argument(
          "layerpot: coincident quadrature points on the two boundaries");
    }
    // Test-side accumulation runs sequentially in target order, so results
    // do not depend on the thread count.
    for (int bt = 0; bt < bn; ++bt) {
      const int t = b0 + bt;
      for (int i = 0; i < trs.dpc; ++i) {
        const int rr = si.pos[trs.dofs[t * trs.dpc + i]];
        if (rr < 0) continue;
        const double wphi = trs.weight[t] * trs.phi[t * trs.dpc + i];
        for (int m = 0; m < nm; ++m) {
          (*mats)[m].row(rr) += wphi * rowbuf[m].row(bt);
        }
        if (robin != nullptr) {
          for (int j = 0; j < trs.dpc; ++j) {
            const int cc = si.pos[trs.dofs[t * trs.dpc + j]];
            if (cc < 0) continue;
            (*robin)(rr, cc) += wphi * trs.phi[t * trs.dpc + j];
          }
        }
      }
    }
  }
}

// G_m(x) = (i sigma_m - d/dn_x) S_{kappa_m}[flux_m](x) at every
// outer-boundary quadrature point.
Eigen::MatrixXcd shifted_single_layers(
    const geom::BoundaryQuadrature& gamma_q,
    const geom::BoundaryQuadrature& sigma_q,
    const std::vector<std::pair<Cplx, Cplx>>& modes,
    const std::vector<const Eigen::VectorXcd*>& flux, int threads) {
  const int nx = static_cast<int>(sigma_q.points.size());
  const int ny = static_cast<int>(gamma_q.points.size());
  const int nm = static_cast<int>(modes.size());
  for (int m = 0; m < nm; ++m) {
    if (flux[m]->size() != ny) {
      throw std::invalid_argument(
          "layerpot: flux size does not match the scattering-boundary rule");
    }
  }
  Eigen::MatrixXcd g(nx, nm);
  std::atomic<bool> coincident{false};
  parallel_for(nx, threads, [&](int lo, int hi) {
    for (int t = lo; t < hi; ++t) {
      const Vec2 xt = sigma_q.points[t].x;
      const Vec2 nx_t = sigma_q.points[t].n;
      for (int m = 0; m < nm; ++m) {
        Cplx acc(0.0);
        for (int q = 0; q < ny; ++q) {
          const Vec2 r = xt - gamma_q.points[q].x;
          if (r.squaredNorm() == 0.0) {
            coincident.store(true);
            return;
          }
          acc += gamma_q.points[q].w * (*flux[m])[q] *
                 (kI * modes[m].second * specfun::kernel(modes[m].first, r) -
                  specfun::kernel_dnx(modes[m].first, r, nx_t));
        }
        g(t, m) = acc;
      }
    }
  });
  if (coincident.load()) {
    throw std::invalid_argument(
        "layerpot: coincident quadrature points on the two boundaries");
  }
  return g;
}

// Positions of the gamma and sigma dof lists inside their sorted union.
void union_positions(const std::vector<int>& gamma, const std::vector<int>& sigma,
                     std::vector<int>* uni, std::vector<int>* gpos,
                     std::vector<int>* spos) {
  uni->clear();
  uni->reserve(gamma.size() + sigma.size());
  std::merge(gamma.begin(), gamma.end(), sigma.begin(), sigma.end(),
             std::back_inserter(*uni));
  uni->erase(std::unique(uni->begin(), uni->end()), uni->end());
  const auto find = [&](int dof) {
    return static_cast<int>(
        std::lower_bound(uni->begin(), uni->end(), dof) - uni->begin());
  };
  gpos->resize(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) (*gpos)[i] = find(gamma[i]);
  spos->resize(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) (*spos)[i] = find(sigma[i]);
}

}  // namespace

Sources sources_from_quadrature(const geom::BoundaryQuadrature& q,
                                bool flip_normals) {
  Sources s;
  s.x.reserve(q.points.size());
  s.w.reserve(q.points.size());
  s.n.reserve(q.points.size());
  for (const auto& p : q.points) {
    s.x.push_back(p.x);
    s.w.push_back(p.w);
    s.n.push_back(flip_normals ? Vec2(-p.n) : p.n);
  }
  return s;
}

PotentialValues eval_single_layer(Cplx kappa, const Sources& src,
                                  const Eigen::VectorXcd& density,
                                  const Targets& tgt, int threads) {
  return eval_layer(false, kappa, src, density, tgt, threads);
}

PotentialValues eval_double_layer(Cplx kappa, const Sources& src,
                                  const Eigen::VectorXcd& density,
                                  const Targets& tgt, int threads) {
  return eval_layer(true, kappa, src, density, tgt, threads);
}

TraceOperator make_trace(const fem::FeSpace& s,
                         const geom::BoundaryQuadrature& q) {
  TraceOperator t;
  t.space = &s;
  t.points = static_cast<int>(q.points.size());
  t.dpc = fem::dofs_per_cell(s.degree);
  t.dofs.resize(static_cast<std::size_t>(t.points) * t.dpc);
  t.phi.resize(static_cast<std::size_t>(t.points) * t.dpc);
  t.weight.resize(t.points);
  double phi[16];
  for (int i = 0; i < t.points; ++i) {
    const auto& qp = q.points[i];
    fem::eval_basis(s.degree, qp.xi, qp.eta, phi);
    const auto& cd = s.cell_dofs[qp.cell];
    for (int j = 0; j < t.dpc; ++j) {
      t.dofs[static_cast<std::size_t>(i) * t.dpc + j] = cd[j];
      t.phi[static_cast<std::size_t>(i) * t.dpc + j] = phi[j];
    }
    t.weight[i] = qp.w;
  }
  return t;
}

Eigen::VectorXcd trace_values(const TraceOperator& t, const Eigen::VectorXcd& u,
                              int field) {
  const fem::FeSpace& s = *t.space;
  if (u.size() != s.dofs()) {
    throw std::invalid_argument("layerpot: coefficient vector size mismatch");
  }
  if (field < 0 || field >= s.field_count) {
    throw std::invalid_argument("layerpot: field index out of range");
  }
  const int base = field * s.scalar_dofs;
  Eigen::VectorXcd out(t.points);
  for (int i = 0; i < t.points; ++i) {
    Cplx v(0.0);
    for (int j = 0; j < t.dpc; ++j) {
      v += t.phi[i * t.dpc + j] * u[base + t.dofs[i * t.dpc + j]];
    }
    out[i] = v;
  }
  return out;
}

Eigen::VectorXcd adjoint_integrate(const TraceOperator& t,
                                   const Eigen::VectorXcd& values, int field) {
  const fem::FeSpace& s = *t.space;
  if (values.size() != t.points) {
    throw std::invalid_argument("layerpot: value count does not match the rule");
  }
  if (field < 0 || field >= s.field_count) {
    throw std::invalid_argument("layerpot: field index out of range");
  }
  const int base = field * s.scalar_dofs;
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(s.dofs());
  for (int i = 0; i < t.points; ++i) {
    for (int j = 0; j < t.dpc; ++j) {
      out[base + t.dofs[i * t.dpc + j]] +=
          t.weight[i] * t.phi[i * t.dpc + j] * values[i];
    }
  }
  return out;
}

Eigen::VectorXcd apply(const DenseBlock& b, const Eigen::VectorXcd& x) {
  if (x.size() != b.dofs) {
    throw std::invalid_argument("layerpot: vector size does not match block");
  }
  Eigen::VectorXcd xc(b.cols.size());
  for (std::size_t i = 0; i < b.cols.size(); ++i) xc[i] = x[b.cols[i]];
  const Eigen::VectorXcd ys = b.a * xc;
  Eigen::VectorXcd y = Eigen::VectorXcd::Zero(b.dofs);
  for (std::size_t i = 0; i < b.rows.size(); ++i) y[b.rows[i]] += ys[i];
  return y;
}

Eigen::MatrixXcd materialize(const DenseBlock& b) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(b.dofs, b.dofs);
  for (std::size_t i = 0; i < b.rows.size(); ++i) {
    for (std::size_t j = 0; j < b.cols.size(); ++j) {
      m(b.rows[i], b.cols[j]) = b.a(i, j);
    }
  }
  return m;
}

DenseBlock assemble_nonlocal_block(const fem::FeSpace& s,
                                   const params::PhysicalParams& p,
                                   const params::DecoupledParams& d,
                                   const Eigen::Matrix2cd& b_mat,
                                   const params::SigmaPair& sigma,
                                   const geom::BoundaryQuadrature& gamma_q,
                                   const geom::BoundaryQuadrature& sigma_q,
                                   int threads, bool with_robin) {
  if (s.field_count != 2) {
    throw std::invalid_argument(
        "layerpot: coupled assembly needs a two-field space");
  }
  check_tags(gamma_q, sigma_q);
  if (std::abs(b_mat.determinant()) < 1e-300) {
    throw std::invalid_argument("layerpot: mode matrix is singular");
  }
  const Eigen::Matrix2cd e = params::coefficient_matrices(p).e;
  const Eigen::Matrix2cd cmb = e * b_mat.inverse();
  Eigen::Matrix2cd sig_diag = Eigen::Matrix2cd::Zero();
  sig_diag(0, 0) = sigma.sigma_t;
  sig_diag(1, 1) = sigma.sigma_p;
  const Eigen::Matrix2cd a_robin = cmb * sig_diag * b_mat;

  const DofIndex gi = index_dofs(s, geom::FacetTag::Gamma);
  const DofIndex si = index_dofs(s, geom::FacetTag::Sigma);
  const TraceOperator trg = make_trace(s, gamma_q);
  const TraceOperator trs = make_trace(s, sigma_q);

  std::vector<Eigen::MatrixXcd> mats;
  Eigen::MatrixXcd robin;
  boundary_mode_matrices(trg, trs, gamma_q, sigma_q, gi, si,
                         {{d.k_t, sigma.sigma_t}, {d.k_p, sigma.sigma_p}},
                         threads, &mats, &robin);

  std::vector<int> uni, gpos, spos;
  union_positions(gi.dofs, si.dofs, &uni, &gpos, &spos);
  const int nr = static_cast<int>(si.dofs.size());
  const int nu = static_cast<int>(uni.size());
  const int n = s.scalar_dofs;

  DenseBlock blk;
  blk.dofs = s.dofs();
  blk.rows.reserve(2 * nr);
  for (int f = 0; f < 2; ++f) {
    for (int i = 0; i < nr; ++i) blk.rows.push_back(f * n + si.dofs[i]);
  }
  blk.cols.reserve(2 * nu);
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < nu; ++i) blk.cols.push_back(g * n + uni[i]);
  }
  blk.a.setZero(2 * nr, 2 * nu);
  for (int f = 0; f < 2; ++f) {
    for (int g = 0; g < 2; ++g) {
      for (int m = 0; m < 2; ++m) {
        const Cplx coef = cmb(f, m) * b_mat(m, g);
        if (coef == Cplx(0.0)) continue;
        for (std::size_t c = 0; c < gpos.size(); ++c) {
          blk.a.col(g * nu + gpos[c]).segment(f * nr, nr) +=
              coef * mats[m].col(static_cast<int>(c));
        }
      }
      const Cplx coef = -kI * a_robin(f, g);
      if (!with_robin || coef == Cplx(0.0)) continue;
      for (std::size_t c = 0; c < spos.size(); ++c) {
        blk.a.col(g * nu + spos[c]).segment(f * nr, nr) +=
            coef * robin.col(static_cast<int>(c));
      }
    }
  }
  return blk;
}

Eigen::VectorXcd assemble_nonlocal_rhs(const fem::FeSpace& s,
                                       const params::PhysicalParams& p,
                                       const params::DecoupledParams& d,
                                       const params::SigmaPair& sigma,
                                       const Eigen::VectorXcd& flux_t,
                                       const Eigen::VectorXcd& flux_p,
                                       const geom::BoundaryQuadrature& gamma_q,
                                       const geom::BoundaryQuadrature& sigma_q,
                                       int threads) {
  if (s.field_count != 2) {
    throw std::invalid_argument(
        "layerpot: coupled assembly needs a two-field space");
  }
  check_tags(gamma_q, sigma_q);
  const Eigen::Matrix2cd cmb = params::coefficient_matrices(p).e *
                               params::decouple_matrix(p, d).b_inv;

  const Eigen::MatrixXcd g = shifted_single_layers(
      gamma_q, sigma_q, {{d.k_t, sigma.sigma_t}, {d.k_p, sigma.sigma_p}},
      {&flux_t, &flux_p}, threads);

  const TraceOperator trs = make_trace(s, sigma_q);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(s.dofs());
  for (int t = 0; t < trs.points; ++t) {
    for (int f = 0; f < 2; ++f) {
      const Cplx gv = cmb(f, 0) * g(t, 0) + cmb(f, 1) * g(t, 1);
      for (int j = 0; j < trs.dpc; ++j) {
        rhs[f * s.scalar_dofs + trs.dofs[t * trs.dpc + j]] +=
            trs.weight[t] * trs.phi[t * trs.dpc + j] * gv;
      }
    }
  }
  return rhs;
}

DenseBlock scalar_nonlocal_block(const fem::FeSpace& s, Cplx kappa, Cplx sigma,
                                 const geom::BoundaryQuadrature& gamma_q,
                                 const geom::BoundaryQuadrature& sigma_q,
                                 int threads, bool with_robin) {
  if (s.field_count != 1) {
    throw std::invalid_argument(
        "layerpot: scalar assembly needs a single-field space");
  }
  check_tags(gamma_q, sigma_q);

  const DofIndex gi = index_dofs(s, geom::FacetTag::Gamma);
  const DofIndex si = index_dofs(s, geom::FacetTag::Sigma);
  const TraceOperator trg = make_trace(s, gamma_q);
  const TraceOperator trs = make_trace(s, sigma_q);

  std::vector<Eigen::MatrixXcd> mats;
  Eigen::MatrixXcd robin;
  boundary_mode_matrices(trg, trs, gamma_q, sigma_q, gi, si, {{kappa, sigma}},
                         threads, &mats, &robin);

  std::vector<int> uni, gpos, spos;
  union_positions(gi.dofs, si.dofs, &uni, &gpos, &spos);
  const int nr = static_cast<int>(si.dofs.size());

  DenseBlock blk;
  blk.dofs = s.dofs();
  blk.rows = si.dofs;
  blk.cols = uni;
  blk.a.setZero(nr, static_cast<int>(uni.size()));
  for (std::size_t c = 0; c < gpos.size(); ++c) {
    blk.a.col(gpos[c]) += mats[0].col(static_cast<int>(c));
  }
  if (with_robin) {
    for (std::size_t c = 0; c < spos.size(); ++c) {
      blk.a.col(spos[c]) += (-kI * sigma) * robin.col(static_cast<int>(c));
    }
  }
  return blk;
}

Eigen::VectorXcd scalar_nonlocal_rhs(const fem::FeSpace& s, Cplx kappa,
                                     Cplx sigma, const Eigen::VectorXcd& flux,
                                     const geom::BoundaryQuadrature& gamma_q,
                                     const geom::BoundaryQuadrature& sigma_q,
                                     int threads) {
  if (s.field_count != 1) {
    throw std::invalid_argument(
        "layerpot: scalar assembly needs a single-field space");
  }
  check_tags(gamma_q, sigma_q);
  const Eigen::MatrixXcd g =
      shifted_single_layers(gamma_q, sigma_q, {{kappa, sigma}}, {&flux}, threads);

  const TraceOperator trs = make_trace(s, sigma_q);
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(s.dofs());
  for (int t = 0; t < trs.points; ++t) {
    for (int j = 0; j < trs.dpc; ++j) {
      rhs[trs.dofs[t * trs.dpc + j]] +=
          trs.weight[t] * trs.phi[t * trs.dpc + j] * g(t, 0);
    }
  }
  return rhs;
}

}  // namespace miwave::layerpot
