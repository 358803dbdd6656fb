#include "miwave/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace miwave::geom {
namespace {

constexpr double kPi = std::numbers::pi;

using Vec2 = Eigen::Vector2d;
using Tri3 = std::array<int, 3>;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Quadratic shape functions on the unit triangle, node order matching
// Mesh::cells: corners then midpoints of edges (0,1), (1,2), (2,0).
void shape_p2(double xi, double eta, double n[6]) {
  const double l0 = 1.0 - xi - eta;
  n[0] = l0 * (2.0 * l0 - 1.0);
  n[1] = xi * (2.0 * xi - 1.0);
  n[2] = eta * (2.0 * eta - 1.0);
  n[3] = 4.0 * l0 * xi;
  n[4] = 4.0 * xi * eta;
  n[5] = 4.0 * eta * l0;
}

void shape_p2_grad(double xi, double eta, double dn[6][2]) {
  const double l0 = 1.0 - xi - eta;
  dn[0][0] = 1.0 - 4.0 * l0;
  dn[0][1] = 1.0 - 4.0 * l0;
  dn[1][0] = 4.0 * xi - 1.0;
  dn[1][1] = 0.0;
  dn[2][0] = 0.0;
  dn[2][1] = 4.0 * eta - 1.0;
  dn[3][0] = 4.0 * (l0 - xi);
  dn[3][1] = -4.0 * xi;
  dn[4][0] = 4.0 * eta;
  dn[4][1] = 4.0 * xi;
  dn[5][0] = -4.0 * eta;
  dn[5][1] = 4.0 * (l0 - eta);
}

// Quadratic edge shape on [0,1] with nodes at t = 0, 1, 1/2.
Vec2 edge_eval(const Vec2& a, const Vec2& b, const Vec2& m, double t) {
  return (1.0 - t) * (1.0 - 2.0 * t) * a + t * (2.0 * t - 1.0) * b +
         4.0 * t * (1.0 - t) * m;
}

Vec2 edge_deriv(const Vec2& a, const Vec2& b, const Vec2& m, double t) {
  return (4.0 * t - 3.0) * a + (4.0 * t - 1.0) * b + (4.0 - 8.0 * t) * m;
}

// Degree-4 interior rule on the unit triangle (weights sum to the area 1/2).
struct TriRule {
  double xi, eta, w;
};
const TriRule kTriRule[6] = {
    {0.445948490915965, 0.445948490915965, 0.5 * 0.223381589678011},
    {0.445948490915965, 0.108103018168070, 0.5 * 0.223381589678011},
    {0.108103018168070, 0.445948490915965, 0.5 * 0.223381589678011},
    {0.091576213509771, 0.091576213509771, 0.5 * 0.109951743655322},
    {0.091576213509771, 0.816847572980459, 0.5 * 0.109951743655322},
    {0.816847572980459, 0.091576213509771, 0.5 * 0.109951743655322},
};

std::pair<int, int> edge_corners(const std::array<int, 6>& cell, int e) {
  return {cell[e], cell[(e + 1) % 3]};
}

std::int64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::int64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

Vec2 snap_to_curve(const Vec2& p, const Curve& c) {
  const Vec2 d = p - c.center;
  return c.center + (c.radius / d.norm()) * d;
}

// Vertex interning by exact coordinates, so adjacent structured blocks that
// evaluate the same partition points share vertices bitwise.
struct VertexPool {
  struct Key {
    std::uint64_t x, y;
    bool operator==(const Key&) const = default;
  };
  struct Hash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = k.x * 0x9e3779b97f4a7c15ull;
      h ^= k.y + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };
  std::vector<Vec2> pts;
  std::unordered_map<Key, int, Hash> index;

  int intern(const Vec2& p) {
    const double x = p.x() == 0.0 ? 0.0 : p.x();  // fold -0 into +0
    const double y = p.y() == 0.0 ? 0.0 : p.y();
    const Key k{std::bit_cast<std::uint64_t>(x), std::bit_cast<std::uint64_t>(y)};
    const auto [it, fresh] = index.try_emplace(k, static_cast<int>(pts.size()));
    if (fresh) pts.emplace_back(x, y);
    return it->second;
  }
};

// Lattice of a structured block, (i,j) right handed; each quad splits into
// two counterclockwise triangles.
void emit_block(const std::vector<std::vector<Vec2>>& grid, VertexPool* pool,
                std::vector<Tri3>* tris) {
  const int ni = static_cast<int>(grid.size()) - 1;
  const int nj = static_cast<int>(grid[0].size()) - 1;
  for (int i = 0; i < ni; ++i) {
    for (int j = 0; j < nj; ++j) {
      const int a = pool->intern(grid[i][j]);
      const int b = pool->intern(grid[i + 1][j]);
      const int c = pool->intern(grid[i + 1][j + 1]);
      const int d = pool->intern(grid[i][j + 1]);
      tris->push_back({a, b, c});
      tris->push_back({a, c, d});
    }
  }
}

std::vector<double> part(double a, double b, int n) {
  std::vector<double> t(n + 1);
  t[0] = a;
  t[n] = b;
  for (int i = 1; i < n; ++i) t[i] = a + (b - a) * (static_cast<double>(i) / n);
  return t;
}

std::vector<double> concat_parts(std::initializer_list<std::vector<double>> pieces) {
  std::vector<double> out;
  for (const auto& p : pieces) {
    const std::size_t from = out.empty() ? 0 : 1;  // drop the shared joint
    out.insert(out.end(), p.begin() + from, p.end());
  }
  return out;
}

// Classification result for one boundary edge.
struct EdgeClass {
  FacetTag tag;
  int curve;
};
using Classifier = std::function<EdgeClass(const Vec2&, const Vec2&)>;

// Promotes corner triangles to 6-node cells (midpoints on classified curved
// boundary edges snap to their curve) and records tagged facets.
Mesh assemble(VertexPool&& pool, const std::vector<Tri3>& tris,
              const Classifier& classify, std::vector<Curve> curves, double h) {
  Mesh m;
  m.vertices = std::move(pool.pts);
  m.curves = std::move(curves);
  m.h = h;

  struct Use {
    int count = 0;
    int cell = -1;
    int edge = -1;
  };
  std::unordered_map<std::int64_t, Use> uses;
  for (std::size_t c = 0; c < tris.size(); ++c) {
    for (int e = 0; e < 3; ++e) {
      Use& u = uses[edge_key(tris[c][e], tris[c][(e + 1) % 3])];
      ++u.count;
      u.cell = static_cast<int>(c);
      u.edge = e;
    }
  }

  // Classify boundary edges first so midpoint insertion knows where to snap.
  std::unordered_map<std::int64_t, EdgeClass> boundary;
  for (const auto& [key, u] : uses) {
    if (u.count != 1) continue;
    const auto [a, b] = edge_corners(
        {tris[u.cell][0], tris[u.cell][1], tris[u.cell][2], -1, -1, -1}, u.edge);
    boundary.emplace(key, classify(m.vertices[a], m.vertices[b]));
  }

  std::unordered_map<std::int64_t, int> midpoint;
  m.cells.reserve(tris.size());
  for (const Tri3& t : tris) {
    std::array<int, 6> cell{t[0], t[1], t[2], -1, -1, -1};
    for (int e = 0; e < 3; ++e) {
      const auto key = edge_key(t[e], t[(e + 1) % 3]);
      auto it = midpoint.find(key);
      if (it == midpoint.end()) {
        Vec2 p = 0.5 * (m.vertices[t[e]] + m.vertices[t[(e + 1) % 3]]);
        const auto bc = boundary.find(key);
        if (bc != boundary.end() && bc->second.curve >= 0) {
          p = snap_to_curve(p, m.curves[bc->second.curve]);
        }
        it = midpoint.emplace(key, static_cast<int>(m.vertices.size())).first;
        m.vertices.push_back(p);
      }
      cell[3 + e] = it->second;
    }
    m.cells.push_back(cell);
  }

  for (std::size_t c = 0; c < tris.size(); ++c) {
    for (int e = 0; e < 3; ++e) {
      const auto key = edge_key(tris[c][e], tris[c][(e + 1) % 3]);
      const auto bc = boundary.find(key);
      if (bc == boundary.end()) continue;
      const Use& u = uses.at(key);
      if (u.cell != static_cast<int>(c)) continue;  // emit once, by the owner
      m.facets.push_back({static_cast<int>(c), u.edge, bc->second.tag, bc->second.curve});
    }
  }

  validate(m);
  return m;
}

[[noreturn]] void invariant_error(const std::string& what) {
  throw std::runtime_error("mesh: " + what);
}

}  // namespace

void gauss_legendre(int n, std::vector<double>* t, std::vector<double>* w) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be positive");
  t->assign(n, 0.0);
  w->assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 60; ++iter) {
      double p = 1.0, pm = 0.0;
      for (int j = 0; j < n; ++j) {
        const double pmm = pm;
        pm = p;
        p = ((2.0 * j + 1.0) * x * pm - j * pmm) / (j + 1.0);
      }
      dp = n * (x * p - pm) / (x * x - 1.0);
      const double dx = p / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double weight = 2.0 / ((1.0 - x * x) * dp * dp);
    (*t)[i] = 0.5 * (1.0 - x);  // descending x maps to ascending t
    (*w)[i] = 0.5 * weight;
    (*t)[n - 1 - i] = 0.5 * (1.0 + x);
    (*w)[n - 1 - i] = 0.5 * weight;
  }
}

Eigen::Vector2d map_point(const Mesh& m, int cell, double xi, double eta) {
  double n[6];
  shape_p2(xi, eta, n);
  Vec2 x = Vec2::Zero();
  for (int i = 0; i < 6; ++i) x += n[i] * m.vertices[m.cells[cell][i]];
  return x;
}

double map_jacobian(const Mesh& m, int cell, double xi, double eta,
                    Eigen::Matrix2d* jac) {
  double dn[6][2];
  shape_p2_grad(xi, eta, dn);
  Eigen::Matrix2d j = Eigen::Matrix2d::Zero();
  for (int i = 0; i < 6; ++i) {
    const Vec2& v = m.vertices[m.cells[cell][i]];
    j(0, 0) += v.x() * dn[i][0];
    j(0, 1) += v.x() * dn[i][1];
    j(1, 0) += v.y() * dn[i][0];
    j(1, 1) += v.y() * dn[i][1];
  }
  if (jac) *jac = j;
  return j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0);
}

double mesh_area(const Mesh& m) {
  double area = 0.0;
  for (std::size_t c = 0; c < m.cells.size(); ++c) {
    for (const TriRule& q : kTriRule) {
      area += q.w * map_jacobian(m, static_cast<int>(c), q.xi, q.eta, nullptr);
    }
  }
  return area;
}

void validate(const Mesh& m) {
  if (m.cells.empty()) invariant_error("no cells");
  const int nv = static_cast<int>(m.vertices.size());
  for (const auto& cell : m.cells) {
    for (int idx : cell) {
      if (idx < 0 || idx >= nv) invariant_error("cell references a missing vertex");
    }
  }

  std::unordered_map<std::int64_t, int> uses;
  for (const auto& cell : m.cells) {
    for (int e = 0; e < 3; ++e) {
      const auto [a, b] = edge_corners(cell, e);
      if (++uses[edge_key(a, b)] > 2) invariant_error("edge shared by more than two cells");
    }
  }

  std::unordered_map<std::int64_t, int> facet_of;
  for (std::size_t f = 0; f < m.facets.size(); ++f) {
    const Facet& fc = m.facets[f];
    if (fc.cell < 0 || fc.cell >= static_cast<int>(m.cells.size()) || fc.edge < 0 ||
        fc.edge > 2) {
      invariant_error("facet references a missing cell edge");
    }
    if (fc.curve >= static_cast<int>(m.curves.size())) {
      invariant_error("facet references a missing curve");
    }
    const auto [a, b] = edge_corners(m.cells[fc.cell], fc.edge);
    const auto key = edge_key(a, b);
    if (uses.at(key) != 1) invariant_error("facet lies on an interior edge");
    if (!facet_of.emplace(key, static_cast<int>(f)).second) {
      invariant_error("boundary edge tagged twice");
    }
  }
  for (const auto& [key, count] : uses) {
    if (count == 1 && !facet_of.count(key)) invariant_error("untagged boundary edge");
  }

  for (std::size_t c = 0; c < m.cells.size(); ++c) {
    for (const TriRule& q : kTriRule) {
      if (map_jacobian(m, static_cast<int>(c), q.xi, q.eta, nullptr) <= 0.0) {
        invariant_error("nonpositive Jacobian in cell " + std::to_string(c));
      }
    }
  }

  // Facets of one tag must chain into closed loops: every touched corner
  // vertex sees exactly two facet endpoints of that tag.
  for (const FacetTag tag : {FacetTag::Gamma, FacetTag::Sigma}) {
    std::unordered_map<int, int> degree;
    for (const Facet& fc : m.facets) {
      if (fc.tag != tag) continue;
      const auto [a, b] = edge_corners(m.cells[fc.cell], fc.edge);
      ++degree[a];
      ++degree[b];
    }
    for (const auto& [v, d] : degree) {
      if (d != 2) {
        invariant_error("facet chain does not close at vertex " + std::to_string(v));
      }
    }
  }
}

bool contains(const Mesh& m, const Eigen::Vector2d& p) {
  double ang = 0.0;
  for (const Facet& fc : m.facets) {
    const auto [ia, ib] = edge_corners(m.cells[fc.cell], fc.edge);
    const Vec2& a = m.vertices[ia];
    const Vec2& b = m.vertices[ib];
    const Vec2 va = a - p;
    const Vec2 vb = b - p;
    ang += std::atan2(cross2(va, vb), va.dot(vb));
    if (fc.curve >= 0) {
      // The chord stands in for the arc above; a point between chord and arc
      // (= inside the circular segment cut off by the chord) sits on the
      // wrong side of the chord, so transfer it across.
      const Curve& cv = m.curves[fc.curve];
      const Vec2& mid = m.vertices[m.cells[fc.cell][3 + fc.edge]];
      const double side_mid = cross2(b - a, mid - a);
      const double side_p = cross2(b - a, p - a);
      if (side_mid * side_p > 0.0 && (p - cv.center).norm() < cv.radius) {
        ang += side_mid > 0.0 ? -2.0 * kPi : 2.0 * kPi;
      }
    }
  }
  return ang > kPi;  // winding 1 inside, 0 outside
}

Mesh generate_square_with_hole(double half_width, double radius, double h) {
  if (!(half_width > 0.0) || !(radius > 0.0) || !(radius < half_width) || !(h > 0.0)) {
    throw std::invalid_argument(
        "generate_square_with_hole: need 0 < radius < half_width and h > 0");
  }
  const double raw = 2.0 * kPi * radius / (0.8 * h);
  if (raw < 8.0) {
    throw std::invalid_argument(
        "generate_square_with_hole: h leaves the circle with fewer than 8 facets");
  }
  const int ntheta = static_cast<int>(std::max<long long>(8, 8 * std::llround(raw / 8.0)));
  const int nr =
      static_cast<int>(std::max<long long>(2, std::llround((half_width - radius) / (0.8 * h))));

  // Angular seeds start at the diagonal so the square's corners are grid
  // points; each ray blends from the circle to the centrally projected
  // square boundary point.
  std::vector<std::vector<Vec2>> grid(nr + 1, std::vector<Vec2>(ntheta + 1));
  for (int j = 0; j <= ntheta; ++j) {
    const int jj = j % ntheta;
    const double theta = kPi / 4.0 + 2.0 * kPi * jj / ntheta;
    const Vec2 d(std::cos(theta), std::sin(theta));
    const Vec2 c = radius * d;
    Vec2 q;
    if (jj % (ntheta / 4) == 0) {
      const int quadrant = jj / (ntheta / 4);
      const double sx = (quadrant == 0 || quadrant == 3) ? 1.0 : -1.0;
      const double sy = (quadrant <= 1) ? 1.0 : -1.0;
      q = Vec2(sx * half_width, sy * half_width);
    } else {
      q = (half_width / std::max(std::abs(d.x()), std::abs(d.y()))) * d;
    }
    for (int i = 0; i <= nr; ++i) {
      const double s = static_cast<double>(i) / nr;
      grid[i][j] = (1.0 - s) * c + s * q;
    }
  }

  VertexPool pool;
  std::vector<Tri3> tris;
  emit_block(grid, &pool, &tris);

  const double rtol = 1e-9 * radius;
  const double stol = 1e-9 * half_width;
  const auto on_circle = [&](const Vec2& p) { return std::abs(p.norm() - radius) < rtol; };
  const auto on_square = [&](const Vec2& p) {
    return std::abs(std::abs(p.x()) - half_width) < stol ||
           std::abs(std::abs(p.y()) - half_width) < stol;
  };
  const Classifier classify = [&](const Vec2& a, const Vec2& b) -> EdgeClass {
    if (on_circle(a) && on_circle(b)) return {FacetTag::Gamma, 0};
    if (on_square(a) && on_square(b)) return {FacetTag::Sigma, -1};
    throw std::logic_error("generate_square_with_hole: stray boundary edge");
  };
  return assemble(std::move(pool), tris, classify, {Curve{Vec2(0.0, 0.0), radius}}, h);
}

Mesh generate_square_with_hole(double h) {
  return generate_square_with_hole(1.5, 2.0 / 3.0, h);
}

Mesh generate_tuning_fork(double h) {
  if (!(h > 0.0)) throw std::invalid_argument("generate_tuning_fork: h must be positive");
  constexpr double kX0 = -0.1125, kX1 = -0.075, kX2 = -0.015, kX3 = 0.015,
                   kX4 = 0.075, kX5 = 0.1125;
  constexpr double kY0 = 0.0, kY1 = 0.05, kY2 = 0.673, kY3 = 0.723;
  const Curve arc{Vec2(0.0, 0.298), 0.015};

  if (std::llround((kX3 - kX2) / h) < 2) {
    throw std::invalid_argument("generate_tuning_fork: h too coarse for the 0.03 wide slot");
  }
  const auto count = [h](double len, long long floor_n) {
    return static_cast<int>(std::max(floor_n, std::llround(len / h)));
  };
  const int nxa = count(kX1 - kX0, 1);
  const int nxb = count(kX2 - kX1, 1);
  const int nxc = count(kX3 - kX2, 4);
  const int nya = count(kY1 - kY0, 1);
  const int nyb = count(kY2 - kY1, 1);
  const int nyc = count(kY3 - kY2, 1);
  const int nys = count(kY2 - arc.center.y(), 2);

  VertexPool pool;
  std::vector<Tri3> tris;
  const auto tensor_block = [&](const std::vector<double>& xs, const std::vector<double>& ys) {
    std::vector<std::vector<Vec2>> grid(xs.size(), std::vector<Vec2>(ys.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      for (std::size_t j = 0; j < ys.size(); ++j) grid[i][j] = Vec2(xs[i], ys[j]);
    }
    emit_block(grid, &pool, &tris);
  };

  // Strip below the fork, strips beside it, strip above it.
  tensor_block(concat_parts({part(kX0, kX1, nxa), part(kX1, kX2, nxb), part(kX2, kX3, nxc),
                             part(kX3, kX4, nxb), part(kX4, kX5, nxa)}),
               part(kY0, kY1, nya));
  const auto side_ys = concat_parts({part(kY1, kY2, nyb), part(kY2, kY3, nyc)});
  tensor_block(part(kX0, kX1, nxa), side_ys);
  tensor_block(part(kX4, kX5, nxa), side_ys);
  tensor_block(concat_parts({part(kX1, kX2, nxb), part(kX2, kX3, nxc), part(kX3, kX4, nxb)}),
               part(kY2, kY3, nyc));

  // The slot between the prongs: vertical blend from the semicircular bottom
  // arc up to the slot mouth, sharing the mouth partition with the top strip.
  {
    const std::vector<double> sx = part(kX2, kX3, nxc);
    std::vector<std::vector<Vec2>> grid(nxc + 1, std::vector<Vec2>(nys + 1));
    for (int i = 0; i <= nxc; ++i) {
      const double s = static_cast<double>(i) / nxc;
      const double phi = kPi * (1.0 + s);
      const Vec2 bottom = arc.center + arc.radius * Vec2(std::cos(phi), std::sin(phi));
      const Vec2 top(sx[i], kY2);
      for (int j = 0; j <= nys; ++j) {
        const double r = static_cast<double>(j) / nys;
        grid[i][j] = (1.0 - r) * bottom + r * top;
      }
    }
    emit_block(grid, &pool, &tris);
  }

  const double tol = 1e-9;
  const auto near = [tol](double v, double c) { return std::abs(v - c) < tol; };
  const Classifier classify = [&](const Vec2& a, const Vec2& b) -> EdgeClass {
    if ((near(a.y(), kY0) && near(b.y(), kY0)) || (near(a.y(), kY3) && near(b.y(), kY3)) ||
        (near(a.x(), kX0) && near(b.x(), kX0)) || (near(a.x(), kX5) && near(b.x(), kX5))) {
      return {FacetTag::Sigma, -1};
    }
    const auto on_arc = [&](const Vec2& p) {
      return std::abs((p - arc.center).norm() - arc.radius) < tol;
    };
    if (on_arc(a) && on_arc(b)) return {FacetTag::Gamma, 0};
    return {FacetTag::Gamma, -1};
  };
  return assemble(std::move(pool), tris, classify, {arc}, h);
}

Mesh refine(const Mesh& m) {
  Mesh out;
  out.vertices = m.vertices;
  out.curves = m.curves;
  out.h = 0.5 * m.h;

  std::unordered_map<std::int64_t, int> midpoint;
  const auto add_vertex = [&out](const Vec2& p) {
    out.vertices.push_back(p);
    return static_cast<int>(out.vertices.size()) - 1;
  };

  // New boundary midpoints first: quarter points of the parent facet, snapped
  // to its analytic curve when it carries one.
  for (const Facet& fc : m.facets) {
    const auto [ia, ib] = edge_corners(m.cells[fc.cell], fc.edge);
    const int im = m.cells[fc.cell][3 + fc.edge];
    for (const auto& [t, key] :
         {std::pair{0.25, edge_key(ia, im)}, std::pair{0.75, edge_key(im, ib)}}) {
      Vec2 p = edge_eval(m.vertices[ia], m.vertices[ib], m.vertices[im], t);
      if (fc.curve >= 0) p = snap_to_curve(p, m.curves[fc.curve]);
      midpoint.emplace(key, add_vertex(p));
    }
  }

  const auto midpoint_of = [&](int u, int v) {
    const auto key = edge_key(u, v);
    auto it = midpoint.find(key);
    if (it == midpoint.end()) {
      it = midpoint.emplace(key, add_vertex(0.5 * (out.vertices[u] + out.vertices[v]))).first;
    }
    return it->second;
  };

  out.cells.reserve(4 * m.cells.size());
  for (const auto& cell : m.cells) {
    const int v0 = cell[0], v1 = cell[1], v2 = cell[2];
    const int m01 = cell[3], m12 = cell[4], m20 = cell[5];
    const std::array<Tri3, 4> children = {
        Tri3{v0, m01, m20}, Tri3{m01, v1, m12}, Tri3{m20, m12, v2}, Tri3{m12, m20, m01}};
    for (const Tri3& ch : children) {
      out.cells.push_back({ch[0], ch[1], ch[2], midpoint_of(ch[0], ch[1]),
                           midpoint_of(ch[1], ch[2]), midpoint_of(ch[2], ch[0])});
    }
  }

  // Each parent facet splits into the two child edges along it.
  for (const Facet& fc : m.facets) {
    static constexpr int kChild[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    for (int half = 0; half < 2; ++half) {
      out.facets.push_back(
          {4 * fc.cell + kChild[fc.edge][half], fc.edge, fc.tag, fc.curve});
    }
  }

  validate(out);
  return out;
}

BoundaryQuadrature boundary_quadrature(const Mesh& m, FacetTag tag, int order) {
  if (order < 1) throw std::invalid_argument("boundary_quadrature: order must be >= 1");
  std::vector<double> t, w;
  gauss_legendre(order, &t, &w);

  BoundaryQuadrature bq;
  bq.per_facet = order;
  bq.tag = tag;
  for (std::size_t f = 0; f < m.facets.size(); ++f) {
    const Facet& fc = m.facets[f];
    if (fc.tag != tag) continue;
    const auto [ia, ib] = edge_corners(m.cells[fc.cell], fc.edge);
    const Vec2& a = m.vertices[ia];
    const Vec2& b = m.vertices[ib];
    const Vec2& mid = m.vertices[m.cells[fc.cell][3 + fc.edge]];
    for (int i = 0; i < order; ++i) {
      QuadPoint qp;
      qp.cell = fc.cell;
      qp.facet = static_cast<int>(f);
      switch (fc.edge) {
        case 0: qp.xi = t[i]; qp.eta = 0.0; break;
        case 1: qp.xi = 1.0 - t[i]; qp.eta = t[i]; break;
        default: qp.xi = 0.0; qp.eta = 1.0 - t[i]; break;
      }
      if (fc.curve >= 0) {
        // Exact arc: uniform in angle between the endpoint angles, weights
        // from the exact arc length, normals radial with the sign set by the
        // traversal direction (domain on the left).
        const Curve& cv = m.curves[fc.curve];
        const Vec2 da = a - cv.center;
        const Vec2 db = b - cv.center;
        const double alpha = std::atan2(da.y(), da.x());
        const double delta =
            std::remainder(std::atan2(db.y(), db.x()) - alpha, 2.0 * kPi);
        const double phi = alpha + delta * t[i];
        const Vec2 radial(std::cos(phi), std::sin(phi));
        qp.x = cv.center + cv.radius * radial;
        qp.w = w[i] * cv.radius * std::abs(delta);
        qp.n = (delta > 0.0 ? 1.0 : -1.0) * radial;
      } else {
        qp.x = edge_eval(a, b, mid, t[i]);
        const Vec2 tang = edge_deriv(a, b, mid, t[i]);
        const double len = tang.norm();
        qp.w = w[i] * len;
        qp.n = Vec2(tang.y(), -tang.x()) / len;
      }
      bq.points.push_back(qp);
    }
  }
  return bq;
}

namespace {

struct MshReader {
  std::ifstream in;
  std::string path;
  int lineno = 0;

  explicit MshReader(const std::string& p) : in(p), path(p) {
    if (!in) throw std::runtime_error("read_msh: cannot open " + p);
  }
  bool next(std::string* line) {
    if (!std::getline(in, *line)) return false;
    ++lineno;
    if (!line->empty() && line->back() == '\r') line->pop_back();
    return true;
  }
  std::string require() {
    std::string line;
    if (!next(&line)) fail("unexpected end of file");
    return line;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error("read_msh: " + what + " at " + path + ":" +
                             std::to_string(lineno));
  }
};

}  // namespace

Mesh read_msh(const std::string& path) {
  MshReader r(path);

  std::vector<Vec2> nodes;
  std::unordered_map<long long, int> node_of;
  struct LineElem {
    int a, b, mid, phys;
  };
  std::vector<LineElem> lines;
  std::vector<std::array<int, 6>> cells;  // mid = -1 when not given
  bool have_nodes = false, have_elements = false;

  std::string line;
  while (r.next(&line)) {
    std::istringstream h(line);
    std::string section;
    if (!(h >> section) || section.empty() || section[0] != '$') continue;
    if (section == "$MeshFormat") {
      std::istringstream fs(r.require());
      double version = 0.0;
      int filetype = -1, datasize = 0;
      if (!(fs >> version >> filetype >> datasize)) r.fail("bad $MeshFormat record");
      if (static_cast<int>(version) != 2) r.fail("unsupported MSH version (want 2.2)");
      if (filetype != 0) r.fail("binary MSH is not supported");
      if (r.require() != "$EndMeshFormat") r.fail("expected $EndMeshFormat");
    } else if (section == "$Nodes") {
      long long count = -1;
      if (!(std::istringstream(r.require()) >> count) || count < 0) r.fail("bad node count");
      nodes.reserve(count);
      for (long long i = 0; i < count; ++i) {
        std::istringstream ns(r.require());
        long long id;
        double x, y, z;
        if (!(ns >> id >> x >> y >> z)) r.fail("bad node record");
        if (!node_of.emplace(id, static_cast<int>(nodes.size())).second) {
          r.fail("duplicate node id " + std::to_string(id));
        }
        nodes.emplace_back(x, y);
      }
      if (r.require() != "$EndNodes") r.fail("expected $EndNodes");
      have_nodes = true;
    } else if (section == "$Elements") {
      long long count = -1;
      if (!(std::istringstream(r.require()) >> count) || count < 0) {
        r.fail("bad element count");
      }
      const auto local = [&](long long id) {
        const auto it = node_of.find(id);
        if (it == node_of.end()) r.fail("element references unknown node " + std::to_string(id));
        return it->second;
      };
      for (long long i = 0; i < count; ++i) {
        std::istringstream es(r.require());
        long long id;
        int type, ntags;
        if (!(es >> id >> type >> ntags)) r.fail("bad element record");
        std::vector<int> tags(ntags);
        for (int k = 0; k < ntags; ++k) {
          if (!(es >> tags[k])) r.fail("bad element record");
        }
        const auto need = [&](int n, long long ids[6]) {
          for (int k = 0; k < n; ++k) {
            if (!(es >> ids[k])) r.fail("bad element record");
          }
        };
        long long ids[6];
        if (type == 1 || type == 8) {
          if (ntags < 1) r.fail("boundary line without a physical tag");
          if (tags[0] != 1 && tags[0] != 2) {
            r.fail("unknown physical tag " + std::to_string(tags[0]));
          }
          need(type == 1 ? 2 : 3, ids);
          lines.push_back({local(ids[0]), local(ids[1]),
                           type == 8 ? local(ids[2]) : -1, tags[0]});
        } else if (type == 2) {
          need(3, ids);
          cells.push_back({local(ids[0]), local(ids[1]), local(ids[2]), -1, -1, -1});
        } else if (type == 9) {
          need(6, ids);
          cells.push_back({local(ids[0]), local(ids[1]), local(ids[2]), local(ids[3]),
                           local(ids[4]), local(ids[5])});
        } else {
          r.fail("unsupported element type " + std::to_string(type));
        }
      }
      if (r.require() != "$EndElements") r.fail("expected $EndElements");
      have_elements = true;
    } else {
      const std::string end = "$End" + section.substr(1);
      while (true) {
        if (!r.next(&line)) r.fail("missing " + end);
        if (line == end) break;
      }
    }
  }
  if (!have_nodes || !have_elements) {
    r.fail("file lacks $Nodes or $Elements");
  }

  Mesh m;
  m.vertices = std::move(nodes);

  // Shared-edge midpoints: 3-node boundary lines and 6-node cells pin them;
  // everything else gets the straight midpoint.
  std::unordered_map<std::int64_t, int> midpoint;
  const auto pin = [&](int a, int b, int mid) {
    const auto [it, fresh] = midpoint.emplace(edge_key(a, b), mid);
    if (!fresh && it->second != mid) {
      throw std::runtime_error("read_msh: conflicting midpoints on a shared edge in " + path);
    }
  };
  for (const LineElem& le : lines) {
    if (le.mid >= 0) pin(le.a, le.b, le.mid);
  }
  for (const auto& cell : cells) {
    if (cell[3] < 0) continue;
    for (int e = 0; e < 3; ++e) pin(cell[e], cell[(e + 1) % 3], cell[3 + e]);
  }
  for (auto& cell : cells) {
    for (int e = 0; e < 3; ++e) {
      const auto key = edge_key(cell[e], cell[(e + 1) % 3]);
      auto it = midpoint.find(key);
      if (it == midpoint.end()) {
        m.vertices.push_back(0.5 * (m.vertices[cell[e]] + m.vertices[cell[(e + 1) % 3]]));
        it = midpoint.emplace(key, static_cast<int>(m.vertices.size()) - 1).first;
      }
      cell[3 + e] = it->second;
    }
  }
  m.cells = std::move(cells);

  struct Owner {
    int count = 0, cell = -1, edge = -1;
  };
  std::unordered_map<std::int64_t, Owner> owner;
  for (std::size_t c = 0; c < m.cells.size(); ++c) {
    for (int e = 0; e < 3; ++e) {
      const auto [a, b] = edge_corners(m.cells[c], e);
      Owner& o = owner[edge_key(a, b)];
      ++o.count;
      o.cell = static_cast<int>(c);
      o.edge = e;
    }
  }
  double hsum = 0.0;
  for (const LineElem& le : lines) {
    const auto it = owner.find(edge_key(le.a, le.b));
    if (it == owner.end() || it->second.count != 1) {
      throw std::runtime_error("read_msh: tagged line is not a boundary edge in " + path);
    }
    m.facets.push_back({it->second.cell, it->second.edge,
                        le.phys == 1 ? FacetTag::Gamma : FacetTag::Sigma, -1});
    hsum += (m.vertices[le.a] - m.vertices[le.b]).norm();
  }
  m.h = m.facets.empty() ? 0.0 : hsum / static_cast<double>(m.facets.size());

  validate(m);
  return m;
}

void write_msh(const Mesh& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_msh: cannot open " + path);
  char buf[128];
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n" << m.vertices.size() << "\n";
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g 0\n", i + 1, m.vertices[i].x(),
                  m.vertices[i].y());
    out << buf;
  }
  out << "$EndNodes\n$Elements\n" << m.facets.size() + m.cells.size() << "\n";
  std::size_t id = 1;
  for (const Facet& fc : m.facets) {
    const auto [a, b] = edge_corners(m.cells[fc.cell], fc.edge);
    const int mid = m.cells[fc.cell][3 + fc.edge];
    const int phys = fc.tag == FacetTag::Gamma ? 1 : 2;
    out << id++ << " 8 2 " << phys << ' ' << phys << ' ' << a + 1 << ' ' << b + 1 << ' '
        << mid + 1 << "\n";
  }
  for (const auto& cell : m.cells) {
    out << id++ << " 9 2 0 0";
    for (int idx : cell) out << ' ' << idx + 1;
    out << "\n";
  }
  out << "$EndElements\n";
  if (!out) throw std::runtime_error("write_msh: write failed for " + path);
}

}  // namespace miwave::geom
