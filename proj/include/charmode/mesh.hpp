// Triangular surface meshes with region labels and RWG edge-basis
// bookkeeping. Meshes are immutable after construction and safe to share
// between assembly workers.
#pragma once

#include "charmode/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace charmode::mesh {

enum class Region : std::uint8_t { passive = 0, fixed = 1, design = 2 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::passive: return "passive";
    case Region::fixed: return "fixed";
    default: return "design";
  }
}

inline Region region_from_name(const std::string& s) {
  if (s == "passive") return Region::passive;
  if (s == "fixed") return Region::fixed;
  if (s == "design") return Region::design;
  throw MeshError("unknown region label '" + s + "'");
}

struct Mesh {
  std::vector<Vec3> nodes;                   // meters
  std::vector<std::array<int, 3>> triangles;  // 0-based node indices
  std::vector<Region> region;                // per triangle
  std::vector<double> areas;                 // m^2, derived
  std::vector<Vec3> centroids;               // derived

  int triangle_count() const { return static_cast<int>(triangles.size()); }
  int node_count() const { return static_cast<int>(nodes.size()); }

  Vec3 vertex(int t, int local) const { return nodes[triangles[t][local]]; }
};

// Index sets of the region partition plus the constant densities carried by
// the non-design parts (passive -> 0, fixed -> 1).
struct RegionSpec {
  std::vector<int> design;
  std::vector<int> fixed;
  std::vector<int> passive;

  static RegionSpec of(const Mesh& m) {
    RegionSpec s;
    for (int t = 0; t < m.triangle_count(); ++t) {
      switch (m.region[t]) {
        case Region::design: s.design.push_back(t); break;
        case Region::fixed: s.fixed.push_back(t); break;
        case Region::passive: s.passive.push_back(t); break;
      }
    }
    return s;
  }

  // Baseline density: design triangles get `design_value`.
  Vec base_density(const Mesh& m, double design_value) const {
    Vec rho = Vec::Constant(m.triangle_count(), design_value);
    for (int t : fixed) rho[t] = 1.0;
    for (int t : passive) rho[t] = 0.0;
    return rho;
  }
};

namespace detail {

inline double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace detail

// Validates invariants and fills derived per-triangle data. Throws MeshError
// naming the first offending triangle.
inline Mesh finalize_mesh(std::vector<Vec3> nodes,
                          std::vector<std::array<int, 3>> triangles,
                          std::vector<Region> region) {
  Mesh m;
  m.nodes = std::move(nodes);
  m.triangles = std::move(triangles);
  if (region.empty()) region.assign(m.triangles.size(), Region::design);
  if (region.size() != m.triangles.size())
    throw MeshError("region label count does not match triangle count");
  m.region = std::move(region);
  if (m.nodes.empty() || m.triangles.empty())
    throw MeshError("mesh must contain at least one triangle");

  const int n_nodes = m.node_count();
  m.areas.resize(m.triangles.size());
  m.centroids.resize(m.triangles.size());
  for (int t = 0; t < m.triangle_count(); ++t) {
    const auto& tri = m.triangles[t];
    for (int v : tri)
      if (v < 0 || v >= n_nodes)
        throw MeshError("triangle " + std::to_string(t) +
                        " references node " + std::to_string(v) +
                        " outside [0," + std::to_string(n_nodes) + ")");
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw MeshError("triangle " + std::to_string(t) + " repeats a node");
    const double area =
        detail::triangle_area(m.nodes[tri[0]], m.nodes[tri[1]], m.nodes[tri[2]]);
    double scale = 0.0;
    for (int i = 0; i < 3; ++i)
      scale = std::max(scale, (m.nodes[tri[(i + 1) % 3]] - m.nodes[tri[i]]).squaredNorm());
    if (!(area > 1e-14 * scale))
      throw MeshError("triangle " + std::to_string(t) +
                      " is degenerate (zero area)");
    m.areas[t] = area;
    m.centroids[t] = (m.nodes[tri[0]] + m.nodes[tri[1]] + m.nodes[tri[2]]) / 3.0;
  }
  return m;
}

enum class DiagonalRule {
  fixed,       // one diagonal per cell, two triangles
  alternating  // both diagonals per cell (crosshatch), four triangles
};

inline DiagonalRule diagonal_rule_from_name(const std::string& s) {
  if (s == "fixed") return DiagonalRule::fixed;
  if (s == "alternating") return DiagonalRule::alternating;
  throw ConfigError("unknown diagonal rule '" + s + "'");
}

// Rectangular plate in the z = 0 plane, corner at the origin. All triangles
// are labelled design. With the alternating rule each of the nx*ny cells is
// split by both diagonals through an added center node (4 triangles per
// cell); the fixed rule splits every cell the same way (2 triangles).
// `jitter` (fraction of the cell size, < 0.5) optionally displaces interior
// grid nodes to break mesh symmetry; cell centers follow their corners.
inline Mesh generate_plate_mesh(double length, double width, int nx, int ny,
                                DiagonalRule rule = DiagonalRule::alternating,
                                double jitter = 0.0, std::uint64_t seed = 0) {
  if (!(length > 0.0) || !(width > 0.0))
    throw MeshError("plate dimensions must be positive");
  if (nx < 1 || ny < 1) throw MeshError("plate subdivision counts must be >= 1");
  if (jitter < 0.0 || jitter >= 0.5)
    throw MeshError("jitter fraction must lie in [0, 0.5)");

  const double dx = length / nx;
  const double dy = width / ny;
  std::vector<Vec3> nodes;
  nodes.reserve((nx + 1) * (ny + 1) + nx * ny);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) nodes.emplace_back(i * dx, j * dy, 0.0);

  if (jitter > 0.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    for (int j = 1; j < ny; ++j)
      for (int i = 1; i < nx; ++i) {
        Vec3& p = nodes[j * (nx + 1) + i];
        p.x() += u(rng) * dx;
        p.y() += u(rng) * dy;
      }
  }

  auto grid = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<std::array<int, 3>> tris;
  if (rule == DiagonalRule::alternating) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int v00 = grid(i, j), v10 = grid(i + 1, j);
        const int v11 = grid(i + 1, j + 1), v01 = grid(i, j + 1);
        const int c = static_cast<int>(nodes.size());
        nodes.push_back((nodes[v00] + nodes[v10] + nodes[v11] + nodes[v01]) / 4.0);
        tris.push_back({v00, v10, c});
        tris.push_back({v10, v11, c});
        tris.push_back({v11, v01, c});
        tris.push_back({v01, v00, c});
      }
  } else {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const int v00 = grid(i, j), v10 = grid(i + 1, j);
        const int v11 = grid(i + 1, j + 1), v01 = grid(i, j + 1);
        tris.push_back({v00, v10, v11});
        tris.push_back({v00, v11, v01});
      }
  }
  return finalize_mesh(std::move(nodes), std::move(tris), {});
}

// For generated plates: the cell index that produced triangle t.
inline int plate_cell_of_triangle(int t, DiagonalRule rule) {
  return rule == DiagonalRule::alternating ? t / 4 : t / 2;
}

// One RWG basis function per interior edge. The triangle with the lower
// index is the plus side; current flows from plus to minus across the edge.
struct EdgeBasis {
  int node_a = -1, node_b = -1;   // edge endpoints, node_a < node_b
  int tri_plus = -1, tri_minus = -1;
  int free_plus = -1, free_minus = -1;  // opposite (free) vertex node ids
  double length = 0.0;
};

struct BasisSet {
  std::vector<EdgeBasis> edges;
  // Per-triangle view: up to three bases touch a triangle (-1 padded).
  std::vector<std::array<int, 3>> tri_basis;
  std::vector<std::array<double, 3>> tri_sign;  // +1 plus side, -1 minus side
  std::vector<std::array<int, 3>> tri_free;     // free vertex node id

  int size() const { return static_cast<int>(edges.size()); }
};

inline BasisSet build_rwg(const Mesh& m) {
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> edge_map;
  for (int t = 0; t < m.triangle_count(); ++t) {
    const auto& tri = m.triangles[t];
    for (int e = 0; e < 3; ++e) {
      int a = tri[e], b = tri[(e + 1) % 3];
      const int opp = tri[(e + 2) % 3];
      if (a > b) std::swap(a, b);
      edge_map[{a, b}].emplace_back(t, opp);
    }
  }

  BasisSet basis;
  basis.tri_basis.assign(m.triangle_count(), {-1, -1, -1});
  basis.tri_sign.assign(m.triangle_count(), {0.0, 0.0, 0.0});
  basis.tri_free.assign(m.triangle_count(), {-1, -1, -1});

  // std::map iteration gives a deterministic (node-sorted) edge ordering.
  for (const auto& [key, tris] : edge_map) {
    if (tris.size() > 2)
      throw MeshError("non-manifold edge (" + std::to_string(key.first) + "," +
                      std::to_string(key.second) + ") shared by " +
                      std::to_string(tris.size()) + " triangles");
    if (tris.size() != 2) continue;  // open boundary edge carries no basis

    EdgeBasis e;
    e.node_a = key.first;
    e.node_b = key.second;
    auto [t0, f0] = tris[0];
    auto [t1, f1] = tris[1];
    if (t0 > t1) {
      std::swap(t0, t1);
      std::swap(f0, f1);
    }
    e.tri_plus = t0;
    e.free_plus = f0;
    e.tri_minus = t1;
    e.free_minus = f1;
    e.length = (m.nodes[e.node_a] - m.nodes[e.node_b]).norm();

    const int idx = basis.size();
    auto attach = [&](int t, double sign, int free) {
      auto& slots = basis.tri_basis[t];
      for (int s = 0; s < 3; ++s)
        if (slots[s] < 0) {
          slots[s] = idx;
          basis.tri_sign[t][s] = sign;
          basis.tri_free[t][s] = free;
          return;
        }
    };
    attach(e.tri_plus, +1.0, e.free_plus);
    attach(e.tri_minus, -1.0, e.free_minus);
    basis.edges.push_back(e);
  }
  if (basis.edges.empty())
    throw MeshError("mesh has no interior edges; no RWG basis can be built");
  return basis;
}

// ---------------------------------------------------------------------------
// Smallest enclosing sphere (Welzl) for the electrical-size reference radius.

namespace detail {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double r = -1.0;
  bool contains(const Vec3& p, double slack) const {
    return r >= 0.0 && (p - center).norm() <= r + slack;
  }
};

inline Sphere sphere_from_two(const Vec3& a, const Vec3& b) {
  Sphere s;
  s.center = 0.5 * (a + b);
  s.r = 0.5 * (a - b).norm();
  return s;
}

inline Sphere circumsphere_three(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a;
  const Vec3 n = ab.cross(ac);
  const double nn = n.squaredNorm();
  const double scale = std::max(ab.squaredNorm(), ac.squaredNorm());
  if (nn < 1e-24 * scale * scale) return Sphere{};  // collinear
  Sphere s;
  s.center = a + (ab.squaredNorm() * ac - ac.squaredNorm() * ab).cross(n) / (2.0 * nn);
  s.r = (s.center - a).norm();
  return s;
}

inline Sphere circumsphere_four(const Vec3& a, const Vec3& b, const Vec3& c,
                                const Vec3& d) {
  Eigen::Matrix3d m;
  m.row(0) = (b - a).transpose();
  m.row(1) = (c - a).transpose();
  m.row(2) = (d - a).transpose();
  Vec3 rhs(0.5 * (b.squaredNorm() - a.squaredNorm()),
           0.5 * (c.squaredNorm() - a.squaredNorm()),
           0.5 * (d.squaredNorm() - a.squaredNorm()));
  const double det = m.determinant();
  if (std::abs(det) < 1e-30) return Sphere{};  // coplanar
  Sphere s;
  s.center = m.fullPivLu().solve(rhs);
  s.r = (s.center - a).norm();
  return s;
}

// Minimal sphere through <= 4 support points: try all subsets, keep the
// smallest candidate that covers the support set. Robust to degenerate
// (collinear / coplanar) supports.
inline Sphere sphere_of_support(const std::vector<Vec3>& sup) {
  const double scale = [&] {
    double s = 0.0;
    for (const auto& p : sup) s = std::max(s, p.norm());
    return s + 1.0;
  }();
  const double slack = 1e-12 * scale;
  Sphere best;
  auto consider = [&](const Sphere& cand) {
    if (cand.r < 0.0) return;
    for (const auto& p : sup)
      if (!cand.contains(p, slack)) return;
    if (best.r < 0.0 || cand.r < best.r) best = cand;
  };
  const int n = static_cast<int>(sup.size());
  if (n == 0) return Sphere{Vec3::Zero(), 0.0};
  if (n == 1) return Sphere{sup[0], 0.0};
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) consider(sphere_from_two(sup[i], sup[j]));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k)
        consider(circumsphere_three(sup[i], sup[j], sup[k]));
  if (n == 4) consider(circumsphere_four(sup[0], sup[1], sup[2], sup[3]));
  return best;
}

inline Sphere welzl(std::vector<Vec3>& pts, std::size_t n, std::vector<Vec3>& sup) {
  if (n == 0 || sup.size() == 4) return sphere_of_support(sup);
  Sphere s = welzl(pts, n - 1, sup);
  const double scale = pts[n - 1].norm() + (s.r > 0 ? s.r : 1.0);
  if (s.contains(pts[n - 1], 1e-12 * scale)) return s;
  sup.push_back(pts[n - 1]);
  s = welzl(pts, n - 1, sup);
  sup.pop_back();
  // move-to-front keeps the expected recursion shallow
  std::rotate(pts.begin(), pts.begin() + (n - 1), pts.begin() + n);
  return s;
}

}  // namespace detail

// Radius of the smallest sphere enclosing all mesh nodes.
inline double circumscribing_radius(const Mesh& m) {
  std::vector<Vec3> pts = m.nodes;
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  std::shuffle(pts.begin(), pts.end(), rng);
  std::vector<Vec3> sup;
  return detail::welzl(pts, pts.size(), sup).r;
}

// Content hash for operator-cache keying (FNV-1a over geometry and labels).
inline std::uint64_t content_hash(const Mesh& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : m.nodes) {
    const double xyz[3] = {p.x(), p.y(), p.z()};
    mix(xyz, sizeof xyz);
  }
  for (const auto& t : m.triangles) mix(t.data(), sizeof(int) * 3);
  for (Region r : m.region) mix(&r, 1);
  return h;
}

}  // namespace charmode::mesh
