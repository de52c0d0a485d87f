// Closed-form static potential integrals over a flat triangle:
//
//   I0(r) = int_T 1/|r - r'| dS'
//   I1(r) = int_T (r' - p)/|r - r'| dS'   (p = projection of r onto the plane)
//
// evaluated with the edge-wise decomposition of Wilton et al. These carry
// the 1/R singularity extracted from the Green's function on self and
// touching triangle pairs.
#pragma once

#include "charmode/core.hpp"

#include <array>
#include <cmath>

namespace charmode::em {

struct TriPotentialGeom {
  std::array<Vec3, 3> v;       // vertices
  std::array<Vec3, 3> edge_l;  // unit vectors along edges i -> i+1
  std::array<Vec3, 3> edge_u;  // outward in-plane edge normals
  Vec3 normal;                 // unit normal
  double diameter = 0.0;       // longest edge

  explicit TriPotentialGeom(const Vec3& a, const Vec3& b, const Vec3& c) {
    v = {a, b, c};
    normal = (b - a).cross(c - a).normalized();
    for (int i = 0; i < 3; ++i) {
      const Vec3 e = v[(i + 1) % 3] - v[i];
      diameter = std::max(diameter, e.norm());
      edge_l[i] = e.normalized();
      edge_u[i] = edge_l[i].cross(normal);
    }
  }
};

struct TriPotentials {
  double one_over_r = 0.0;  // I0
  Vec3 grad_term = Vec3::Zero();  // I1, an in-plane vector
};

inline TriPotentials static_potentials(const TriPotentialGeom& g, const Vec3& r) {
  const double d = g.normal.dot(r - g.v[0]);
  const Vec3 p = r - d * g.normal;
  const double abs_d = std::abs(d);
  const double tiny = 1e-20 * g.diameter * g.diameter;

  TriPotentials out;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = g.v[i];
    const Vec3& b = g.v[(i + 1) % 3];
    const double t = g.edge_u[i].dot(a - p);   // signed in-plane edge distance
    const double lm = g.edge_l[i].dot(a - p);
    const double lp = g.edge_l[i].dot(b - p);
    const double r0sq = t * t + d * d;
    const double rp = std::sqrt(r0sq + lp * lp);
    const double rm = std::sqrt(r0sq + lm * lm);

    // t*log and r0sq*log both vanish in the limit r0sq -> 0.
    double f2 = 0.0;
    if (r0sq > tiny) f2 = std::log((rp + lp) / (rm + lm));

    double beta = 0.0;
    const double dp = r0sq + abs_d * rp;
    const double dm = r0sq + abs_d * rm;
    if (dp > 0.0 && dm > 0.0)
      beta = std::atan(t * lp / dp) - std::atan(t * lm / dm);

    out.one_over_r += t * f2 - abs_d * beta;
    out.grad_term += 0.5 * (r0sq * f2 + lp * rp - lm * rm) * g.edge_u[i];
  }
  return out;
}

// int_T (r' - origin)/R dS' for an arbitrary reference point.
inline Vec3 static_vector_potential(const TriPotentialGeom& g, const Vec3& r,
                                    const TriPotentials& pot, const Vec3& origin) {
  const double d = g.normal.dot(r - g.v[0]);
  const Vec3 p = r - d * g.normal;
  return pot.grad_term + (p - origin) * pot.one_over_r;
}

}  // namespace charmode::em
