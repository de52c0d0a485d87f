// Symmetric Gaussian quadrature rules on the reference triangle.
// Points are barycentric, weights sum to one (scale by the triangle area).
#pragma once

#include "charmode/core.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace charmode::em {

struct TriQuadRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weight;
  int degree = 0;  // highest total polynomial degree integrated exactly
};

namespace detail {

inline void push_sym3(TriQuadRule& r, double a, double b, double w) {
  // permutations of (a, b, b)
  r.bary.push_back({a, b, b});
  r.bary.push_back({b, a, b});
  r.bary.push_back({b, b, a});
  r.weight.insert(r.weight.end(), 3, w);
}

inline void push_sym6(TriQuadRule& r, double a, double b, double c, double w) {
  r.bary.push_back({a, b, c});
  r.bary.push_back({a, c, b});
  r.bary.push_back({b, a, c});
  r.bary.push_back({b, c, a});
  r.bary.push_back({c, a, b});
  r.bary.push_back({c, b, a});
  r.weight.insert(r.weight.end(), 6, w);
}

inline TriQuadRule make_rule(int order) {
  TriQuadRule r;
  switch (order) {
    case 1:
      r.bary.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
      r.weight.push_back(1.0);
      r.degree = 1;
      break;
    case 3:
      push_sym3(r, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0);
      r.degree = 2;
      break;
    case 6:
      push_sym3(r, 0.108103018168070, 0.445948490915965, 0.223381589678011);
      push_sym3(r, 0.816847572980459, 0.091576213509771, 0.109951743655322);
      r.degree = 4;
      break;
    case 7:
      r.bary.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
      r.weight.push_back(0.225);
      push_sym3(r, 0.059715871789770, 0.470142064105115, 0.132394152788506);
      push_sym3(r, 0.797426985353087, 0.101286507323456, 0.125939180544827);
      r.degree = 5;
      break;
    case 12:
      push_sym3(r, 0.873821971016996, 0.063089014491502, 0.050844906370207);
      push_sym3(r, 0.501426509658179, 0.249286745170910, 0.116786275726379);
      push_sym6(r, 0.636502499121399, 0.310352451033785, 0.053145049844816,
                0.082851075618374);
      r.degree = 6;
      break;
    default:
      throw ConfigError("unsupported triangle quadrature order " +
                        std::to_string(order) + " (use 1, 3, 6, 7 or 12)");
  }
  return r;
}

}  // namespace detail

// Gauss-Legendre nodes/weights on [-1, 1] (Newton iteration on P_n).
struct GaussLegendre {
  std::vector<double> x, w;
};

inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre rule;
  rule.x.resize(n);
  rule.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    double p0 = 0.0, p1 = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      p0 = 1.0;
      p1 = t;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2 * j - 1) * t * p1 - (j - 1) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    const double dp = n * (t * p1 - p0) / (t * t - 1.0);
    rule.x[i] = t;
    rule.w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  return rule;
}

inline const TriQuadRule& tri_rule(int order) {
  static const TriQuadRule r1 = detail::make_rule(1);
  static const TriQuadRule r3 = detail::make_rule(3);
  static const TriQuadRule r6 = detail::make_rule(6);
  static const TriQuadRule r7 = detail::make_rule(7);
  static const TriQuadRule r12 = detail::make_rule(12);
  switch (order) {
    case 1: return r1;
    case 3: return r3;
    case 6: return r6;
    case 7: return r7;
    case 12: return r12;
    default:
      throw ConfigError("unsupported triangle quadrature order " +
                        std::to_string(order) + " (use 1, 3, 6, 7 or 12)");
  }
}

}  // namespace charmode::em
