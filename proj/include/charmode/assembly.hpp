// Galerkin EFIE assembly over RWG bases for PEC surfaces in free space:
//
//   Z = j*eta * ( k * int int f_m . f_n G dS dS'
//               - 1/k * int int (div f_m)(div f_n) G dS dS' )
//   G = exp(-j k R) / (4 pi R)
//
// R0 = Re Z and X0 = Im Z. Triangle pairs that touch or lie closer than
// `near_factor` times their joint radius use singularity extraction (the
// static 1/R term integrated in closed form, the smooth remainder by
// quadrature); separated pairs use a fixed-order product Gauss rule.
//
// The pair loop runs over p <= q and mirrors each contribution, so the
// assembled matrices are symmetric by construction. Work is chunked over
// ranges of the outer triangle; worker threads fill disjoint slots of a
// per-chunk moment buffer and a single scatter pass commits chunks in a
// fixed order, which makes results independent of the thread count.
#pragma once

#include "charmode/core.hpp"
#include "charmode/mesh.hpp"
#include "charmode/potentials.hpp"
#include "charmode/quadrature.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace charmode::em {

struct AssemblyOptions {
  int far_order = 3;        // Gauss points per triangle on separated pairs
  int near_order = 7;       // Gauss points on extracted (near/self) pairs
  double near_factor = 1.5; // extraction radius in units of the pair size
};

struct OperatorSet {
  Mat R0;   // radiation part, symmetric PSD
  Mat X0;   // reactance part, symmetric
  double k = 0.0;  // wavenumber (1/m)

  int size() const { return static_cast<int>(R0.rows()); }
};

namespace detail {

struct TriData {
  Vec3 v[3];
  double area = 0.0;
  Vec3 centroid;
  double radius = 0.0;  // max vertex distance from centroid
  std::vector<Vec3> far_pts, near_pts;
  std::vector<double> far_w, near_w;  // physical weights (include area)
  // outer rule for extracted pairs: near rule on 4 sub-triangles, which
  // resolves the edge kinks of the analytic inner potential
  std::vector<Vec3> sing_pts;
  std::vector<double> sing_w;
};

inline std::vector<TriData> precompute_triangles(const mesh::Mesh& m,
                                                 const AssemblyOptions& opt) {
  const TriQuadRule& far = tri_rule(opt.far_order);
  const TriQuadRule& near = tri_rule(opt.near_order);
  std::vector<TriData> out(m.triangle_count());
  for (int t = 0; t < m.triangle_count(); ++t) {
    TriData& d = out[t];
    for (int i = 0; i < 3; ++i) d.v[i] = m.vertex(t, i);
    d.area = m.areas[t];
    d.centroid = m.centroids[t];
    for (int i = 0; i < 3; ++i)
      d.radius = std::max(d.radius, (d.v[i] - d.centroid).norm());
    auto fill = [&](const TriQuadRule& rule, std::vector<Vec3>& pts,
                    std::vector<double>& w) {
      pts.resize(rule.bary.size());
      w.resize(rule.bary.size());
      for (std::size_t i = 0; i < rule.bary.size(); ++i) {
        const auto& b = rule.bary[i];
        pts[i] = b[0] * d.v[0] + b[1] * d.v[1] + b[2] * d.v[2];
        w[i] = rule.weight[i] * d.area;
      }
    };
    fill(far, d.far_pts, d.far_w);
    fill(near, d.near_pts, d.near_w);

    const Vec3 m01 = 0.5 * (d.v[0] + d.v[1]);
    const Vec3 m12 = 0.5 * (d.v[1] + d.v[2]);
    const Vec3 m20 = 0.5 * (d.v[2] + d.v[0]);
    const Vec3 subs[4][3] = {{d.v[0], m01, m20},
                             {m01, d.v[1], m12},
                             {m20, m12, d.v[2]},
                             {m01, m12, m20}};
    for (const auto& sub : subs)
      for (std::size_t i = 0; i < near.bary.size(); ++i) {
        const auto& b = near.bary[i];
        d.sing_pts.push_back(b[0] * sub[0] + b[1] * sub[1] + b[2] * sub[2]);
        d.sing_w.push_back(near.weight[i] * d.area / 4.0);
      }
  }
  return out;
}

// Scalar and first-order moments of a kernel over a triangle pair:
//   s00 = II K, s10 = II x K, s01 = II y K, s11 = II (x.y) K
// with x on the test triangle and y on the source triangle. All nine RWG
// basis interactions of the pair assemble from these.
struct PairMoments {
  cplx s00{0.0, 0.0};
  Eigen::Vector3cd s10 = Eigen::Vector3cd::Zero();
  Eigen::Vector3cd s01 = Eigen::Vector3cd::Zero();
  cplx s11{0.0, 0.0};
};

// (exp(-jkR) - 1) / (4 pi R); finite (-jk/4pi) at R = 0.
inline cplx smooth_green(double k, double R) {
  const double kR = k * R;
  if (kR < 1e-6)
    return cplx(-0.5 * k * kR, -k * (1.0 - kR * kR / 6.0)) / (4.0 * pi);
  return (cplx(std::cos(kR) - 1.0, -std::sin(kR))) / (4.0 * pi * R);
}

// Full product-rule moments. Safe on coincident points: the imaginary
// (sinc) part takes its finite limit there and the then-infinite real part
// is only consumed for separated pairs, where R stays bounded away from 0.
inline PairMoments far_pair_moments(const TriData& P, const TriData& Q, double k) {
  PairMoments mom;
  for (std::size_t i = 0; i < P.far_pts.size(); ++i) {
    const Vec3& x = P.far_pts[i];
    cplx i0{0.0, 0.0};
    Eigen::Vector3cd i1 = Eigen::Vector3cd::Zero();
    for (std::size_t j = 0; j < Q.far_pts.size(); ++j) {
      const Vec3& y = Q.far_pts[j];
      const double R = (x - y).norm();
      const double kR = k * R;
      cplx g;
      if (kR < 1e-6)
        g = cplx(R > 0.0 ? 1.0 / (4.0 * pi * R) : 0.0,
                 -k * (1.0 - kR * kR / 6.0) / (4.0 * pi));
      else
        g = cplx(std::cos(kR), -std::sin(kR)) / (4.0 * pi * R);
      g *= Q.far_w[j];
      i0 += g;
      i1 += g * y;
    }
    const double w = P.far_w[i];
    mom.s00 += w * i0;
    mom.s10 += (w * i0) * x;
    mom.s01 += w * i1;
    mom.s11 += w * x.dot(i1.eval());
  }
  return mom;
}

inline PairMoments near_pair_moments(const TriData& P, const TriData& Q,
                                     const TriPotentialGeom& qgeom, double k) {
  PairMoments mom;
  const double inv4pi = 1.0 / (4.0 * pi);
  for (std::size_t i = 0; i < P.sing_pts.size(); ++i) {
    const Vec3& x = P.sing_pts[i];
    cplx i0{0.0, 0.0};
    Eigen::Vector3cd i1 = Eigen::Vector3cd::Zero();
    for (std::size_t j = 0; j < Q.near_pts.size(); ++j) {
      const Vec3& y = Q.near_pts[j];
      const cplx g = Q.near_w[j] * smooth_green(k, (x - y).norm());
      i0 += g;
      i1 += g * y;
    }
    const TriPotentials pot = static_potentials(qgeom, x);
    const double d = qgeom.normal.dot(x - qgeom.v[0]);
    const Vec3 proj = x - d * qgeom.normal;
    i0 += inv4pi * pot.one_over_r;
    i1 += (inv4pi * (pot.grad_term + proj * pot.one_over_r)).cast<cplx>();

    const double w = P.sing_w[i];
    mom.s00 += w * i0;
    mom.s10 += (w * i0) * x;
    mom.s01 += w * i1;
    mom.s11 += w * x.dot(i1.eval());
  }
  return mom;
}

// Moments of dG/dk = -j exp(-jkR)/(4 pi). The kernel is entire; near pairs
// use the same grid as the extracted Green moments so that these are the
// exact k-derivative of the discretized operator.
inline PairMoments dk_pair_moments(const TriData& P, const TriData& Q, double k,
                                   bool near) {
  PairMoments mom;
  const auto& xp = near ? P.sing_pts : P.far_pts;
  const auto& xw = near ? P.sing_w : P.far_w;
  const auto& yp = near ? Q.near_pts : Q.far_pts;
  const auto& yw = near ? Q.near_w : Q.far_w;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const Vec3& x = xp[i];
    cplx i0{0.0, 0.0};
    Eigen::Vector3cd i1 = Eigen::Vector3cd::Zero();
    for (std::size_t j = 0; j < yp.size(); ++j) {
      const double kR = k * (x - yp[j]).norm();
      const cplx g = yw[j] * cplx(-std::sin(kR), -std::cos(kR)) / (4.0 * pi);
      i0 += g;
      i1 += g * yp[j];
    }
    mom.s00 += xw[i] * i0;
    mom.s10 += (xw[i] * i0) * x;
    mom.s01 += xw[i] * i1;
    mom.s11 += xw[i] * x.dot(i1.eval());
  }
  return mom;
}

// Moment sets for Z and for its frequency derivative; dZ/dk assembles as
// j eta (A + k A' + B/k^2 - B'/k) with A = II f.f' G, B = II divf divf' G
// and primes denoting d/dk.
struct PairMomentsPair {
  PairMoments g;   // Green's function moments
  PairMoments gk;  // dG/dk moments
};

// dot of a complex 3-vector with a real one without conjugation
inline cplx cdot(const Eigen::Vector3cd& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

struct EntryWeights {
  double c_ff;  // sm*sn*lm*ln / (4 Ap Aq)
  double c_dd;  // sm*sn*lm*ln / (Ap Aq)
};

inline cplx pair_entry(const PairMoments& mom, double k, const EntryWeights& w,
                       const Vec3& vm, const Vec3& vn) {
  const cplx quad =
      mom.s11 - cdot(mom.s10, vn) - cdot(mom.s01, vm) + vm.dot(vn) * mom.s00;
  return cplx(0.0, free_space_impedance) * (k * w.c_ff * quad - (w.c_dd / k) * mom.s00);
}

inline cplx pair_entry_dk(const PairMomentsPair& mm, double k,
                          const EntryWeights& w, const Vec3& vm, const Vec3& vn) {
  const cplx quad_g =
      mm.g.s11 - cdot(mm.g.s10, vn) - cdot(mm.g.s01, vm) + vm.dot(vn) * mm.g.s00;
  const cplx quad_k =
      mm.gk.s11 - cdot(mm.gk.s10, vn) - cdot(mm.gk.s01, vm) + vm.dot(vn) * mm.gk.s00;
  return cplx(0.0, free_space_impedance) *
         (w.c_ff * (quad_g + k * quad_k) +
          w.c_dd * (mm.g.s00 / (k * k) - mm.gk.s00 / k));
}


inline void assemble_kernel(const mesh::Mesh& m, const mesh::BasisSet& basis,
                            double k, const AssemblyOptions& opt, CMat* Z,
                            CMat* dZdk) {
  if (!(k > 0.0)) throw SolverError("wavenumber must be positive");
  const int T = m.triangle_count();
  const int N = basis.size();
  const auto tri = precompute_triangles(m, opt);

  std::vector<TriPotentialGeom> geom;
  geom.reserve(T);
  for (int t = 0; t < T; ++t)
    geom.emplace_back(tri[t].v[0], tri[t].v[1], tri[t].v[2]);

  if (Z) *Z = CMat::Zero(N, N);
  if (dZdk) *dZdk = CMat::Zero(N, N);

  // chunked pair sweep over p <= q
  const int chunk_rows = std::max(1, 262144 / T);
  std::vector<PairMomentsPair> buffer;
  std::vector<std::uint8_t> is_near_buf;

  for (int p0 = 0; p0 < T; p0 += chunk_rows) {
    const int p1 = std::min(T, p0 + chunk_rows);
    // offsets of each row's pair slots in the chunk buffer
    std::vector<std::int64_t> offset(p1 - p0 + 1, 0);
    for (int p = p0; p < p1; ++p) offset[p - p0 + 1] = offset[p - p0] + (T - p);
    buffer.resize(offset.back());
    is_near_buf.resize(offset.back());

    parallel_for(p1 - p0, [&](std::int64_t rb, std::int64_t re) {
      for (std::int64_t pr = rb; pr < re; ++pr) {
        const int p = p0 + static_cast<int>(pr);
        for (int q = p; q < T; ++q) {
          const std::int64_t slot = offset[pr] + (q - p);
          const double sep = (tri[p].centroid - tri[q].centroid).norm();
          const bool near =
              sep <= opt.near_factor * (tri[p].radius + tri[q].radius);
          is_near_buf[slot] = near ? 1 : 0;
          PairMomentsPair& mm = buffer[slot];
          mm.g = far_pair_moments(tri[p], tri[q], k);
          if (near) {
            // The imaginary (radiation) part of the Green's function is
            // entire; sampling it with the same product rule on every pair
            // keeps R0 a consistent discretization of a positive-definite
            // kernel and hence PSD. Extraction replaces only the real part.
            const PairMoments ext =
                near_pair_moments(tri[p], tri[q], geom[q], k);
            mm.g.s00 = cplx(ext.s00.real(), mm.g.s00.imag());
            mm.g.s11 = cplx(ext.s11.real(), mm.g.s11.imag());
            for (int c = 0; c < 3; ++c) {
              mm.g.s10[c] = cplx(ext.s10[c].real(), mm.g.s10[c].imag());
              mm.g.s01[c] = cplx(ext.s01[c].real(), mm.g.s01[c].imag());
            }
          }
          if (dZdk) mm.gk = dk_pair_moments(tri[p], tri[q], k, near);
        }
      }
    });

    // serial scatter in fixed (p, q) order
    for (int p = p0; p < p1; ++p) {
      for (int q = p; q < T; ++q) {
        const PairMomentsPair& mm = buffer[offset[p - p0] + (q - p)];
        for (int a = 0; a < 3; ++a) {
          const int mb = basis.tri_basis[p][a];
          if (mb < 0) continue;
          const double sm = basis.tri_sign[p][a] * basis.edges[mb].length;
          const Vec3 vm = m.nodes[basis.tri_free[p][a]];
          const int b_begin = (p == q) ? a : 0;
          for (int b = b_begin; b < 3; ++b) {
            const int nb = basis.tri_basis[q][b];
            if (nb < 0) continue;
            const double sn = basis.tri_sign[q][b] * basis.edges[nb].length;
            const Vec3 vn = m.nodes[basis.tri_free[q][b]];
            const double c = sm * sn / (tri[p].area * tri[q].area);
            const EntryWeights w{0.25 * c, c};
            const bool mirror = (p != q) || (a != b);
            if (Z) {
              const cplx zc = pair_entry(mm.g, k, w, vm, vn);
              (*Z)(mb, nb) += zc;
              if (mirror) (*Z)(nb, mb) += zc;
            }
            if (dZdk) {
              const cplx zk = pair_entry_dk(mm, k, w, vm, vn);
              (*dZdk)(mb, nb) += zk;
              if (mirror) (*dZdk)(nb, mb) += zk;
            }
          }
        }
      }
    }
  }
}

// Radiation part of Z evaluated as a far-field Gram matrix,
//
//   R0_mn = eta k^2 / (16 pi^2) int_{S^2} (khat x F_m).(khat x F_n)* dOmega,
//   F_m(khat) = int f_m(r) exp(j k khat.r) dS,
//
// which equals Re Z for the exact integrals and is PSD by construction for
// any nonnegative sphere rule. The spherical integrand is band-limited by
// the structure's electrical size, so the Gauss-Legendre x uniform product
// rule below converges to machine precision.
inline Mat radiation_gram(const mesh::Mesh& m, const mesh::BasisSet& basis,
                          double k, const AssemblyOptions& opt = {}) {
  const int N = basis.size();
  const int T = m.triangle_count();

  Vec3 center = Vec3::Zero();
  for (const auto& p : m.nodes) center += p;
  center /= m.node_count();
  double radius = 0.0;
  for (const auto& p : m.nodes) radius = std::max(radius, (p - center).norm());

  const int n_theta = static_cast<int>(std::ceil(k * radius)) + 14;
  const int n_phi = 2 * n_theta;
  const GaussLegendre gl = gauss_legendre(n_theta);
  const TriQuadRule& rule = tri_rule(opt.far_order);

  CMat a = CMat::Zero(2 * n_theta * n_phi, N);
  int row = 0;
  for (int it = 0; it < n_theta; ++it) {
    const double ct = gl.x[it];
    const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
    const double w_theta = gl.w[it] * (2.0 * pi / n_phi);
    for (int ip = 0; ip < n_phi; ++ip, row += 2) {
      const double phi = (2.0 * pi * ip) / n_phi;
      const Vec3 dir(st * std::cos(phi), st * std::sin(phi), ct);
      const Vec3 theta_hat(ct * std::cos(phi), ct * std::sin(phi), -st);
      const Vec3 phi_hat(-std::sin(phi), std::cos(phi), 0.0);
      const double sw = std::sqrt(w_theta);
      for (int t = 0; t < T; ++t) {
        for (std::size_t qp = 0; qp < rule.bary.size(); ++qp) {
          const auto& bc = rule.bary[qp];
          const Vec3 x = bc[0] * m.vertex(t, 0) + bc[1] * m.vertex(t, 1) +
                         bc[2] * m.vertex(t, 2);
          const double w = rule.weight[qp] * m.areas[t];
          const double phase = k * dir.dot(x - center);
          const cplx e = cplx(std::cos(phase), std::sin(phase)) * (w * sw);
          for (int s = 0; s < 3; ++s) {
            const int b = basis.tri_basis[t][s];
            if (b < 0) continue;
            const Vec3 f = basis.tri_sign[t][s] *
                           (basis.edges[b].length / (2.0 * m.areas[t])) *
                           (x - m.nodes[basis.tri_free[t][s]]);
            a(row, b) += e * theta_hat.dot(f);
            a(row + 1, b) += e * phi_hat.dot(f);
          }
        }
      }
    }
  }
  const double c = free_space_impedance * k * k / (16.0 * pi * pi);
  return c * (a.adjoint() * a).real();
}

}  // namespace detail

inline Mat radiation_gram(const mesh::Mesh& m, const mesh::BasisSet& basis,
                          double k, const AssemblyOptions& opt = {}) {
  return detail::radiation_gram(m, basis, k, opt);
}

inline OperatorSet assemble_impedance(const mesh::Mesh& m,
                                      const mesh::BasisSet& basis, double k,
                                      const AssemblyOptions& opt = {}) {
  CMat Z;
  detail::assemble_kernel(m, basis, k, opt, &Z, nullptr);
  OperatorSet ops;
  ops.R0 = detail::radiation_gram(m, basis, k, opt);
  ops.X0 = Z.imag();
  ops.k = k;
  return ops;
}

// Stored-energy matrix X0' = omega dX0/domega = k dX0/dk.
//
// Default backend: central finite difference over the wavenumber with a
// relative step, X0'(k) ~= [X0(k(1+h)) - X0(k(1-h))] / (2h).
inline Mat assemble_stored_energy(const mesh::Mesh& m, const mesh::BasisSet& basis,
                                  double k, const AssemblyOptions& opt = {},
                                  double rel_step = 1e-3) {
  if (!(rel_step > 1e-12))
    throw SolverError("stored-energy FD step underflow (rel_step <= 1e-12)");
  const OperatorSet hi = assemble_impedance(m, basis, k * (1.0 + rel_step), opt);
  const OperatorSet lo = assemble_impedance(m, basis, k * (1.0 - rel_step), opt);
  return (hi.X0 - lo.X0) / (2.0 * rel_step);
}

// Analytic backend: assembles k dZ/dk from the differentiated kernel.
inline Mat assemble_stored_energy_analytic(const mesh::Mesh& m,
                                           const mesh::BasisSet& basis, double k,
                                           const AssemblyOptions& opt = {}) {
  CMat dZdk;
  detail::assemble_kernel(m, basis, k, opt,
                                                               nullptr, &dZdk);
  return k * dZdk.imag();
}

// ---------------------------------------------------------------------------
// Per-triangle RWG Gram blocks: B_t(a,b) = int_t f_a . f_b dS for the (<= 3)
// bases touching triangle t. The integrand is quadratic, so the degree-2
// rule integrates it exactly.

struct TriangleBlock {
  std::array<int, 3> basis{-1, -1, -1};
  Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
  int count = 0;  // number of bases touching the triangle
};

using MaterialElements = std::vector<TriangleBlock>;

inline MaterialElements assemble_material_elements(const mesh::Mesh& m,
                                                   const mesh::BasisSet& basis) {
  const TriQuadRule& rule = tri_rule(3);
  MaterialElements out(m.triangle_count());
  for (int t = 0; t < m.triangle_count(); ++t) {
    TriangleBlock& tb = out[t];
    int nb = 0;
    for (int a = 0; a < 3; ++a)
      if (basis.tri_basis[t][a] >= 0) nb = a + 1;
    tb.count = nb;
    for (int a = 0; a < nb; ++a) tb.basis[a] = basis.tri_basis[t][a];
    const Vec3 v0 = m.vertex(t, 0), v1 = m.vertex(t, 1), v2 = m.vertex(t, 2);
    for (std::size_t qp = 0; qp < rule.bary.size(); ++qp) {
      const auto& bc = rule.bary[qp];
      const Vec3 r = bc[0] * v0 + bc[1] * v1 + bc[2] * v2;
      const double w = rule.weight[qp] * m.areas[t];
      for (int a = 0; a < nb; ++a) {
        if (tb.basis[a] < 0) continue;
        const double la = basis.edges[tb.basis[a]].length;
        const Vec3 fa = basis.tri_sign[t][a] * (la / (2.0 * m.areas[t])) *
                        (r - m.nodes[basis.tri_free[t][a]]);
        for (int b = a; b < nb; ++b) {
          if (tb.basis[b] < 0) continue;
          const double lb = basis.edges[tb.basis[b]].length;
          const Vec3 fb = basis.tri_sign[t][b] * (lb / (2.0 * m.areas[t])) *
                          (r - m.nodes[basis.tri_free[t][b]]);
          tb.block(a, b) += w * fa.dot(fb);
        }
      }
    }
    for (int a = 0; a < nb; ++a)
      for (int b = a + 1; b < nb; ++b) tb.block(b, a) = tb.block(a, b);
  }
  return out;
}

// Full RWG Gram matrix (sum of embedded triangle blocks).
inline Mat material_gram(const MaterialElements& elems, int n) {
  Mat g = Mat::Zero(n, n);
  for (const auto& tb : elems)
    for (int a = 0; a < tb.count; ++a)
      for (int b = 0; b < tb.count; ++b)
        if (tb.basis[a] >= 0 && tb.basis[b] >= 0)
          g(tb.basis[a], tb.basis[b]) += tb.block(a, b);
  return g;
}

// ---------------------------------------------------------------------------
// Optional binary operator cache, keyed by (mesh hash, k, quadrature order).
// Layout: magic, version, N, k, order, then R0 and X0 row-major float64.

namespace detail {
inline std::optional<std::string> cache_dir() {
  if (const char* env = std::getenv("CHARMODE_CACHE_DIR"); env && *env)
    return std::string(env);
  return std::nullopt;
}

inline std::string cache_file(const std::string& dir, std::uint64_t mesh_hash,
                              double k, int order) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "/ops_%016llx_%.17g_%d.bin",
                static_cast<unsigned long long>(mesh_hash), k, order);
  return dir + buf;
}
}  // namespace detail

inline bool save_operator_cache(const std::string& path, const OperatorSet& ops,
                                int order) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return false;
  const char magic[4] = {'C', 'H', 'M', 'Z'};
  const std::uint32_t version = 1;
  const std::uint64_t n = ops.size();
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&ops.k), sizeof ops.k);
  const std::int32_t ord = order;
  out.write(reinterpret_cast<const char*>(&ord), sizeof ord);
  for (const Mat* mat : {&ops.R0, &ops.X0})
    for (Eigen::Index r = 0; r < mat->rows(); ++r)
      out.write(reinterpret_cast<const char*>(mat->row(r).eval().data()),
                sizeof(double) * mat->cols());
  return static_cast<bool>(out);
}

inline std::optional<OperatorSet> load_operator_cache(const std::string& path,
                                                      int expect_n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t n = 0;
  double k = 0.0;
  std::int32_t order = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&k), sizeof k);
  in.read(reinterpret_cast<char*>(&order), sizeof order);
  if (!in || std::string_view(magic, 4) != "CHMZ" || version != 1 ||
      n != static_cast<std::uint64_t>(expect_n))
    return std::nullopt;
  OperatorSet ops;
  ops.k = k;
  ops.R0.resize(n, n);
  ops.X0.resize(n, n);
  for (Mat* mat : {&ops.R0, &ops.X0})
    for (std::uint64_t r = 0; r < n; ++r) {
      std::vector<double> row(n);
      in.read(reinterpret_cast<char*>(row.data()), sizeof(double) * n);
      for (std::uint64_t c = 0; c < n; ++c) (*mat)(r, c) = row[c];
    }
  if (!in) return std::nullopt;
  return ops;
}

// Assembles the impedance operators, consulting the CHARMODE_CACHE_DIR cache
// when it is configured.
inline OperatorSet assemble_impedance_cached(const mesh::Mesh& m,
                                             const mesh::BasisSet& basis,
                                             double k,
                                             const AssemblyOptions& opt = {}) {
  const auto dir = detail::cache_dir();
  if (!dir) return assemble_impedance(m, basis, k, opt);
  const std::string path =
      detail::cache_file(*dir, mesh::content_hash(m), k, opt.far_order);
  if (auto cached = load_operator_cache(path, basis.size())) return *cached;
  OperatorSet ops = assemble_impedance(m, basis, k, opt);
  std::filesystem::create_directories(*dir);
  save_operator_cache(path, ops, opt.far_order);
  return ops;
}

}  // namespace charmode::em
