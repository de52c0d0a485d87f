// Characteristic-mode eigensolvers and modal quantities.
//
// Lossless: X0 I = lambda R0 I with real spectrum; lossy:
// (X0 - j R_rho) I = xi R0 I with xi = lambda - j delta. Currents are made
// unique by I^H R0 I = 1 together with a real, positive pivot entry.
//
// Backends: dense QZ (LAPACK *ggev) below `dense_threshold`, shift-invert
// Arnoldi targeting smallest |xi - sigma| above it, and a rank-revealing
// projection onto R0's significant eigenspace as the fallback when a
// factorization fails. All of them solve the full pencil except the
// projection, which restricts to the radiating subspace.
#pragma once

#include "charmode/assembly.hpp"
#include "charmode/core.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace charmode::cma {

struct CharacteristicMode {
  cplx xi{0.0, 0.0};  // lambda - j delta
  CVec current;       // normalized: I^H R0 I = 1, Im(I_pivot) = 0, Re > 0
  int pivot = -1;     // entry of maximum magnitude

  double lambda() const { return xi.real(); }
  double delta() const { return -xi.imag(); }
};

struct ModeSet {
  std::vector<CharacteristicMode> modes;
  double min_separation = std::numeric_limits<double>::infinity();
  bool degenerate = false;  // min pairwise |xi_m - xi_n| below tolerance

  int size() const { return static_cast<int>(modes.size()); }
  const CharacteristicMode& operator[](int i) const { return modes[i]; }
  CharacteristicMode& operator[](int i) { return modes[i]; }
};

enum class EigenBackend { automatic, dense, arnoldi, projected };

struct EigenOptions {
  EigenBackend backend = EigenBackend::automatic;
  int dense_threshold = 2000;  // automatic: dense QZ up to this size
  double sigma = 0.0;          // Arnoldi shift
  int max_subspace = 260;
  double ritz_tol = 1e-10;
  double rank_tol = 1e-12;       // projection threshold on R0 eigenvalues
  double degeneracy_tol = 1e-6;  // relative to max |xi|
};

// pi - arctan(lambda): pi at resonance, -> pi/2 inductive, -> 3 pi/2
// capacitive.
inline double characteristic_angle(double lambda) {
  return pi - std::atan(lambda);
}

// Excitability measure. The primary form is 1/(1 + lambda^2); the
// conventional 1/sqrt(1 + lambda^2) sits behind the flag.
inline double modal_significance(double lambda, bool conventional = false) {
  return conventional ? 1.0 / std::sqrt(1.0 + lambda * lambda)
                      : 1.0 / (1.0 + lambda * lambda);
}

// Q = I^H X0' I / (2 I^H R0 I); gauge invariant.
inline double modal_q(const CVec& current, const Mat& x0p, const Mat& r0) {
  const double num = (current.adjoint() * x0p * current)(0).real();
  const double den = (current.adjoint() * r0 * current)(0).real();
  if (!(den > 0.0) || !std::isfinite(den))
    throw SolverError("modal Q of a non-radiating current");
  return num / (2.0 * den);
}

// Scales and phase-rotates a mode so I^H R0 I = 1 and the maximum-magnitude
// entry is real and positive.
inline void normalize_mode(CharacteristicMode& mode, const Mat& r0) {
  const double power = (mode.current.adjoint() * r0 * mode.current)(0).real();
  const double scale = mode.current.squaredNorm() * r0.cwiseAbs().maxCoeff();
  if (!(power > 1e-14 * scale))
    throw SolverError("cannot normalize a non-radiating (null radiated power) current");
  mode.current /= std::sqrt(power);
  int pivot = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < mode.current.size(); ++i) {
    const double mag = std::abs(mode.current[i]);
    if (mag > best * (1.0 + 1e-14)) {
      best = mag;
      pivot = static_cast<int>(i);
    }
  }
  const cplx piv = mode.current[pivot];
  mode.current *= std::conj(piv) / std::abs(piv);
  mode.pivot = pivot;
}

namespace detail {

inline cplx quotient_xi(const CVec& current, const Mat& x0, const Mat* r_rho,
                        const Mat& r0) {
  const double den = (current.adjoint() * r0 * current)(0).real();
  const double lam = (current.adjoint() * x0 * current)(0).real() / den;
  const double del =
      r_rho ? (current.adjoint() * (*r_rho) * current)(0).real() / den : 0.0;
  return cplx(lam, -del);
}

struct RawPairs {
  std::vector<cplx> values;
  std::vector<CVec> vectors;
};

// LAPACK zggev on the full pencil (A, B).
inline RawPairs dense_qz(const CMat& a_in, const Mat& b_in) {
  const int n = static_cast<int>(a_in.rows());
  CMat a = a_in;
  CMat b = b_in.cast<cplx>();
  std::vector<cplx> alpha(n), beta(n);
  CMat vr(n, n);
  const int info = LAPACKE_zggev(LAPACK_COL_MAJOR, 'N', 'V', n, a.data(), n,
                                 b.data(), n, alpha.data(), beta.data(),
                                 nullptr, n, vr.data(), n);
  if (info != 0)
    throw SolverError("generalized eigensolver (zggev) failed, info=" +
                      std::to_string(info));
  double beta_max = 0.0;
  for (const cplx& bi : beta) beta_max = std::max(beta_max, std::abs(bi));
  RawPairs out;
  for (int i = 0; i < n; ++i) {
    if (std::abs(beta[i]) <= 1e-12 * beta_max) continue;  // non-radiating
    out.values.push_back(alpha[i] / beta[i]);
    out.vectors.push_back(vr.col(i));
  }
  return out;
}

// Rank-revealing projection onto R0's significant eigenspace; solves the
// projected complex-symmetric pencil with a dense Schur decomposition.
inline RawPairs projected_solve(const CMat& m, const Mat& r0, double rank_tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(r0);
  if (es.info() != Eigen::Success)
    throw SolverError("R0 eigendecomposition failed");
  const Vec& d = es.eigenvalues();
  const double dmax = d.maxCoeff();
  std::vector<int> keep;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d[i] > rank_tol * dmax) keep.push_back(static_cast<int>(i));
  if (keep.empty()) throw SolverError("R0 has no significant eigenvalues");
  Mat w(r0.rows(), keep.size());
  for (std::size_t c = 0; c < keep.size(); ++c)
    w.col(c) = es.eigenvectors().col(keep[c]) / std::sqrt(d[keep[c]]);
  const CMat s = w.transpose() * m * w;
  Eigen::ComplexEigenSolver<CMat> ces(s);
  if (ces.info() != Eigen::Success)
    throw SolverError("projected eigensolver failed");
  RawPairs out;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    out.values.push_back(ces.eigenvalues()[i]);
    out.vectors.push_back(w * ces.eigenvectors().col(i));
  }
  return out;
}

// Shift-invert Arnoldi on OP = (M - sigma R0)^{-1} R0 with a deterministic
// start vector; Ritz pairs are accepted on the pencil residual.
inline RawPairs arnoldi_smallest(const CMat& m, const Mat& r0, int n_modes,
                                 const EigenOptions& opt) {
  const int n = static_cast<int>(m.rows());
  CMat shifted = m;
  if (opt.sigma != 0.0) shifted -= cplx(opt.sigma, 0.0) * r0;
  Eigen::PartialPivLU<CMat> lu(shifted);
  // cheap singularity probe: relative size of the smallest pivot
  const double pivot_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  const double pivot_max = lu.matrixLU().diagonal().cwiseAbs().maxCoeff();
  if (!(pivot_min > 1e-14 * pivot_max))
    throw SolverError("shift-invert factorization is numerically singular");

  const double m_scale = m.cwiseAbs().maxCoeff();
  const double r_scale = r0.cwiseAbs().maxCoeff();

  std::mt19937_64 rng(0x5bd1e995u);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  CVec v0(n);
  for (int i = 0; i < n; ++i) v0[i] = cplx(u(rng), u(rng));
  v0.normalize();

  int m_sub = std::min(n, std::max(40, 3 * n_modes + 15));
  while (true) {
    CMat v(n, m_sub + 1);
    CMat h = CMat::Zero(m_sub + 1, m_sub);
    v.col(0) = v0;
    int built = m_sub;
    for (int j = 0; j < m_sub; ++j) {
      CVec w = lu.solve(r0 * v.col(j));
      for (int reorth = 0; reorth < 2; ++reorth)
        for (int i = 0; i <= j; ++i) {
          const cplx hij = v.col(i).dot(w);  // conjugating dot
          h(i, j) += hij;
          w -= hij * v.col(i);
        }
      const double nw = w.norm();
      h(j + 1, j) = nw;
      if (nw < 1e-13) {
        built = j + 1;
        break;
      }
      v.col(j + 1) = w / nw;
    }

    Eigen::ComplexEigenSolver<CMat> ces(h.topLeftCorner(built, built));
    if (ces.info() != Eigen::Success)
      throw SolverError("Arnoldi Hessenberg eigensolver failed");

    std::vector<int> order(built);
    for (int i = 0; i < built; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(ces.eigenvalues()[a]) > std::abs(ces.eigenvalues()[b]);
    });

    RawPairs out;
    bool converged = true;
    for (int r = 0; r < n_modes && r < built; ++r) {
      const int idx = order[r];
      const cplx mu = ces.eigenvalues()[idx];
      if (std::abs(mu) < 1e-300) {
        converged = false;
        break;
      }
      const cplx xi = opt.sigma + 1.0 / mu;
      CVec x = v.leftCols(built) * ces.eigenvectors().col(idx);
      x.normalize();
      const double res = (m * x - xi * (r0 * x)).norm() /
                         (m_scale + std::abs(xi) * r_scale);
      if (res > opt.ritz_tol) {
        converged = false;
        break;
      }
      out.values.push_back(xi);
      out.vectors.push_back(std::move(x));
    }
    if (converged && static_cast<int>(out.values.size()) >= n_modes)
      return out;
    if (built < m_sub || m_sub >= std::min(n, opt.max_subspace))
      throw SolverError(
          "Arnoldi iteration did not converge; consider the dense backend");
    m_sub = std::min({2 * m_sub, n, opt.max_subspace});
  }
}

inline ModeSet finish_modes(RawPairs raw, const Mat& x0, const Mat* r_rho,
                            const Mat& r0, int n_modes,
                            const EigenOptions& opt) {
  if (static_cast<int>(raw.values.size()) < n_modes)
    throw SolverError("requested " + std::to_string(n_modes) +
                      " modes but only " + std::to_string(raw.values.size()) +
                      " radiating modes are available");
  std::vector<int> order(raw.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return std::abs(raw.values[a]) < std::abs(raw.values[b]);
  });

  ModeSet set;
  for (int r = 0; r < n_modes; ++r) {
    CharacteristicMode mode;
    mode.current = std::move(raw.vectors[order[r]]);
    normalize_mode(mode, r0);
    // xi is pinned to the Rayleigh quotients of the returned current; a
    // converged eigenpair reproduces the raw eigenvalue to solver tolerance.
    mode.xi = quotient_xi(mode.current, x0, r_rho, r0);
    const cplx raw_xi = raw.values[order[r]];
    if (std::abs(mode.xi - raw_xi) > 1e-6 * (1.0 + std::abs(raw_xi)))
      throw SolverError("eigenpair failed the Rayleigh-quotient consistency check");
    set.modes.push_back(std::move(mode));
  }

  double max_xi = 0.0;
  for (const auto& mo : set.modes) max_xi = std::max(max_xi, std::abs(mo.xi));
  for (int a = 0; a < set.size(); ++a)
    for (int b = a + 1; b < set.size(); ++b)
      set.min_separation =
          std::min(set.min_separation, std::abs(set[a].xi - set[b].xi));
  set.degenerate =
      set.size() > 1 && set.min_separation < opt.degeneracy_tol * max_xi;
  return set;
}

inline RawPairs solve_raw(const CMat& m, const Mat& r0, int n_modes,
                          const EigenOptions& opt) {
  const int n = static_cast<int>(m.rows());
  EigenBackend backend = opt.backend;
  if (backend == EigenBackend::automatic)
    backend = n <= opt.dense_threshold ? EigenBackend::dense
                                       : EigenBackend::arnoldi;
  switch (backend) {
    case EigenBackend::dense:
      return dense_qz(m, r0);
    case EigenBackend::projected:
      return projected_solve(m, r0, opt.rank_tol);
    default:
      try {
        return arnoldi_smallest(m, r0, n_modes, opt);
      } catch (const SolverError&) {
        // rank-revealing projection is the documented fallback
        return projected_solve(m, r0, opt.rank_tol);
      }
  }
}

}  // namespace detail

inline ModeSet solve_lossless(const em::OperatorSet& ops, int n_modes,
                              const EigenOptions& opt = {}) {
  const CMat m = ops.X0.cast<cplx>();
  ModeSet set = detail::finish_modes(
      detail::solve_raw(m, ops.R0, n_modes, opt), ops.X0, nullptr, ops.R0,
      n_modes, opt);
  // lossless currents are real up to the solver's phase gauge
  for (auto& mode : set.modes) {
    if (mode.current.imag().cwiseAbs().maxCoeff() >
        1e-7 * mode.current.real().cwiseAbs().maxCoeff())
      throw SolverError("lossless mode came back with a complex current");
    mode.current = mode.current.real().cast<cplx>();
    mode.xi = cplx(mode.xi.real(), 0.0);
  }
  return set;
}

inline ModeSet solve_lossy(const em::OperatorSet& ops, const Mat& r_rho,
                           int n_modes, const EigenOptions& opt = {}) {
  const CMat m = ops.X0.cast<cplx>() - cplx(0.0, 1.0) * r_rho.cast<cplx>();
  ModeSet set = detail::finish_modes(
      detail::solve_raw(m, ops.R0, n_modes, opt), ops.X0, &r_rho, ops.R0,
      n_modes, opt);
  for (const auto& mode : set.modes)
    if (mode.delta() < -1e-10)
      throw SolverError("negative modal dissipation factor");
  return set;
}

// Permutation sigma maximizing sum_m |I_prev,m^H R0 I_new,sigma(m)| by
// greedy assignment. When the best and runner-up correlation of a pick lie
// within 1e-3 the assignment is ambiguous: the |xi| ordering is kept and
// `ambiguous` is set.
struct TrackResult {
  std::vector<int> permutation;  // new index for each previous mode
  bool ambiguous = false;
};

inline TrackResult track_modes(const ModeSet& prev, const ModeSet& next,
                               const Mat& r0) {
  const int n = prev.size();
  if (next.size() != n)
    throw SolverError("mode tracking requires equal mode counts");
  Mat corr(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      corr(a, b) =
          std::abs((prev[a].current.adjoint() * r0 * next[b].current)(0));

  TrackResult result;
  result.permutation.assign(n, -1);
  std::vector<bool> row_used(n, false), col_used(n, false);
  for (int pick = 0; pick < n; ++pick) {
    int best_r = -1, best_c = -1;
    double best = -1.0;
    for (int a = 0; a < n; ++a) {
      if (row_used[a]) continue;
      for (int b = 0; b < n; ++b) {
        if (col_used[b]) continue;
        if (corr(a, b) > best) {
          best = corr(a, b);
          best_r = a;
          best_c = b;
        }
      }
    }
    // runner-up for the same previous mode
    double runner = -1.0;
    for (int b = 0; b < n; ++b)
      if (!col_used[b] && b != best_c) runner = std::max(runner, corr(best_r, b));
    if (runner >= 0.0 && best - runner < 1e-3) {
      result.ambiguous = true;
      for (int i = 0; i < n; ++i) result.permutation[i] = i;
      return result;
    }
    result.permutation[best_r] = best_c;
    row_used[best_r] = true;
    col_used[best_c] = true;
  }
  return result;
}

inline ModeSet apply_permutation(const ModeSet& set,
                                 const std::vector<int>& perm) {
  ModeSet out = set;
  for (std::size_t i = 0; i < perm.size(); ++i) out.modes[i] = set.modes[perm[i]];
  return out;
}

}  // namespace charmode::cma
