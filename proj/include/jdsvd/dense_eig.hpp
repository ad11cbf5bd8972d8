#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "jdsvd/linalg.hpp"

namespace jdsvd {

struct SymEig {
  Vector values;       // ascending
  DenseMatrix vectors; // columns, orthonormal
};

namespace detail {

// One Jacobi rotation choice for the 2x2 block [[app, apq], [apq, aqq]].
// Returns (c, s, t) with tan = t zeroing the off-diagonal entry.
inline void jacobi_rotation(double app, double aqq, double apq, double& c, double& s,
                            double& t) {
  double tau = (aqq - app) / (2.0 * apq);
  t = tau >= 0.0 ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                 : 1.0 / (tau - std::sqrt(1.0 + tau * tau));
  c = 1.0 / std::sqrt(1.0 + t * t);
  s = t * c;
}

}  // namespace detail

// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// The input is symmetrized on entry. Eigenvalues ascend; each residual
// ||S x - lambda x|| stays within 1e-12 * ||S||.
inline SymEig sym_eig(DenseMatrix s) {
  const std::size_t n = s.rows();
  if (n != s.cols()) throw std::invalid_argument("sym_eig: square matrix required");
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < j; ++i) {
      double v = 0.5 * (s(i, j) + s(j, i));
      s(i, j) = s(j, i) = v;
    }

  DenseMatrix vec = DenseMatrix::identity(n);
  const double fro = frob_norm(s);
  if (fro > 0.0) {
    auto off_norm = [&] {
      double off2 = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < j; ++i) off2 += s(i, j) * s(i, j);
      return std::sqrt(2.0 * off2);
    };
    bool converged = false;
    for (int sweep = 0; sweep < 30 && !converged; ++sweep) {
      if (off_norm() <= 1e-14 * fro) {
        converged = true;
        break;
      }
      const double skip = 1e-17 * fro;
      for (std::size_t p = 0; p + 1 < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
          double apq = s(p, q);
          if (std::abs(apq) <= skip) continue;
          double c, sn, t;
          detail::jacobi_rotation(s(p, p), s(q, q), apq, c, sn, t);
          double app = s(p, p), aqq = s(q, q);
          s(p, p) = app - t * apq;
          s(q, q) = aqq + t * apq;
          s(p, q) = s(q, p) = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            if (k == p || k == q) continue;
            double skp = s(k, p), skq = s(k, q);
            s(k, p) = s(p, k) = c * skp - sn * skq;
            s(k, q) = s(q, k) = sn * skp + c * skq;
          }
          auto vp = vec.col(p);
          auto vq = vec.col(q);
          for (std::size_t k = 0; k < n; ++k) {
            double vkp = vp[k], vkq = vq[k];
            vp[k] = c * vkp - sn * vkq;
            vq[k] = sn * vkp + c * vkq;
          }
        }
      }
    }
    if (!converged && off_norm() > 1e-14 * fro)
      throw NumericFailure("sym_eig: no convergence in 30 sweeps");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return s(a, a) < s(b, b); });
  SymEig out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = s(order[j], order[j]);
    out.vectors.set_col(j, vec.col(order[j]));
  }
  return out;
}

// Lower Cholesky factor of an SPD matrix. Returns false when a pivot falls
// to or below rel_pivot_tol times the largest initial diagonal entry, which
// marks the input as numerically semidefinite.
inline bool cholesky(const DenseMatrix& g, DenseMatrix& l, double rel_pivot_tol = 1e-13) {
  const std::size_t n = g.rows();
  if (n != g.cols()) throw std::invalid_argument("cholesky: square matrix required");
  double dmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) dmax = std::max(dmax, std::abs(g(i, i)));
  l = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_pivot_tol * dmax)) return false;
    double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = 0.5 * (g(i, j) + g(j, i));
      for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / ljj;
    }
  }
  return true;
}

inline void solve_lower(const DenseMatrix& l, std::span<double> x) {
  const std::size_t n = l.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double v = x[i];
    for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * x[k];
    x[i] = v / l(i, i);
  }
}

inline void solve_lower_t(const DenseMatrix& l, std::span<double> x) {
  const std::size_t n = l.rows();
  for (std::size_t i = n; i-- > 0;) {
    double v = x[i];
    for (std::size_t k = i + 1; k < n; ++k) v -= l(k, i) * x[k];
    x[i] = v / l(i, i);
  }
}

struct GenEigPair {
  double mu;  // pencil eigenvalue of (F, G)
  Vector f;   // unit-length eigenvector
};

// All finite eigenpairs of the symmetric pencil F f = mu G f with G positive
// semidefinite, sorted by |mu| descending. Ties keep positive mu first.
// The SPD path reduces by Cholesky G = L L^T; when Cholesky detects a
// semidefinite G, the pencil is restricted to the G-eigenspace above
// 1e-14 * lambda_max before reduction.
inline std::vector<GenEigPair> sym_definite_gen_eig(const DenseMatrix& f,
                                                    const DenseMatrix& g) {
  const std::size_t n = f.rows();
  if (f.cols() != n || g.rows() != n || g.cols() != n)
    throw std::invalid_argument("sym_definite_gen_eig: shape mismatch");

  std::vector<GenEigPair> pairs;
  DenseMatrix l;
  if (cholesky(g, l)) {
    DenseMatrix y(n, n);
    for (std::size_t j = 0; j < n; ++j) {
      Vector col(f.col(j).begin(), f.col(j).end());
      solve_lower(l, col);
      y.set_col(j, col);
    }
    DenseMatrix e(n, n);
    DenseMatrix yt = transpose(y);
    for (std::size_t j = 0; j < n; ++j) {
      Vector col(yt.col(j).begin(), yt.col(j).end());
      solve_lower(l, col);
      e.set_col(j, col);
    }
    SymEig eig = sym_eig(transpose(e));
    pairs.reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      Vector fv(eig.vectors.col(j).begin(), eig.vectors.col(j).end());
      solve_lower_t(l, fv);
      double nf = norm2(fv);
      if (nf == 0.0) continue;
      scale(fv, 1.0 / nf);
      pairs.push_back({eig.values[j], std::move(fv)});
    }
  } else {
    SymEig geig = sym_eig(g);
    double lmax = geig.values.empty() ? 0.0 : geig.values.back();
    double lmin = geig.values.empty() ? 0.0 : geig.values.front();
    if (lmax <= 0.0)
      throw NumericFailure("sym_definite_gen_eig: degenerate pencil, G vanishes");
    if (lmin < -1e-12 * lmax)
      throw std::invalid_argument("sym_definite_gen_eig: G is not positive semidefinite");
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < n; ++j)
      if (geig.values[j] > 1e-14 * lmax) kept.push_back(j);
    const std::size_t r = kept.size();
    DenseMatrix w(n, r);
    for (std::size_t j = 0; j < r; ++j) {
      Vector col(geig.vectors.col(kept[j]).begin(), geig.vectors.col(kept[j]).end());
      scale(col, 1.0 / std::sqrt(geig.values[kept[j]]));
      w.set_col(j, col);
    }
    DenseMatrix e = mul_at_b(w, mul(f, w));
    SymEig eig = sym_eig(e);
    pairs.reserve(r);
    for (std::size_t j = 0; j < r; ++j) {
      Vector fv = mul(w, eig.vectors.col(j));
      double nf = norm2(fv);
      if (nf == 0.0) continue;
      scale(fv, 1.0 / nf);
      pairs.push_back({eig.values[j], std::move(fv)});
    }
  }

  std::stable_sort(pairs.begin(), pairs.end(), [](const GenEigPair& a, const GenEigPair& b) {
    double ma = std::abs(a.mu), mb = std::abs(b.mu);
    if (ma != mb) return ma > mb;
    return a.mu > b.mu;
  });
  return pairs;
}

struct Svd {
  Vector sigma;  // descending, length min(M, N)
  DenseMatrix u; // M x min(M, N)
  DenseMatrix v; // N x min(M, N)
};

// Full thin SVD by one-sided Jacobi on columns. Intended for desk-scale
// matrices; refuses dimensions above 600.
inline Svd dense_svd(const DenseMatrix& a_in) {
  if (a_in.rows() == 0 || a_in.cols() == 0)
    throw std::invalid_argument("dense_svd: empty matrix");
  if (a_in.rows() > 600 || a_in.cols() > 600)
    throw std::invalid_argument("dense_svd: dimensions above the 600 cap");

  const bool transposed = a_in.rows() < a_in.cols();
  DenseMatrix w = transposed ? transpose(a_in) : a_in;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  DenseMatrix v = DenseMatrix::identity(n);

  Vector colnorm(n);
  bool converged = false;
  for (int sweep = 0; sweep < 60 && !converged; ++sweep) {
    for (std::size_t j = 0; j < n; ++j) colnorm[j] = norm2(w.col(j));
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double c = dot(w.col(p), w.col(q));
        if (c == 0.0) continue;
        double scale_pq = colnorm[p] * colnorm[q];
        if (scale_pq == 0.0 || std::abs(c) <= 1e-15 * scale_pq) continue;
        converged = false;
        double cs, sn, t;
        detail::jacobi_rotation(colnorm[p] * colnorm[p], colnorm[q] * colnorm[q], c, cs,
                                sn, t);
        auto wp = w.col(p);
        auto wq = w.col(q);
        for (std::size_t k = 0; k < m; ++k) {
          double a = wp[k], b = wq[k];
          wp[k] = cs * a - sn * b;
          wq[k] = sn * a + cs * b;
        }
        auto vp = v.col(p);
        auto vq = v.col(q);
        for (std::size_t k = 0; k < n; ++k) {
          double a = vp[k], b = vq[k];
          vp[k] = cs * a - sn * b;
          vq[k] = sn * a + cs * b;
        }
        colnorm[p] = norm2(wp);
        colnorm[q] = norm2(wq);
      }
    }
  }
  if (!converged) throw NumericFailure("dense_svd: no convergence in 60 sweeps");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t j = 0; j < n; ++j) colnorm[j] = norm2(w.col(j));
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return colnorm[a] > colnorm[b]; });

  Svd out;
  out.sigma.resize(n);
  DenseMatrix uu(m, n);
  DenseMatrix vv(n, n);
  const double sig_max = colnorm[order[0]];
  const double rank_tol = static_cast<double>(std::max(m, n)) * 1e-16 * sig_max;
  std::mt19937_64 rng(0x6a64737664737664ULL);
  DenseMatrix filled(m, 0);
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t src = order[j];
    out.sigma[j] = colnorm[src];
    vv.set_col(j, v.col(src));
    if (colnorm[src] > rank_tol) {
      Vector uc(w.col(src).begin(), w.col(src).end());
      scale(uc, 1.0 / colnorm[src]);
      uu.set_col(j, uc);
      filled.append_col(uu.col(j));
    } else {
      for (int attempt = 0; attempt < 64; ++attempt) {
        OrthoResult o = orthonormalize_against(random_unit(m, rng), filled);
        if (!o.rejected) {
          uu.set_col(j, o.vector);
          filled.append_col(o.vector);
          break;
        }
        if (attempt == 63)
          throw NumericFailure("dense_svd: cannot complete null-space basis");
      }
    }
  }
  out.u = std::move(uu);
  out.v = std::move(vv);
  if (transposed) std::swap(out.u, out.v);
  return out;
}

}  // namespace jdsvd
