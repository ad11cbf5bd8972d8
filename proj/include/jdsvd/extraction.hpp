#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "jdsvd/dense_eig.hpp"
#include "jdsvd/linalg.hpp"
#include "jdsvd/sparse_matrix.hpp"

namespace jdsvd {

// All candidate pencil pairs split degenerately; the caller should restart
// from a perturbed basis.
struct DegeneratePencil : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Search subspaces plus every projected quantity the extraction needs.
// Invariants: U, V orthonormal; AV = A V and AtU = A^T U; H = U^T A V;
// G1 = (A^T U)^T (A^T U); G2 = (A V)^T (A V). G1 - H H^T and G2 - H^T H
// stay positive semidefinite because G1, G2 are Gram matrices of the
// cached products.
struct SearchState {
  DenseMatrix U, V;
  DenseMatrix AV, AtU;
  DenseMatrix H, G1, G2;

  std::size_t dim() const { return U.cols(); }
};

namespace detail {

inline DenseMatrix grow_square(const DenseMatrix& a) {
  DenseMatrix b(a.rows() + 1, a.cols() + 1);
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) b(i, j) = a(i, j);
  return b;
}

}  // namespace detail

// Appends one direction per side and refreshes the cached projections with
// exactly two fresh sparse products (A v_plus and A^T u_plus); everything
// else is dense inner products against the caches.
inline void expand_state(SearchState& st, const SparseMatrix& a,
                         std::span<const double> u_plus, std::span<const double> v_plus) {
  const std::size_t m = st.dim();
  Vector av = a.apply(v_plus);
  Vector atu = a.apply_transpose(u_plus);

  DenseMatrix h = detail::grow_square(st.H);
  DenseMatrix g1 = detail::grow_square(st.G1);
  DenseMatrix g2 = detail::grow_square(st.G2);
  for (std::size_t i = 0; i < m; ++i) {
    h(i, m) = dot(st.U.col(i), av);
    h(m, i) = dot(u_plus, st.AV.col(i));
    g1(i, m) = g1(m, i) = dot(st.AtU.col(i), atu);
    g2(i, m) = g2(m, i) = dot(st.AV.col(i), av);
  }
  h(m, m) = dot(u_plus, av);
  g1(m, m) = dot(atu, atu);
  g2(m, m) = dot(av, av);

  st.U.append_col(u_plus);
  st.V.append_col(v_plus);
  st.AV.append_col(av);
  st.AtU.append_col(atu);
  st.H = std::move(h);
  st.G1 = std::move(g1);
  st.G2 = std::move(g2);
}

// F = [[-shift I, H], [H^T, -shift I]]
inline DenseMatrix assemble_f(const SearchState& st, double shift) {
  const std::size_t m = st.dim();
  DenseMatrix f(2 * m, 2 * m);
  for (std::size_t i = 0; i < m; ++i) {
    f(i, i) = -shift;
    f(m + i, m + i) = -shift;
  }
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      f(i, m + j) = st.H(i, j);
      f(m + j, i) = st.H(i, j);
    }
  return f;
}

// G = [[G1 + shift^2 I, -2 shift H], [-2 shift H^T, G2 + shift^2 I]]
inline DenseMatrix assemble_g(const SearchState& st, double shift) {
  const std::size_t m = st.dim();
  DenseMatrix g(2 * m, 2 * m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      g(i, j) = st.G1(i, j);
      g(m + i, m + j) = st.G2(i, j);
      g(i, m + j) = -2.0 * shift * st.H(i, j);
      g(m + j, i) = -2.0 * shift * st.H(i, j);
    }
  for (std::size_t i = 0; i < 2 * m; ++i) g(i, i) += shift * shift;
  return g;
}

inline std::pair<DenseMatrix, DenseMatrix> assemble_FG(const SearchState& st, double tau) {
  return {assemble_f(st, tau), assemble_g(st, tau)};
}

struct ExtractionResult {
  double theta = 0.0;     // approximate singular value driving the iteration
  double rho = 0.0;       // harmonic Rayleigh quotient
  double vartheta = 0.0;  // nu + tau of the selected pencil pair, reported only
  Vector c, d;            // unit coefficient vectors
  Vector u, v;            // U c and V d
  std::vector<double> nu; // finite pencil values nu_i = 1/mu_i, |mu| descending
  std::size_t selected = 0;
};

namespace detail {

// Splits a stacked pencil vector into unit coefficient halves; false when a
// half carries no mass (degenerate split).
inline bool split_coefficients(const Vector& f, std::size_t m, Vector& c, Vector& d) {
  c.assign(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(m));
  d.assign(f.begin() + static_cast<std::ptrdiff_t>(m), f.end());
  double nc = norm2(c), nd = norm2(d);
  if (nc < 1e-12 || nd < 1e-12) return false;
  scale(c, 1.0 / nc);
  scale(d, 1.0 / nd);
  return true;
}

// c^T H d; flips d when negative so the Rayleigh quotient is nonnegative.
inline double sign_fixed_cross(const SearchState& st, const Vector& c, Vector& d) {
  double cross = dot(c, mul(st.H, d));
  if (cross < 0.0) {
    for (double& di : d) di = -di;
    cross = -cross;
  }
  return cross;
}

}  // namespace detail

// Harmonic extraction at target tau: the pencil F f = mu G f is solved for
// the pair with the largest |mu| (equivalently the smallest |nu|, putting
// nu + tau closest to the target). Degenerate splits fall through to the
// next pencil pair.
inline ExtractionResult harmonic_extract(const SearchState& st, double tau) {
  const std::size_t m = st.dim();
  auto [f, g] = assemble_FG(st, tau);
  std::vector<GenEigPair> pairs = sym_definite_gen_eig(f, g);
  if (pairs.empty()) throw DegeneratePencil("harmonic_extract: empty pencil");

  ExtractionResult out;
  out.nu.resize(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out.nu[i] = 1.0 / pairs[i].mu;

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Vector c, d;
    if (!detail::split_coefficients(pairs[i].f, m, c, d)) continue;
    out.selected = i;
    out.rho = detail::sign_fixed_cross(st, c, d);
    out.theta = out.rho;
    out.vartheta = out.nu[i] + tau;
    out.u = mul(st.U, c);
    out.v = mul(st.V, d);
    out.c = std::move(c);
    out.d = std::move(d);
    return out;
  }
  throw DegeneratePencil("harmonic_extract: all pencil pairs split degenerately");
}

// Refined extraction at the harmonic Rayleigh quotient rho: minimizes the
// stacked residual over the subspaces via the smallest eigenpair of
// G' = [[G1 + rho^2 I, -2 rho H], [-2 rho H^T, G2 + rho^2 I]].
inline ExtractionResult refined_harmonic_extract(const SearchState& st, double tau,
                                                 const ExtractionResult& harmonic) {
  const std::size_t m = st.dim();
  DenseMatrix gp = assemble_g(st, harmonic.rho);
  SymEig eig = sym_eig(gp);

  for (std::size_t i = 0; i < 2 * m; ++i) {
    Vector c, d;
    Vector f(eig.vectors.col(i).begin(), eig.vectors.col(i).end());
    if (!detail::split_coefficients(f, m, c, d)) continue;
    ExtractionResult out;
    out.rho = harmonic.rho;
    out.vartheta = harmonic.vartheta;
    out.nu = harmonic.nu;
    out.selected = harmonic.selected;
    out.theta = detail::sign_fixed_cross(st, c, d);
    out.u = mul(st.U, c);
    out.v = mul(st.V, d);
    out.c = std::move(c);
    out.d = std::move(d);
    return out;
  }
  throw DegeneratePencil("refined_harmonic_extract: all eigenvectors split degenerately");
}

// Stacked two-sided residual [A v - theta u; A^T u - theta v] with fresh
// sparse products.
inline std::pair<Vector, double> residual(const SparseMatrix& a, double theta,
                                          std::span<const double> u,
                                          std::span<const double> v) {
  Vector top = a.apply(v);
  axpy(-theta, u, top);
  Vector bottom = a.apply_transpose(u);
  axpy(-theta, v, bottom);
  Vector r = concat(top, bottom);
  double n = norm2(r);
  return {std::move(r), n};
}

}  // namespace jdsvd
