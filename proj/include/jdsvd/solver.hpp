#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "jdsvd/correction.hpp"
#include "jdsvd/extraction.hpp"
#include "jdsvd/linalg.hpp"
#include "jdsvd/sparse_matrix.hpp"

namespace jdsvd {

enum class Variant { Harmonic, RefinedHarmonic };
enum class InnerMode { Inexact, IterExact };

struct SolverConfig {
  double tau = 0.0;
  std::size_t num_triplets = 1;
  Variant variant = Variant::RefinedHarmonic;
  double eps_tilde = 1e-3;
  double tol = 1e-10;
  std::size_t max_dim = 20;
  std::size_t restart_keep = 3;
  InnerMode inner_mode = InnerMode::Inexact;
  std::size_t max_inner = 0;  // 0 selects the default 2 (M + N)
  std::size_t max_outer = 3000;
  std::uint64_t seed = 12345;
};

struct ApproxTriplet {
  double theta = 0.0;
  Vector u, v;
  Vector r;  // residual at lock time, recomputed from scratch
  double resnorm = 0.0;
};

struct HistoryRecord {
  std::size_t outer = 0;    // 1-based, global across the whole solve
  std::size_t triplet = 0;  // 1-based ordinal of the triplet being sought
  std::size_t m = 0;        // subspace dimension at extraction
  double theta = 0.0;
  double resnorm = 0.0;
  std::size_t inner_iters = 0;
  double eta = 0.0;
  double r_in = 0.0;
  bool hit_cap = false;
  double secs = 0.0;  // elapsed since solve start when the row was emitted
};

struct DeflationSet {
  std::vector<double> thetas;
  DenseMatrix uc, vc;

  std::size_t size() const { return thetas.size(); }
};

struct SolveResult {
  std::vector<ApproxTriplet> triplets;  // sorted by |theta - tau| ascending
  std::vector<HistoryRecord> history;
  bool converged = false;
  std::size_t outer_iterations = 0;
  std::size_t inner_iterations = 0;
  std::size_t random_substitutions = 0;
  double seconds = 0.0;
};

// Snapshot of one outer iteration, handed to the instrumentation callback
// after the inner solve and before the subspace changes.
struct OuterContext {
  const SparseMatrix& a;
  const SolverConfig& cfg;
  const SearchState& state;
  const DeflationSet& locked;
  const ExtractionResult& extraction;
  const Vector& res;
  double resnorm;
  const Vector& rhs;
  const InnerSolveReport& inner;
  std::size_t outer_index;
  std::size_t triplet_index;
};

using OuterCallback = std::function<void(const OuterContext&)>;

// Residual with the components along the converged left/right vectors
// removed; the correction equation for a deflated solve uses its negative
// as the right-hand side.
inline Vector projected_residual(const Vector& r, const DeflationSet& locked,
                                 std::size_t m_rows, std::size_t n_cols) {
  Vector out(r);
  std::span<double> top(out.data(), m_rows);
  std::span<double> bottom(out.data() + m_rows, n_cols);
  for (std::size_t j = 0; j < locked.uc.cols(); ++j)
    axpy(-dot(locked.uc.col(j), top), locked.uc.col(j), top);
  for (std::size_t j = 0; j < locked.vc.cols(); ++j)
    axpy(-dot(locked.vc.col(j), bottom), locked.vc.col(j), bottom);
  return out;
}

// Removes the converged direction (coefficients c, d) from the subspaces by
// right-multiplying every cached block with full QR completions of c and d.
// No sparse products are spent; the purged state has dimension m - 1 and
// serves as the initial space for the next triplet.
inline void purge_converged(SearchState& st, const Vector& c, const Vector& d) {
  const std::size_t m = st.dim();
  if (m < 2) throw std::invalid_argument("purge_converged: dimension must exceed one");
  DenseMatrix cc(m, 0), dd(m, 0);
  cc.append_col(c);
  dd.append_col(d);
  DenseMatrix comp_c = orthonormal_completion(cc);
  DenseMatrix comp_d = orthonormal_completion(dd);
  st.U = mul(st.U, comp_c);
  st.V = mul(st.V, comp_d);
  st.AV = mul(st.AV, comp_d);
  st.AtU = mul(st.AtU, comp_c);
  st.H = mul_at_b(comp_c, mul(st.H, comp_d));
  st.G1 = mul_at_b(comp_c, mul(st.G1, comp_c));
  st.G2 = mul_at_b(comp_d, mul(st.G2, comp_d));
}

// Shrinks the subspaces to the best `keep` extraction pairs, rebuilding all
// cached blocks by coefficient transforms only (no sparse products). For the
// refined variant each kept harmonic Rayleigh quotient re-solves the small
// minimization that defines its refined pair. Pairs whose coefficients are
// numerically dependent on already-kept ones are dropped, so the result may
// be thinner than `keep`; an empty result tells the caller to start afresh.
inline void thick_restart(SearchState& st, double tau, Variant variant, std::size_t keep) {
  const std::size_t m = st.dim();
  if (keep >= m) return;

  auto [f, g] = assemble_FG(st, tau);
  std::vector<GenEigPair> pairs = sym_definite_gen_eig(f, g);

  DenseMatrix kept_c(m, 0), kept_d(m, 0);
  for (const GenEigPair& pair : pairs) {
    if (kept_c.cols() >= keep) break;
    Vector c, d;
    if (!detail::split_coefficients(pair.f, m, c, d)) continue;
    detail::sign_fixed_cross(st, c, d);
    if (variant == Variant::RefinedHarmonic) {
      double rho = dot(c, mul(st.H, d));
      SymEig eig = sym_eig(assemble_g(st, rho));
      Vector rc, rd;
      Vector fv(eig.vectors.col(0).begin(), eig.vectors.col(0).end());
      if (detail::split_coefficients(fv, m, rc, rd)) {
        detail::sign_fixed_cross(st, rc, rd);
        c = std::move(rc);
        d = std::move(rd);
      }
    }
    OrthoResult oc = orthonormalize_against(c, kept_c);
    OrthoResult od = orthonormalize_against(d, kept_d);
    if (oc.rejected || od.rejected) continue;
    kept_c.append_col(oc.vector);
    kept_d.append_col(od.vector);
  }

  st.U = mul(st.U, kept_c);
  st.V = mul(st.V, kept_d);
  st.AV = mul(st.AV, kept_d);
  st.AtU = mul(st.AtU, kept_c);
  st.H = mul_at_b(kept_c, mul(st.H, kept_d));
  st.G1 = mul_at_b(kept_c, mul(st.G1, kept_c));
  st.G2 = mul_at_b(kept_d, mul(st.G2, kept_d));
}

namespace detail {

inline Vector constant_unit(std::size_t n) {
  return Vector(n, 1.0 / std::sqrt(static_cast<double>(n)));
}

// Orthonormalizes a proposed direction against the locked block and the
// current basis; a rejected direction is replaced by a seeded random one.
inline Vector admit_direction(const Vector& candidate, const DenseMatrix& locked_block,
                              const DenseMatrix& basis, std::mt19937_64& rng,
                              std::size_t& substitutions) {
  const DenseMatrix* blocks[] = {&locked_block, &basis};
  OrthoResult o = orthonormalize_against(candidate, blocks);
  if (!o.rejected) return std::move(o.vector);
  ++substitutions;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::size_t n = candidate.size();
    OrthoResult ro = orthonormalize_against(random_unit(n, rng), blocks);
    if (!ro.rejected) return std::move(ro.vector);
  }
  throw NumericFailure("solve: cannot produce a new orthonormal direction");
}

}  // namespace detail

// Computes the num_triplets singular triplets of A closest to tau by
// Jacobi-Davidson iteration with harmonic or refined-harmonic extraction,
// one MINRES correction solve per outer iteration, thick restarts at
// max_dim, and deflation of converged triplets. Convergence is declared
// when the freshly computed residual norm falls to one_norm(A) * tol.
inline SolveResult solve(const SparseMatrix& a, const SolverConfig& cfg,
                         const OuterCallback& callback = {}) {
  const std::size_t m_rows = a.rows();
  const std::size_t n_cols = a.cols();
  if (m_rows == 0 || n_cols == 0) throw std::invalid_argument("solve: empty matrix");
  if (cfg.tau < 0.0) throw std::invalid_argument("solve: tau must be nonnegative");
  if (cfg.num_triplets == 0) throw std::invalid_argument("solve: num_triplets must be positive");
  if (cfg.num_triplets > std::min(m_rows, n_cols))
    throw std::invalid_argument("solve: more triplets requested than exist");
  if (cfg.max_dim < 2 || cfg.restart_keep == 0 || cfg.restart_keep >= cfg.max_dim)
    throw std::invalid_argument("solve: need 1 <= restart_keep < max_dim and max_dim >= 2");

  const double threshold = a.one_norm() * cfg.tol;
  const std::size_t max_inner = cfg.max_inner ? cfg.max_inner : 2 * (m_rows + n_cols);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::mt19937_64 rng(cfg.seed);
  SolveResult result;
  DeflationSet locked{{}, DenseMatrix(m_rows, 0), DenseMatrix(n_cols, 0)};
  SearchState state;
  Vector pending_u = detail::constant_unit(m_rows);
  Vector pending_v = detail::constant_unit(n_cols);
  bool have_pending = true;
  int degenerate_retries = 0;

  auto reinitialize = [&] {
    state = SearchState{};
    pending_u = detail::admit_direction(detail::constant_unit(m_rows), locked.uc,
                                        DenseMatrix(m_rows, 0), rng,
                                        result.random_substitutions);
    pending_v = detail::admit_direction(detail::constant_unit(n_cols), locked.vc,
                                        DenseMatrix(n_cols, 0), rng,
                                        result.random_substitutions);
    have_pending = true;
  };

  while (locked.size() < cfg.num_triplets && result.outer_iterations < cfg.max_outer) {
    if (have_pending) {
      expand_state(state, a, pending_u, pending_v);
      have_pending = false;
    }

    ExtractionResult ex;
    try {
      ex = harmonic_extract(state, cfg.tau);
      if (cfg.variant == Variant::RefinedHarmonic)
        ex = refined_harmonic_extract(state, cfg.tau, ex);
    } catch (const DegeneratePencil&) {
      if (++degenerate_retries > 8)
        throw NumericFailure("solve: repeated degenerate extractions");
      reinitialize();
      continue;
    }
    degenerate_retries = 0;
    ++result.outer_iterations;
    const std::size_t outer = result.outer_iterations;
    // 1-based ordinal of the triplet currently being sought
    const std::size_t k = locked.size() + 1;

    auto [r, rnorm] = residual(a, ex.theta, ex.u, ex.v);
    if (!std::isfinite(rnorm)) throw NumericFailure("solve: non-finite residual");

    if (rnorm <= threshold) {
      locked.thetas.push_back(ex.theta);
      locked.uc.append_col(ex.u);
      locked.vc.append_col(ex.v);
      result.triplets.push_back({ex.theta, ex.u, ex.v, std::move(r), rnorm});
      result.history.push_back(
          {outer, k, state.dim(), ex.theta, rnorm, 0, 0.0, 0.0, false, elapsed()});
      if (locked.size() == cfg.num_triplets) {
        result.converged = true;
        break;
      }
      if (state.dim() > 1)
        purge_converged(state, ex.c, ex.d);
      else
        reinitialize();
      continue;
    }

    const double eta = cfg.inner_mode == InnerMode::IterExact
                           ? 1e-14
                           : inner_tolerance(ex, cfg.tau, cfg.eps_tilde, state.dim());
    DenseMatrix q = locked.uc;
    q.append_col(ex.u);
    DenseMatrix z = locked.vc;
    z.append_col(ex.v);

    // The correction equation lives in the orthogonal complement of (q, z);
    // project the right-hand side onto that complement explicitly.  The
    // residual is orthogonal to u and v only up to absolute rounding error,
    // which would otherwise leave a noise floor under the relative inner
    // residual once the outer residual itself is small.
    Vector rhs(r);
    {
      std::span<double> top(rhs.data(), m_rows);
      std::span<double> bottom(rhs.data() + m_rows, n_cols);
      for (std::size_t j = 0; j < q.cols(); ++j)
        axpy(-dot(q.col(j), top), q.col(j), top);
      for (std::size_t j = 0; j < z.cols(); ++j)
        axpy(-dot(z.col(j), bottom), z.col(j), bottom);
    }
    for (double& x : rhs) x = -x;

    ProjectedOperator op(a, cfg.tau, std::move(q), std::move(z));
    InnerSolveReport inner = minres_solve(op, rhs, eta, max_inner);
    result.inner_iterations += inner.iterations;

    if (callback)
      callback(OuterContext{a, cfg, state, locked, ex, r, rnorm, rhs, inner, outer, k});

    result.history.push_back({outer, k, state.dim(), ex.theta, rnorm, inner.iterations,
                              eta, inner.r_in, inner.hit_cap, elapsed()});

    // Restart when the basis reaches its budget, and also when together
    // with the locked columns it is about to exhaust the smaller coordinate
    // space, where no further expansion direction can exist.
    const std::size_t room = std::min(m_rows, n_cols) - locked.size();
    if (state.dim() >= cfg.max_dim || state.dim() >= room) {
      std::size_t keep = std::min(cfg.restart_keep, room > 0 ? room - 1 : 0);
      thick_restart(state, cfg.tau, cfg.variant, keep);
      if (state.dim() == 0) {
        reinitialize();
        continue;
      }
    }

    pending_u = detail::admit_direction(inner.s, locked.uc, state.U, rng,
                                        result.random_substitutions);
    pending_v = detail::admit_direction(inner.t, locked.vc, state.V, rng,
                                        result.random_substitutions);
    have_pending = true;
  }

  std::stable_sort(result.triplets.begin(), result.triplets.end(),
                   [&](const ApproxTriplet& x, const ApproxTriplet& y) {
                     return std::abs(x.theta - cfg.tau) < std::abs(y.theta - cfg.tau);
                   });
  result.seconds = elapsed();
  return result;
}

}  // namespace jdsvd
