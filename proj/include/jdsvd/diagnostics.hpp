#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "jdsvd/csv.hpp"
#include "jdsvd/dense_eig.hpp"
#include "jdsvd/solver.hpp"

// Desk-scale verification harness. Everything here leans on dense
// factorizations of the full shifted operator, so it is restricted to small
// matrices and exists to check the solver's accuracy theory, not to compute.

namespace jdsvd {

// Dense ground truth shared by all instrumented iterations of one run:
// the full SVD, the spectral norm, and the eigendecomposition of the
// shifted stacked operator K = [[-tau I, A], [A^T, -tau I]], whose inverse
// realizes every closed-form quantity below.
struct DeskWorkspace {
  const SparseMatrix* a = nullptr;
  double tau = 0.0;
  DenseMatrix a_dense;
  Svd oracle;          // sigma descending
  double a_norm2 = 0.0;
  SymEig shifted_eig;  // of K; reused for every K^{-1} application

  std::size_t rows() const { return a->rows(); }
  std::size_t cols() const { return a->cols(); }
};

namespace detail {

inline DenseMatrix assemble_shifted(const DenseMatrix& ad, double tau) {
  const std::size_t m = ad.rows(), n = ad.cols();
  DenseMatrix k(m + n, m + n);
  for (std::size_t i = 0; i < m + n; ++i) k(i, i) = -tau;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) {
      k(i, m + j) = ad(i, j);
      k(m + j, i) = ad(i, j);
    }
  return k;
}

// x = K^{-1} rhs through the cached eigendecomposition.
inline Vector solve_shifted(const SymEig& eig, const Vector& rhs) {
  const std::size_t n = rhs.size();
  double lmax = 0.0;
  for (double l : eig.values) lmax = std::max(lmax, std::abs(l));
  Vector x(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(eig.values[j]) <= 1e-14 * lmax)
      throw NumericFailure("solve_shifted: target too close to a singular value");
    axpy(dot(eig.vectors.col(j), rhs) / eig.values[j], eig.vectors.col(j), x);
  }
  return x;
}

inline DenseMatrix solve_shifted(const SymEig& eig, const DenseMatrix& rhs) {
  DenseMatrix x(rhs.rows(), rhs.cols());
  for (std::size_t j = 0; j < rhs.cols(); ++j) {
    Vector col(rhs.col(j).begin(), rhs.col(j).end());
    x.set_col(j, solve_shifted(eig, col));
  }
  return x;
}

}  // namespace detail

inline DeskWorkspace make_desk_workspace(const SparseMatrix& a, double tau) {
  if (a.rows() + a.cols() > 1200 || a.rows() > 600 || a.cols() > 600)
    throw std::invalid_argument("make_desk_workspace: matrix above the desk-scale cap");
  DeskWorkspace ws;
  ws.a = &a;
  ws.tau = tau;
  ws.a_dense = a.to_dense();
  ws.oracle = dense_svd(ws.a_dense);
  ws.a_norm2 = ws.oracle.sigma.empty() ? 0.0 : ws.oracle.sigma[0];
  ws.shifted_eig = sym_eig(detail::assemble_shifted(ws.a_dense, tau));
  double lmax = 0.0, lmin = std::numeric_limits<double>::infinity();
  for (double l : ws.shifted_eig.values) {
    lmax = std::max(lmax, std::abs(l));
    lmin = std::min(lmin, std::abs(l));
  }
  if (lmin <= 1e-13 * lmax)
    throw NumericFailure("make_desk_workspace: target coincides with a singular value");
  return ws;
}

// Component of x orthogonal to the column span, with one reorthogonalization
// pass; also correct for an empty basis.
inline Vector perp_component(const DenseMatrix& basis, std::span<const double> x) {
  Vector w(x.begin(), x.end());
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t j = 0; j < basis.cols(); ++j)
      axpy(-dot(basis.col(j), w), basis.col(j), w);
  return w;
}

// Sine of the acute angle between two nonzero vectors.
inline double sin_between(std::span<const double> x, std::span<const double> y) {
  // computed from the perpendicular component rather than sqrt(1 - cos^2),
  // which flushes angles below ~1e-8 to zero as cos rounds to 1
  double nx = norm2(x), ny = norm2(y);
  Vector p(x.begin(), x.end());
  double coeff = dot(x, y) / (ny * ny);
  axpy(-coeff, y, p);
  double s = norm2(p) / nx;
  return std::min(s, 1.0);
}

// Sine of the angle between a nonzero vector and the column span.
inline double sin_to_span(const DenseMatrix& basis, const Vector& x) {
  return norm2(perp_component(basis, x)) / norm2(x);
}

// Exact solution of the projected correction equation, obtained by
// restricting the shifted operator to the orthogonal complements of
// Q = [U_c, u] and Z = [V_c, v] and solving there by eigendecomposition.
struct ExactCorrection {
  Vector s, t;
  double alpha = 0.0, beta = 0.0;
  double alpha_excess = 0.0;  // u^T A t = alpha - (theta - tau), formed directly
  double beta_excess = 0.0;   // v^T A^T s
  double st_norm = 0.0;
  double kappa_restricted = 0.0;  // condition number of the restricted operator
  double solve_residual_rel = 0.0;  // vs. ||A|| * ||rhs||
  double fixedpoint_gap = 0.0;      // relative gap to the closed-form expression
};

inline ExactCorrection exact_correction_solution(const DeskWorkspace& ws, double theta,
                                                 const Vector& u, const Vector& v,
                                                 const DenseMatrix& uc,
                                                 const DenseMatrix& vc) {
  const SparseMatrix& a = *ws.a;
  const std::size_t m = a.rows(), n = a.cols();

  DenseMatrix q = uc;
  q.append_col(u);
  DenseMatrix z = vc;
  z.append_col(v);
  DenseMatrix yq = orthonormal_completion(q);
  DenseMatrix yz = orthonormal_completion(z);
  DenseMatrix y(m + n, yq.cols() + yz.cols());
  for (std::size_t j = 0; j < yq.cols(); ++j)
    for (std::size_t i = 0; i < m; ++i) y(i, j) = yq(i, j);
  for (std::size_t j = 0; j < yz.cols(); ++j)
    for (std::size_t i = 0; i < n; ++i) y(m + i, yq.cols() + j) = yz(i, j);

  // restricted operator R = Y^T K Y, with K applied through sparse products
  DenseMatrix ky(m + n, y.cols());
  for (std::size_t j = 0; j < y.cols(); ++j) {
    std::span<const double> top(y.col(j).data(), m);
    std::span<const double> bottom(y.col(j).data() + m, n);
    Vector kt = a.apply(bottom);
    axpy(-ws.tau, top, kt);
    Vector kb = a.apply_transpose(top);
    axpy(-ws.tau, bottom, kb);
    ky.set_col(j, concat(kt, kb));
  }
  DenseMatrix r_op = mul_at_b(y, ky);
  SymEig eig = sym_eig(r_op);
  double lmax = 0.0;
  for (double l : eig.values) lmax = std::max(lmax, std::abs(l));
  double lmin = std::numeric_limits<double>::infinity();
  for (double l : eig.values) lmin = std::min(lmin, std::abs(l));
  if (lmin <= 1e-14 * lmax)
    throw NumericFailure("exact_correction_solution: singular projected system");

  auto [res, resnorm] = residual(a, theta, u, v);
  Vector rhs(res);
  {
    std::span<double> top(rhs.data(), m);
    std::span<double> bottom(rhs.data() + m, n);
    for (std::size_t j = 0; j < q.cols(); ++j)
      axpy(-dot(q.col(j), top), q.col(j), top);
    for (std::size_t j = 0; j < z.cols(); ++j)
      axpy(-dot(z.col(j), bottom), z.col(j), bottom);
  }
  for (double& x : rhs) x = -x;

  Vector b = mul_t(y, rhs);
  Vector xi(b.size(), 0.0);
  for (std::size_t j = 0; j < b.size(); ++j)
    axpy(dot(eig.vectors.col(j), b) / eig.values[j], eig.vectors.col(j), xi);
  Vector st = mul(y, xi);

  ExactCorrection out;
  out.s.assign(st.begin(), st.begin() + static_cast<std::ptrdiff_t>(m));
  out.t.assign(st.begin() + static_cast<std::ptrdiff_t>(m), st.end());
  out.st_norm = norm2(st);
  out.kappa_restricted = lmax / lmin;
  out.alpha_excess = dot(u, a.apply(out.t));
  out.beta_excess = dot(v, a.apply_transpose(out.s));
  out.alpha = theta - ws.tau + out.alpha_excess;
  out.beta = theta - ws.tau + out.beta_excess;

  // residual of the doubly projected equation at the computed solution
  Vector kst_top = a.apply(out.t);
  axpy(-ws.tau, out.s, kst_top);
  Vector kst_bottom = a.apply_transpose(out.s);
  axpy(-ws.tau, out.t, kst_bottom);
  Vector kst = concat(kst_top, kst_bottom);
  {
    std::span<double> top(kst.data(), m);
    std::span<double> bottom(kst.data() + m, n);
    for (std::size_t j = 0; j < q.cols(); ++j) axpy(-dot(q.col(j), top), q.col(j), top);
    for (std::size_t j = 0; j < z.cols(); ++j)
      axpy(-dot(z.col(j), bottom), z.col(j), bottom);
  }
  axpy(-1.0, rhs, kst);
  double denom = std::max(ws.a_norm2 * norm2(rhs), 1e-300);
  out.solve_residual_rel = norm2(kst) / denom;

  // agreement with the closed-form expression through the full inverse
  Vector au(u);
  scale(au, out.alpha);
  Vector bv(v);
  scale(bv, out.beta);
  Vector fp = detail::solve_shifted(ws.shifted_eig, concat(au, bv));
  axpy(-1.0, concat(u, v), fp);
  axpy(-1.0, st, fp);
  // Normalized by the size of the reconstruction operands, not by ||[s;t]||:
  // near convergence the correction is the difference of two O(1) vectors,
  // so certifying it relative to its own (tiny) norm is impossible in
  // double precision.
  out.fixedpoint_gap = norm2(fp) / std::max(out.st_norm, std::sqrt(2.0));
  return out;
}

// Relative errors of an approximate correction (s~, t~) against the exact
// (s, t): the whole-vector error, the per-side projected errors, their
// maximum, the projected whole-vector error, and the normalized error
// direction with its projections.
struct ExpansionErrors {
  bool defined = false;        // ||[s;t]|| > 0
  bool sides_defined = false;  // both projected denominators > 0
  double eps = 0.0;
  double eps_s = 0.0, eps_t = 0.0;
  double eps_tilde = 0.0;
  double eps_hat = 0.0;
  Vector g, h, g_perp, h_perp;
  double gh_norm = 0.0;       // ||g||^2 + ||h||^2, 1 by construction when eps > 0
  double gh_perp_norm = 0.0;  // sqrt(||g_perp||^2 + ||h_perp||^2)
};

inline ExpansionErrors expansion_error_metrics(const Vector& s, const Vector& t,
                                               const Vector& s_tilde, const Vector& t_tilde,
                                               const DenseMatrix& u_basis,
                                               const DenseMatrix& v_basis) {
  ExpansionErrors out;
  Vector st = concat(s, t);
  double st_norm = norm2(st);
  if (st_norm == 0.0) return out;
  out.defined = true;

  Vector ds(s_tilde);
  axpy(-1.0, s, ds);
  Vector dt(t_tilde);
  axpy(-1.0, t, dt);
  double diff = std::sqrt(dot(ds, ds) + dot(dt, dt));
  out.eps = diff / st_norm;

  Vector s_perp = perp_component(u_basis, s);
  Vector t_perp = perp_component(v_basis, t);
  Vector ds_perp = perp_component(u_basis, ds);
  Vector dt_perp = perp_component(v_basis, dt);
  double ns = norm2(s_perp), nt = norm2(t_perp);
  if (ns > 0.0 && nt > 0.0) {
    out.sides_defined = true;
    out.eps_s = norm2(ds_perp) / ns;
    out.eps_t = norm2(dt_perp) / nt;
    out.eps_tilde = std::max(out.eps_s, out.eps_t);
    out.eps_hat = std::sqrt(dot(ds_perp, ds_perp) + dot(dt_perp, dt_perp)) /
                  std::sqrt(ns * ns + nt * nt);
  }

  if (out.eps > 0.0) {
    double w = 1.0 / (out.eps * st_norm);
    out.g = ds;
    scale(out.g, w);
    out.h = dt;
    scale(out.h, w);
    out.g_perp = perp_component(u_basis, out.g);
    out.h_perp = perp_component(v_basis, out.h);
    out.gh_norm = dot(out.g, out.g) + dot(out.h, out.h);
    out.gh_perp_norm = std::sqrt(dot(out.g_perp, out.g_perp) + dot(out.h_perp, out.h_perp));
  }
  return out;
}

// Angles of the one-step subspace expansion against a reference triplet.
struct ExpansionAngles {
  bool u_defined = false, v_defined = false;  // perpendicular component and
                                              // exact expansion vector exist
  bool u_tilde_defined = false, v_tilde_defined = false;
  double sin_u_span = 1.0, sin_v_span = 1.0;  // angle(span U, u*), (span V, v*)
  double ustar_perp_norm = 0.0, vstar_perp_norm = 0.0;
  double sin_uplus_perp = 0.0, sin_vplus_perp = 0.0;    // angle(u+, u*_perp)
  double sin_uplus_tilde_perp = 0.0, sin_vplus_tilde_perp = 0.0;
  double sin_uexp = 0.0, sin_vexp = 0.0;                // angle([U,u+], u*)
  double sin_uexp_tilde = 0.0, sin_vexp_tilde = 0.0;    // angle([U,u~+], u*)
  double tau_s = std::numeric_limits<double>::infinity();
  double tau_t = std::numeric_limits<double>::infinity();
};

namespace detail {

inline VerificationRow identity_row(const std::string& name, double lhs, double rhs,
                                    bool hyp) {
  return {name, lhs, rhs, !hyp || std::abs(lhs - rhs) <= 1e-10, hyp};
}

inline VerificationRow bound_row(const std::string& name, double lhs, double rhs,
                                 bool hyp) {
  bool pass = !hyp || !(lhs > rhs * (1.0 + 1e-9) + 1e-300) || !std::isfinite(rhs);
  return {name, lhs, rhs, pass, hyp};
}

inline VerificationRow report_row(const std::string& name, double lhs, double rhs) {
  return {name, lhs, rhs, true, false};
}

struct SideAngles {
  bool defined = false, tilde_defined = false;
  double sin_span = 1.0, perp_norm = 0.0;
  double sin_plus = 0.0, sin_plus_tilde = 0.0;
  double sin_exp = 0.0, sin_exp_tilde = 0.0;
  double tau_bound = std::numeric_limits<double>::infinity();
};

inline SideAngles side_angles(const DenseMatrix& basis, const Vector& plus,
                              const Vector& plus_tilde, const Vector& star,
                              double eps_side) {
  SideAngles sa;
  Vector star_perp = perp_component(basis, star);
  sa.perp_norm = norm2(star_perp);
  sa.sin_span = sa.perp_norm / norm2(star);
  if (sa.perp_norm <= 1e-10 || plus.empty()) return sa;
  sa.defined = true;
  sa.sin_plus = sin_between(plus, star_perp);
  DenseMatrix expanded = basis;
  expanded.append_col(plus);
  sa.sin_exp = norm2(perp_component(expanded, star)) / norm2(star);
  if (eps_side >= 0.0) sa.tau_bound = 2.0 * eps_side / sa.sin_plus;
  if (!plus_tilde.empty()) {
    sa.tilde_defined = true;
    sa.sin_plus_tilde = sin_between(plus_tilde, star_perp);
    DenseMatrix expanded_tilde = basis;
    expanded_tilde.append_col(plus_tilde);
    sa.sin_exp_tilde = norm2(perp_component(expanded_tilde, star)) / norm2(star);
  }
  return sa;
}

inline void side_rows(std::vector<VerificationRow>& rows, const char* suffix,
                      const SideAngles& sa) {
  std::string id = std::string("expand_identity_") + suffix;
  rows.push_back(identity_row(id, sa.sin_exp, sa.sin_span * sa.sin_plus, sa.defined));

  bool ratio_ok = sa.defined && sa.tilde_defined && sa.sin_exp > 1e-4 && sa.sin_plus > 1e-4;
  double ratio_lhs = ratio_ok ? sa.sin_exp_tilde / sa.sin_exp : 0.0;
  double ratio_rhs = ratio_ok ? sa.sin_plus_tilde / sa.sin_plus : 0.0;
  rows.push_back(
      identity_row(std::string("expand_ratio_") + suffix, ratio_lhs, ratio_rhs, ratio_ok));

  bool bracket_ok = ratio_ok && std::isfinite(sa.tau_bound) && sa.tau_bound < 1.0;
  bool bracket_pass = !bracket_ok || std::abs(ratio_lhs - 1.0) <= sa.tau_bound + 1e-10;
  rows.push_back({std::string("expand_bracket_") + suffix, ratio_lhs, sa.tau_bound,
                  bracket_pass, bracket_ok});
}

}  // namespace detail

// Checks that expanding the bases by the exact and inexact directions moves
// the subspace angles exactly as the one-step expansion identities predict,
// and that the inexact-to-exact angle ratio stays inside its two-sided
// bound when that bound is below one. Pass empty vectors for directions
// that do not exist. Negative eps_s/eps_t skip the bracket rows.
inline std::vector<VerificationRow> subspace_expansion_identities(
    const DenseMatrix& u_basis, const DenseMatrix& v_basis, const Vector& u_plus,
    const Vector& v_plus, const Vector& u_tilde_plus, const Vector& v_tilde_plus,
    const Vector& u_star, const Vector& v_star, double eps_s = -1.0, double eps_t = -1.0,
    ExpansionAngles* angles_out = nullptr) {
  detail::SideAngles su = detail::side_angles(u_basis, u_plus, u_tilde_plus, u_star, eps_s);
  detail::SideAngles sv = detail::side_angles(v_basis, v_plus, v_tilde_plus, v_star, eps_t);

  std::vector<VerificationRow> rows;
  detail::side_rows(rows, "u", su);
  detail::side_rows(rows, "v", sv);

  if (angles_out) {
    ExpansionAngles a;
    a.u_defined = su.defined;
    a.v_defined = sv.defined;
    a.u_tilde_defined = su.tilde_defined;
    a.v_tilde_defined = sv.tilde_defined;
    a.sin_u_span = su.sin_span;
    a.sin_v_span = sv.sin_span;
    a.ustar_perp_norm = su.perp_norm;
    a.vstar_perp_norm = sv.perp_norm;
    a.sin_uplus_perp = su.sin_plus;
    a.sin_vplus_perp = sv.sin_plus;
    a.sin_uplus_tilde_perp = su.sin_plus_tilde;
    a.sin_vplus_tilde_perp = sv.sin_plus_tilde;
    a.sin_uexp = su.sin_exp;
    a.sin_vexp = sv.sin_exp;
    a.sin_uexp_tilde = su.sin_exp_tilde;
    a.sin_vexp_tilde = sv.sin_exp_tilde;
    a.tau_s = su.tau_bound;
    a.tau_t = sv.tau_bound;
    *angles_out = a;
  }
  return rows;
}

// Conditioning of the restriction of the inverted shifted operator to the
// complement of the first k converged triplets, evaluated from oracle
// singular values ordered by distance from the target. Returns +inf when
// the (k+2)-nd closest value hits the target exactly.
inline double kappa_b_prime(Vector sigmas, double tau, std::size_t k) {
  if (k + 2 > sigmas.size())
    throw std::invalid_argument("kappa_b_prime: needs at least k + 2 singular values");
  std::stable_sort(sigmas.begin(), sigmas.end(), [&](double x, double y) {
    return std::abs(x - tau) < std::abs(y - tau);
  });
  double smax = 0.0;
  for (std::size_t i = k + 1; i < sigmas.size(); ++i) smax = std::max(smax, sigmas[i]);
  double denom = std::abs(sigmas[k + 1] - tau);
  if (denom == 0.0) return std::numeric_limits<double>::infinity();
  return (smax + tau) / denom;
}

// Everything measured at one instrumented outer iteration.
struct DiagnosticsRecord {
  std::size_t outer = 0;
  std::size_t triplet = 0;
  double theta = 0.0, resnorm = 0.0, eta = 0.0, r_in = 0.0;
  double sigma_star = 0.0;
  bool sigma_simple = false;
  Vector u_star, v_star;
  Vector w, z;  // stacked unit reference and iterate, [u*;v*]/sqrt(2), [u;v]/sqrt(2)
  double sin_phi = 0.0, sin_psi = 0.0, sin_max = 0.0;
  ExactCorrection exact;
  ExpansionErrors err;
  ExpansionAngles angles;
  double gamma = 0.0;
  bool gamma_defined = false;
  double bz_gamma_norm = 0.0;  // residual of gamma as an inverted-operator eigenvalue at z
  double sin_zw = 0.0;
  double delta = 0.0;
  bool delta_defined = false;
  double sep_exact = 0.0;
  bool sep_defined = false;
  double sep_estimate = 0.0;
  bool sep_estimate_defined = false;
  double kappa_formula = 0.0;
  bool norm_hypothesis = false;  // target distance attains the spectral minimum
  bool sign_condition = false;   // sign(theta - tau) agrees with alpha + beta
  std::vector<VerificationRow> rows;
};

namespace detail {

// Matches each locked value to its nearest oracle index, then picks the
// closest remaining value to the target.
inline std::size_t target_oracle_index(const Svd& oracle, double tau,
                                       const std::vector<double>& locked_thetas,
                                       std::vector<std::size_t>* locked_idx = nullptr) {
  std::vector<bool> taken(oracle.sigma.size(), false);
  for (double th : locked_thetas) {
    std::size_t best = oracle.sigma.size();
    double bestd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < oracle.sigma.size(); ++i) {
      if (taken[i]) continue;
      double d = std::abs(oracle.sigma[i] - th);
      if (d < bestd) {
        bestd = d;
        best = i;
      }
    }
    if (best < oracle.sigma.size()) {
      taken[best] = true;
      if (locked_idx) locked_idx->push_back(best);
    }
  }
  std::size_t star = oracle.sigma.size();
  double bestd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < oracle.sigma.size(); ++i) {
    if (taken[i]) continue;
    double d = std::abs(oracle.sigma[i] - tau);
    if (d < bestd) {
      bestd = d;
      star = i;
    }
  }
  if (star == oracle.sigma.size())
    throw std::invalid_argument("target_oracle_index: no unlocked singular value left");
  return star;
}

}  // namespace detail

// Measures every theory quantity for one outer iteration and appends the
// full set of assertion rows. The snapshot must come from the solve that the
// workspace's matrix and target describe.
inline DiagnosticsRecord instrument_iteration(const DeskWorkspace& ws,
                                              const OuterContext& ctx) {
  const std::size_t m = ws.rows(), n = ws.cols();
  DiagnosticsRecord rec;
  rec.outer = ctx.outer_index;
  rec.triplet = ctx.triplet_index;
  rec.theta = ctx.extraction.theta;
  rec.resnorm = ctx.resnorm;
  rec.eta = ctx.inner.eta;
  rec.r_in = ctx.inner.r_in;

  // oracle target for this iteration
  std::vector<std::size_t> locked_idx;
  std::size_t star =
      detail::target_oracle_index(ws.oracle, ws.tau, ctx.locked.thetas, &locked_idx);
  rec.sigma_star = ws.oracle.sigma[star];
  rec.u_star.assign(ws.oracle.u.col(star).begin(), ws.oracle.u.col(star).end());
  rec.v_star.assign(ws.oracle.v.col(star).begin(), ws.oracle.v.col(star).end());
  double sigma_scale = std::max(ws.a_norm2, 1.0);
  rec.sigma_simple = true;
  for (std::size_t i = 0; i < ws.oracle.sigma.size(); ++i)
    if (i != star && std::abs(ws.oracle.sigma[i] - rec.sigma_star) <= 1e-10 * sigma_scale)
      rec.sigma_simple = false;
  if (rec.sigma_star <= 1e-12 * sigma_scale) rec.sigma_simple = false;

  const Vector& u = ctx.extraction.u;
  const Vector& v = ctx.extraction.v;
  rec.sin_phi = sin_between(u, rec.u_star);
  rec.sin_psi = sin_between(v, rec.v_star);
  rec.sin_max = std::max(rec.sin_phi, rec.sin_psi);
  rec.w = concat(rec.u_star, rec.v_star);
  scale(rec.w, 1.0 / norm2(rec.w));
  rec.z = concat(u, v);
  scale(rec.z, 1.0 / norm2(rec.z));
  rec.sin_zw = sin_between(rec.z, rec.w);

  // whether the reference distance is the smallest over the whole shifted
  // spectrum left after deflation; the norm arguments in the bounds need it
  {
    double dist = std::abs(rec.sigma_star - ws.tau);
    double smallest = dist;
    std::vector<bool> taken(ws.oracle.sigma.size(), false);
    for (std::size_t i : locked_idx) taken[i] = true;
    for (std::size_t i = 0; i < ws.oracle.sigma.size(); ++i) {
      if (taken[i]) continue;
      smallest = std::min(smallest, std::abs(ws.oracle.sigma[i] - ws.tau));
      smallest = std::min(smallest, ws.oracle.sigma[i] + ws.tau);
    }
    if (m != n) smallest = std::min(smallest, ws.tau);
    rec.norm_hypothesis = dist <= smallest * (1.0 + 1e-12);
  }

  rec.exact = exact_correction_solution(ws, rec.theta, u, v, ctx.locked.uc, ctx.locked.vc);
  rec.err = expansion_error_metrics(rec.exact.s, rec.exact.t, ctx.inner.s, ctx.inner.t,
                                    ctx.state.U, ctx.state.V);
  rec.sign_condition =
      (rec.theta - ws.tau) * (rec.exact.alpha + rec.exact.beta) > 0.0;

  double ab2 = rec.exact.alpha * rec.exact.alpha + rec.exact.beta * rec.exact.beta;
  if (ab2 > 0.0 && rec.theta != ws.tau) {
    rec.gamma_defined = true;
    rec.gamma = (rec.theta > ws.tau ? 1.0 : -1.0) * std::sqrt(2.0) / std::sqrt(ab2);
  }

  // residual of gamma at the normalized iterate, through the full inverse
  Vector buv = detail::solve_shifted(ws.shifted_eig, concat(u, v));
  if (rec.gamma_defined) {
    Vector diff(buv);
    axpy(-rec.gamma, concat(u, v), diff);
    double full = norm2(diff);
    rec.bz_gamma_norm = full / std::sqrt(2.0);
    if (rec.exact.st_norm > 0.0) {
      rec.delta_defined = true;
      rec.delta = full / (std::abs(rec.gamma) * rec.exact.st_norm);
    }
  }

  // separation of gamma from the inverted operator restricted to the full
  // complement of the reference eigenvector; valid for any unit iterate, and
  // inversion pushes the deflated directions far from gamma anyway
  if (rec.gamma_defined) {
    DenseMatrix wblock(m + n, 1);
    wblock.set_col(0, rec.w);
    DenseMatrix wperp = orthonormal_completion(wblock);
    DenseMatrix lmat = mul_at_b(wperp, detail::solve_shifted(ws.shifted_eig, wperp));
    SymEig leig = sym_eig(lmat);
    double sep = std::numeric_limits<double>::infinity();
    for (double l : leig.values) sep = std::min(sep, std::abs(l - rec.gamma));
    rec.sep_exact = sep;
    rec.sep_defined = sep > 1e-13;
  }

  // pencil-based separation estimate from the extraction's own values
  {
    double ref = rec.theta;  // the Rayleigh quotient the inner tolerance uses
    if (ref != ws.tau) {
      double inv_ref = 1.0 / (ref - ws.tau);
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ctx.extraction.nu.size(); ++i) {
        if (i == ctx.extraction.selected) continue;
        double thp = ctx.extraction.nu[i] + ws.tau;
        if (!(thp > 0.0) || thp == ws.tau) continue;
        if (std::abs(thp - ref) <= 1e-14 * std::max(1.0, std::abs(ref))) continue;
        best = std::min(best, std::abs(inv_ref - 1.0 / (thp - ws.tau)));
      }
      if (std::isfinite(best)) {
        rec.sep_estimate = best;
        rec.sep_estimate_defined = true;
      }
    }
  }

  rec.kappa_formula = ctx.locked.size() + 2 <= ws.oracle.sigma.size()
                          ? kappa_b_prime(ws.oracle.sigma, ws.tau, ctx.locked.size())
                          : std::numeric_limits<double>::infinity();

  // expansion directions: exact from (s, t), inexact from the solver's
  // (s~, t~); empty when the projected component vanishes
  auto direction = [](const DenseMatrix& basis, const Vector& x) {
    Vector p = perp_component(basis, x);
    double np = norm2(p);
    if (np <= 1e-13 * std::max(norm2(x), 1e-300)) return Vector{};
    scale(p, 1.0 / np);
    return p;
  };
  Vector u_plus = direction(ctx.state.U, rec.exact.s);
  Vector v_plus = direction(ctx.state.V, rec.exact.t);
  Vector u_tilde = direction(ctx.state.U, ctx.inner.s);
  Vector v_tilde = direction(ctx.state.V, ctx.inner.t);

  double eps_s = rec.err.sides_defined ? rec.err.eps_s : -1.0;
  double eps_t = rec.err.sides_defined ? rec.err.eps_t : -1.0;
  rec.rows = subspace_expansion_identities(ctx.state.U, ctx.state.V, u_plus, v_plus,
                                           u_tilde, v_tilde, rec.u_star, rec.v_star,
                                           eps_s, eps_t, &rec.angles);

  // error split: the projected whole-vector error never exceeds the larger
  // per-side error
  rec.rows.push_back({"split_error_max", rec.err.eps_hat, rec.err.eps_tilde,
                      !rec.err.sides_defined || rec.err.eps_hat <= rec.err.eps_tilde + 1e-12,
                      rec.err.sides_defined});

  rec.rows.push_back({"error_direction_norm", rec.err.gh_norm, 1.0,
                      !(rec.err.defined && rec.err.eps > 0.0) ||
                          std::abs(rec.err.gh_norm - 1.0) <= 1e-12,
                      rec.err.defined && rec.err.eps > 0.0});

  const double dist = std::abs(rec.sigma_star - ws.tau);
  double s_norm = norm2(rec.exact.s), t_norm = norm2(rec.exact.t);

  rec.rows.push_back(detail::bound_row("alpha_quadratic", std::abs(rec.exact.alpha_excess),
                                       2.0 * ws.a_norm2 * t_norm * rec.sin_max,
                                       rec.sigma_simple));
  rec.rows.push_back(detail::bound_row("beta_quadratic", std::abs(rec.exact.beta_excess),
                                       2.0 * ws.a_norm2 * s_norm * rec.sin_max,
                                       rec.sigma_simple));

  bool err_usable = rec.err.defined && rec.err.sides_defined && rec.err.eps > 0.0 &&
                    rec.err.gh_perp_norm > 1e-13;
  {
    bool hyp = err_usable && rec.norm_hypothesis && dist > 0.0 && rec.exact.st_norm > 0.0;
    double rhs = hyp ? 2.0 * std::sqrt(ab2) * rec.sin_max * rec.err.eps_tilde /
                           (dist * rec.exact.st_norm * rec.err.gh_perp_norm)
                     : 0.0;
    rec.rows.push_back(detail::bound_row("expansion_bound", rec.err.eps, rhs, hyp));
  }

  {
    bool hyp = rec.gamma_defined && rec.sep_defined && rec.sigma_simple;
    double rhs = hyp ? rec.bz_gamma_norm / rec.sep_exact : 0.0;
    rec.rows.push_back(detail::bound_row("eigvec_angle_bound", rec.sin_zw, rhs, hyp));
  }

  {
    bool hyp = err_usable && rec.norm_hypothesis && rec.gamma_defined && rec.sep_defined &&
               rec.delta_defined && rec.sigma_simple && dist > 0.0;
    double rhs = hyp ? 2.0 * std::sqrt(2.0) * rec.delta * rec.err.eps_tilde /
                           (rec.sep_exact * dist * rec.err.gh_perp_norm)
                     : 0.0;
    rec.rows.push_back(detail::bound_row("separation_bound", rec.err.eps, rhs, hyp));
  }

  {
    double q = rec.gamma_defined && rec.sep_defined && dist > 0.0
                   ? 2.0 * std::abs(rec.gamma) * ws.a_norm2 * (s_norm + t_norm) /
                         (dist * rec.sep_exact)
                   : std::numeric_limits<double>::infinity();
    bool hyp = rec.delta_defined && rec.sign_condition && rec.sin_max > 0.0 &&
               rec.sigma_simple && std::isfinite(q) && q < 1.0;
    bool lower_pass = !hyp || 1.0 / (1.0 + q) <= rec.delta * (1.0 + 1e-9) + 1e-300;
    bool upper_pass = !hyp || rec.delta <= (1.0 / (1.0 - q)) * (1.0 + 1e-9) + 1e-300;
    rec.rows.push_back({"delta_bracket_lower", hyp ? 1.0 / (1.0 + q) : 0.0, rec.delta,
                        lower_pass, hyp});
    rec.rows.push_back({"delta_bracket_upper", rec.delta,
                        hyp ? 1.0 / (1.0 - q) : 0.0, upper_pass, hyp});
  }

  {
    bool hyp = rec.err.defined && std::isfinite(rec.exact.kappa_restricted);
    double lower = hyp ? rec.err.eps / rec.exact.kappa_restricted : 0.0;
    double upper = hyp ? rec.exact.kappa_restricted * rec.err.eps : 0.0;
    rec.rows.push_back(detail::bound_row("residual_sandwich_lower", lower, rec.r_in, hyp));
    rec.rows.push_back(detail::bound_row("residual_sandwich_upper", rec.r_in, upper, hyp));
  }

  rec.rows.push_back({"exact_solution_consistency", rec.exact.solve_residual_rel, 1e-10,
                      rec.exact.solve_residual_rel <= 1e-10, true});
  rec.rows.push_back({"exact_solution_fixedpoint", rec.exact.fixedpoint_gap, 1e-8,
                      ctx.locked.size() > 0 || rec.exact.fixedpoint_gap <= 1e-8,
                      ctx.locked.size() == 0});

  rec.rows.push_back(detail::report_row("sep_estimate_quality", rec.sep_exact,
                                        rec.sep_estimate));
  rec.rows.push_back(detail::report_row("kappa_estimate_quality",
                                        rec.exact.kappa_restricted, rec.kappa_formula));
  rec.rows.push_back(detail::report_row(
      "gamma_vs_inverse_gap", rec.gamma,
      rec.theta != ws.tau ? 1.0 / (rec.theta - ws.tau) : 0.0));
  return rec;
}

struct VerifyResult {
  SolveResult solve;
  std::vector<DiagnosticsRecord> records;
};

// Runs the solver with full per-iteration instrumentation. Desk scale only.
inline VerifyResult verify_run(const SparseMatrix& a, const SolverConfig& cfg) {
  DeskWorkspace ws = make_desk_workspace(a, cfg.tau);
  VerifyResult out;
  out.solve = solve(a, cfg, [&](const OuterContext& ctx) {
    out.records.push_back(instrument_iteration(ws, ctx));
  });
  return out;
}

inline std::vector<VerificationRow> collect_rows(
    const std::vector<DiagnosticsRecord>& records) {
  std::vector<VerificationRow> rows;
  for (const DiagnosticsRecord& rec : records)
    rows.insert(rows.end(), rec.rows.begin(), rec.rows.end());
  return rows;
}

struct HardFailure {
  std::string name;
  std::size_t outer = 0;
};

// First asserted row that failed with its hypothesis met, if any.
inline std::optional<HardFailure> first_hard_failure(
    const std::vector<DiagnosticsRecord>& records) {
  for (const DiagnosticsRecord& rec : records)
    for (const VerificationRow& row : rec.rows)
      if (row.hypothesis_met && !row.pass) return HardFailure{row.name, rec.outer};
  return std::nullopt;
}

}  // namespace jdsvd
