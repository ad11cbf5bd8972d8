#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "jdsvd/extraction.hpp"
#include "jdsvd/linalg.hpp"
#include "jdsvd/sparse_matrix.hpp"

namespace jdsvd {

// The doubly projected shifted operator
//   blockdiag(I - QQ^T, I - ZZ^T) [[-tau I, A], [A^T, -tau I]]
//   blockdiag(I - QQ^T, I - ZZ^T)
// acting on stacked vectors of length M + N. Q and Z hold the converged
// left/right vectors plus the current iterate. Each apply costs exactly one
// product with A and one with A^T.
class ProjectedOperator {
 public:
  ProjectedOperator(const SparseMatrix& a, double tau, DenseMatrix q, DenseMatrix z)
      : a_(&a), tau_(tau), q_(std::move(q)), z_(std::move(z)),
        ws_(a.rows()), wt_(a.cols()), as_(a.rows()), at_(a.cols()) {}

  std::size_t dim() const { return a_->rows() + a_->cols(); }
  const DenseMatrix& q() const { return q_; }
  const DenseMatrix& z() const { return z_; }
  double tau() const { return tau_; }
  const SparseMatrix& matrix() const { return *a_; }

  void apply(std::span<const double> x, std::span<double> y) const {
    const std::size_t m = a_->rows();
    const std::size_t n = a_->cols();
    std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m), ws_.begin());
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(m), x.end(), wt_.begin());
    project(q_, ws_);
    project(z_, wt_);
    a_->apply(wt_, as_);
    a_->apply_transpose(ws_, at_);
    for (std::size_t i = 0; i < m; ++i) as_[i] -= tau_ * ws_[i];
    for (std::size_t i = 0; i < n; ++i) at_[i] -= tau_ * wt_[i];
    project(q_, as_);
    project(z_, at_);
    std::copy(as_.begin(), as_.end(), y.begin());
    std::copy(at_.begin(), at_.end(), y.begin() + static_cast<std::ptrdiff_t>(m));
  }

  // Removes the Q/Z components from a stacked vector in place.
  void enforce_complement(std::span<double> x) const {
    const std::size_t m = a_->rows();
    project(q_, x.subspan(0, m));
    project(z_, x.subspan(m));
  }

 private:
  static void project(const DenseMatrix& b, std::span<double> w) {
    for (std::size_t j = 0; j < b.cols(); ++j) axpy(-dot(b.col(j), w), b.col(j), w);
  }

  const SparseMatrix* a_;
  double tau_;
  DenseMatrix q_, z_;
  mutable Vector ws_, wt_, as_, at_;
};

// Relative inner tolerance eta = min(c * eps_tilde, 0.01). The factor c
// estimates how far the expansion-space error may exceed the inner relative
// error: c = 2 sqrt(2) max |nu_i| / |nu_i + tau - theta| over the pencil
// values other than the selected one whose nu_i + tau is positive. A
// single-dimensional subspace, an empty eligible set, or a near-vanishing
// denominator all fall back to c = 1.
inline double inner_tolerance(const ExtractionResult& ex, double tau, double eps_tilde,
                              std::size_t m) {
  double c = 1.0;
  if (m > 1) {
    double best = 0.0;
    bool degenerate = false;
    for (std::size_t i = 0; i < ex.nu.size(); ++i) {
      if (i == ex.selected || !std::isfinite(ex.nu[i])) continue;
      if (ex.nu[i] + tau <= 0.0) continue;
      double den = std::abs(ex.nu[i] + tau - ex.theta);
      if (den < 1e-14) {
        degenerate = true;
        break;
      }
      best = std::max(best, std::abs(ex.nu[i]) / den);
    }
    if (!degenerate && best > 0.0) c = 2.0 * std::sqrt(2.0) * best;
  }
  return std::min(c * eps_tilde, 0.01);
}

struct InnerSolveReport {
  Vector s, t;             // correction, re-projected onto the complement
  double r_in = 0.0;       // final true relative residual
  double eta = 0.0;        // tolerance the solve ran with
  std::size_t iterations = 0;
  bool hit_cap = false;
};

// MINRES on the projected operator from the zero start vector. Stops when
// the true relative residual reaches eta or after max_inner steps. The
// Lanczos recurrence estimate triggers candidate stops; every stop and every
// 20th step recomputes the residual from the operator, so drift in the
// estimate cannot end the solve early.
inline InnerSolveReport minres_solve(const ProjectedOperator& op, const Vector& rhs,
                                     double eta, std::size_t max_inner) {
  const std::size_t n = op.dim();
  if (rhs.size() != n) throw std::invalid_argument("minres_solve: rhs size mismatch");
  const std::size_t m_rows = op.matrix().rows();

  InnerSolveReport rep;
  rep.eta = eta;

  Vector x(n, 0.0);
  const double beta1 = norm2(rhs);
  auto finish = [&](double r_in, std::size_t iters, bool cap) {
    op.enforce_complement(x);
    rep.s.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(m_rows));
    rep.t.assign(x.begin() + static_cast<std::ptrdiff_t>(m_rows), x.end());
    rep.r_in = r_in;
    rep.iterations = iters;
    rep.hit_cap = cap;
  };
  if (beta1 == 0.0) {
    finish(0.0, 0, false);
    return rep;
  }

  Vector v(rhs);
  scale(v, 1.0 / beta1);
  Vector v_prev(n, 0.0), p(n, 0.0);
  Vector w(n, 0.0), w1(n, 0.0), w2(n, 0.0);
  Vector scratch(n, 0.0);

  auto true_residual = [&]() {
    op.apply(x, scratch);
    double s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = rhs[i] - scratch[i];
      s2 += d * d;
    }
    return std::sqrt(s2) / beta1;
  };

  double beta = 0.0, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;
  double opnorm = 0.0;
  double recheck_floor = -1.0;

  // Best verified iterate so far.  When the target is below the attainable
  // floor the recurrence keeps running until the cap, and the long tail can
  // degrade the current iterate; the returned solution is the best one seen
  // at a verification point, not whatever the last step produced.
  double best_true = std::numeric_limits<double>::infinity();
  Vector best_x;

  std::size_t it = 0;
  while (it < max_inner) {
    ++it;
    op.apply(v, p);
    if (beta != 0.0) axpy(-beta, v_prev, p);
    double alfa = dot(v, p);
    axpy(-alfa, v, p);
    double beta_new = norm2(p);
    if (!std::isfinite(alfa) || !std::isfinite(beta_new))
      throw NumericFailure("minres_solve: non-finite Lanczos coefficients");
    opnorm = std::max(opnorm, std::abs(alfa) + beta + beta_new);

    double oldeps = epsln;
    double delta = cs * dbar + sn * alfa;
    double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta_new;
    dbar = -cs * beta_new;
    double gamma = std::sqrt(gbar * gbar + beta_new * beta_new);
    gamma = std::max(gamma, 1e-300);
    cs = gbar / gamma;
    sn = beta_new / gamma;
    double phi = cs * phibar;
    phibar = sn * phibar;
    if (!std::isfinite(phibar)) throw NumericFailure("minres_solve: non-finite residual");

    std::swap(w1, w2);
    std::swap(w2, w);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
    axpy(phi, w, x);

    bool breakdown = beta_new <= 1e-15 * opnorm;
    double estimate = phibar / beta1;
    bool candidate = estimate <= eta || it % 20 == 0 || breakdown || it == max_inner;
    if (candidate && (recheck_floor < 0.0 || estimate <= recheck_floor || it % 20 == 0 ||
                      breakdown || it == max_inner)) {
      double r_true = true_residual();
      if (r_true <= eta || breakdown) {
        finish(r_true, it, false);
        return rep;
      }
      recheck_floor = 0.25 * estimate;
      if (r_true < best_true) {
        best_true = r_true;
        best_x = x;
      }
    }

    std::swap(v_prev, v);
    std::swap(v, p);
    scale(v, 1.0 / beta_new);
    beta = beta_new;
  }

  double r_final = true_residual();
  if (best_true < r_final) {
    x = std::move(best_x);
    r_final = best_true;
  }
  finish(r_final, it, true);
  return rep;
}

}  // namespace jdsvd
