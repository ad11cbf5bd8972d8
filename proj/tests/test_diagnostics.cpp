#include <gtest/gtest.h>

#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "jdsvd/correction.hpp"
#include "jdsvd/diagnostics.hpp"
#include "test_util.hpp"

namespace {

using jdsvd::DenseMatrix;
using jdsvd::SparseMatrix;
using jdsvd::Vector;

Vector unit2(double x, double y) {
  double n = std::hypot(x, y);
  return {x / n, y / n};
}

Vector normalized_perp(const DenseMatrix& basis, const Vector& x) {
  Vector p = jdsvd::perp_component(basis, x);
  double n = jdsvd::norm2(p);
  if (n == 0.0) throw std::logic_error("normalized_perp: degenerate draw");
  jdsvd::scale(p, 1.0 / n);
  return p;
}

SparseMatrix diag_sparse(const Vector& d, std::size_t rows, std::size_t cols) {
  std::vector<SparseMatrix::Entry> entries;
  for (std::size_t i = 0; i < d.size(); ++i) entries.push_back({i, i, d[i]});
  return SparseMatrix(rows, cols, entries);
}

}  // namespace

TEST(DeskWorkspace, BuildsOracleAndRefusesBadInputs) {
  std::mt19937_64 rng(71);
  SparseMatrix a = testutil::random_sparse(10, 8, 0.6, rng);
  jdsvd::DeskWorkspace ws = jdsvd::make_desk_workspace(a, 0.9);
  EXPECT_EQ(ws.rows(), 10u);
  EXPECT_EQ(ws.cols(), 8u);
  EXPECT_EQ(ws.oracle.sigma.size(), 8u);
  EXPECT_GT(ws.a_norm2, 0.0);
  EXPECT_DOUBLE_EQ(ws.a_norm2, ws.oracle.sigma[0]);
  EXPECT_EQ(ws.shifted_eig.values.size(), 18u);

  SparseMatrix tall(601, 4, {{0, 0, 1.0}});
  EXPECT_THROW(jdsvd::make_desk_workspace(tall, 0.5), std::invalid_argument);

  SparseMatrix exact = diag_sparse({1.0, 2.0}, 2, 2);
  EXPECT_THROW(jdsvd::make_desk_workspace(exact, 1.0), jdsvd::NumericFailure);
}

TEST(PerpComponent, TwoPassProjectionIsAccurate) {
  std::mt19937_64 rng(72);
  DenseMatrix basis = testutil::random_orthonormal(30, 6, rng);
  Vector x = jdsvd::random_unit(30, rng);
  Vector p = jdsvd::perp_component(basis, x);
  for (std::size_t j = 0; j < basis.cols(); ++j)
    EXPECT_NEAR(jdsvd::dot(basis.col(j), p), 0.0, 1e-14);
  Vector empty_case = jdsvd::perp_component(DenseMatrix(), x);
  EXPECT_NEAR(jdsvd::norm2(empty_case), 1.0, 1e-14);
}

TEST(ExactCorrection, HandCaseDiagonalTwoByTwo) {
  SparseMatrix a = diag_sparse({1.0, 2.0}, 2, 2);
  jdsvd::DeskWorkspace ws = jdsvd::make_desk_workspace(a, 1.3);
  Vector u = unit2(1.0, 1.0);
  Vector v = u;
  jdsvd::ExactCorrection ec =
      jdsvd::exact_correction_solution(ws, 1.5, u, v, DenseMatrix(), DenseMatrix());

  double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(ec.s[0], 2.5 * inv_sqrt2, 1e-12);
  EXPECT_NEAR(ec.s[1], -2.5 * inv_sqrt2, 1e-12);
  EXPECT_NEAR(ec.t[0], 2.5 * inv_sqrt2, 1e-12);
  EXPECT_NEAR(ec.t[1], -2.5 * inv_sqrt2, 1e-12);
  EXPECT_NEAR(ec.st_norm, 2.5 * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(ec.alpha_excess, -1.25, 1e-12);
  EXPECT_NEAR(ec.beta_excess, -1.25, 1e-12);
  EXPECT_NEAR(ec.alpha, -1.05, 1e-12);
  EXPECT_NEAR(ec.beta, -1.05, 1e-12);
  EXPECT_NEAR(ec.kappa_restricted, 14.0, 1e-9);
  EXPECT_LE(ec.solve_residual_rel, 1e-10);
  EXPECT_LE(ec.fixedpoint_gap, 1e-8);
}

TEST(ExactCorrection, MatchesTightInnerSolve) {
  std::mt19937_64 rng(73);
  Vector sigma;
  for (int i = 0; i < 12; ++i) sigma.push_back(0.5 + 0.2 * i);
  testutil::SyntheticProblem prob = testutil::synthetic_problem(16, 12, sigma, rng);
  const double tau = 1.11;
  jdsvd::DeskWorkspace ws = jdsvd::make_desk_workspace(prob.a, tau);

  Vector u = jdsvd::random_unit(16, rng);
  Vector v = jdsvd::random_unit(12, rng);
  double theta = jdsvd::dot(u, prob.a.apply(v));
  jdsvd::ExactCorrection ec =
      jdsvd::exact_correction_solution(ws, theta, u, v, DenseMatrix(), DenseMatrix());
  EXPECT_LE(ec.solve_residual_rel, 1e-10);
  EXPECT_LE(ec.fixedpoint_gap, 1e-8);

  DenseMatrix q;
  q.append_col(u);
  DenseMatrix z;
  z.append_col(v);
  jdsvd::ProjectedOperator op(prob.a, tau, q, z);
  auto [res, resnorm] = jdsvd::residual(prob.a, theta, u, v);
  Vector rhs(res);
  for (double& x : rhs) x = -x;
  jdsvd::InnerSolveReport rep = jdsvd::minres_solve(op, rhs, 1e-13, 4 * (16 + 12));
  ASSERT_FALSE(rep.hit_cap);

  Vector ds(rep.s);
  jdsvd::axpy(-1.0, ec.s, ds);
  Vector dt(rep.t);
  jdsvd::axpy(-1.0, ec.t, dt);
  double err = std::sqrt(jdsvd::dot(ds, ds) + jdsvd::dot(dt, dt)) / ec.st_norm;
  EXPECT_LE(err, 1e-8);
}

TEST(ExactCorrection, DeflatedSystemMatchesInnerSolve) {
  std::mt19937_64 rng(74);
  Vector sigma;
  for (int i = 0; i < 10; ++i) sigma.push_back(0.4 + 0.25 * i);
  testutil::SyntheticProblem prob = testutil::synthetic_problem(14, 10, sigma, rng);
  const double tau = 1.07;
  jdsvd::DeskWorkspace ws = jdsvd::make_desk_workspace(prob.a, tau);

  DenseMatrix uc;
  uc.append_col(ws.oracle.u.col(0));
  DenseMatrix vc;
  vc.append_col(ws.oracle.v.col(0));

  Vector u = normalized_perp(uc, jdsvd::random_unit(14, rng));
  Vector v = normalized_perp(vc, jdsvd::random_unit(10, rng));
  double theta = jdsvd::dot(u, prob.a.apply(v));
  jdsvd::ExactCorrection ec = jdsvd::exact_correction_solution(ws, theta, u, v, uc, vc);
  EXPECT_LE(ec.solve_residual_rel, 1e-10);

  DenseMatrix q = uc;
  q.append_col(u);
  DenseMatrix z = vc;
  z.append_col(v);
  jdsvd::ProjectedOperator op(prob.a, tau, q, z);
  auto [res, resnorm] = jdsvd::residual(prob.a, theta, u, v);
  jdsvd::DeflationSet locked{{ws.oracle.sigma[0]}, uc, vc};
  Vector rhs = jdsvd::projected_residual(res, locked, 14, 10);
  for (double& x : rhs) x = -x;
  jdsvd::InnerSolveReport rep = jdsvd::minres_solve(op, rhs, 1e-13, 4 * (14 + 10));
  ASSERT_FALSE(rep.hit_cap);

  Vector ds(rep.s);
  jdsvd::axpy(-1.0, ec.s, ds);
  Vector dt(rep.t);
  jdsvd::axpy(-1.0, ec.t, dt);
  double err = std::sqrt(jdsvd::dot(ds, ds) + jdsvd::dot(dt, dt)) / ec.st_norm;
  EXPECT_LE(err, 1e-8);

  for (std::size_t j = 0; j < 1; ++j) {
    EXPECT_NEAR(jdsvd::dot(uc.col(j), ec.s), 0.0, 1e-12);
    EXPECT_NEAR(jdsvd::dot(vc.col(j), ec.t), 0.0, 1e-12);
  }
}

TEST(ExpansionErrors, EqualSideErrorsCollapseToSameValue) {
  std::mt19937_64 rng(75);
  const std::size_t m = 11, n = 9;
  DenseMatrix ub = testutil::random_orthonormal(m, 3, rng);
  DenseMatrix vb = testutil::random_orthonormal(n, 3, rng);
  Vector s = jdsvd::random_unit(m, rng);
  Vector t = jdsvd::random_unit(n, rng);
  jdsvd::scale(s, 1.7);
  jdsvd::scale(t, 0.6);

  const double x = 3e-4;
  Vector wu = normalized_perp(ub, jdsvd::random_unit(m, rng));
  Vector wv = normalized_perp(vb, jdsvd::random_unit(n, rng));
  double ns = jdsvd::norm2(jdsvd::perp_component(ub, s));
  double nt = jdsvd::norm2(jdsvd::perp_component(vb, t));
  Vector s_tilde(s);
  jdsvd::axpy(x * ns, wu, s_tilde);
  Vector t_tilde(t);
  jdsvd::axpy(x * nt, wv, t_tilde);

  jdsvd::ExpansionErrors err =
      jdsvd::expansion_error_metrics(s, t, s_tilde, t_tilde, ub, vb);
  ASSERT_TRUE(err.defined);
  ASSERT_TRUE(err.sides_defined);
  EXPECT_NEAR(err.eps_s, x, 1e-12);
  EXPECT_NEAR(err.eps_t, x, 1e-12);
  EXPECT_NEAR(err.eps_tilde, x, 1e-12);
  EXPECT_NEAR(err.eps_hat, x, 1e-12);
  EXPECT_GT(err.eps, 0.0);
  EXPECT_NEAR(err.gh_norm, 1.0, 1e-12);
}

TEST(ExpansionErrors, ProjectedMaxDominatesOnRandomDraws) {
  std::mt19937_64 rng(76);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 9, n = 7;
    DenseMatrix ub = testutil::random_orthonormal(m, 4, rng);
    DenseMatrix vb = testutil::random_orthonormal(n, 3, rng);
    Vector s = jdsvd::random_unit(m, rng);
    Vector t = jdsvd::random_unit(n, rng);
    Vector s_tilde(s), t_tilde(t);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (double& y : s_tilde) y += noise(rng);
    for (double& y : t_tilde) y += noise(rng);

    jdsvd::ExpansionErrors err =
        jdsvd::expansion_error_metrics(s, t, s_tilde, t_tilde, ub, vb);
    ASSERT_TRUE(err.defined);
    if (!err.sides_defined) continue;
    EXPECT_LE(err.eps_hat, err.eps_tilde + 1e-12);
    EXPECT_NEAR(err.gh_norm, 1.0, 1e-12);
  }
}

TEST(ExpansionErrors, ZeroExactSolutionIsUndefined) {
  DenseMatrix ub(4, 0), vb(3, 0);
  Vector s(4, 0.0), t(3, 0.0);
  jdsvd::ExpansionErrors err = jdsvd::expansion_error_metrics(s, t, s, t, ub, vb);
  EXPECT_FALSE(err.defined);
  EXPECT_FALSE(err.sides_defined);
}

TEST(ExpansionIdentities, HandGeometryWithUnitAngles) {
  DenseMatrix ub(3, 1);
  ub(0, 0) = 1.0;  // span{e1}
  DenseMatrix vb = ub;
  Vector u_star = {0.0, 1.0, 0.0};
  Vector u_plus = {0.0, 0.0, 1.0};
  Vector u_tilde = {0.0, 0.1, 1.0};
  jdsvd::scale(u_tilde, 1.0 / jdsvd::norm2(u_tilde));

  jdsvd::ExpansionAngles angles;
  std::vector<jdsvd::VerificationRow> rows = jdsvd::subspace_expansion_identities(
      ub, vb, u_plus, u_plus, u_tilde, u_tilde, u_star, u_star, 0.3, 0.3, &angles);
  ASSERT_EQ(rows.size(), 6u);
  for (const jdsvd::VerificationRow& row : rows) EXPECT_TRUE(row.pass) << row.name;

  EXPECT_TRUE(angles.u_defined);
  EXPECT_NEAR(angles.sin_u_span, 1.0, 1e-14);
  EXPECT_NEAR(angles.sin_uplus_perp, 1.0, 1e-14);
  EXPECT_NEAR(angles.sin_uexp, 1.0, 1e-14);
  EXPECT_NEAR(angles.sin_uexp_tilde, 10.0 / std::sqrt(101.0), 1e-12);
  EXPECT_NEAR(angles.sin_uplus_tilde_perp, 10.0 / std::sqrt(101.0), 1e-12);
  EXPECT_NEAR(angles.tau_s, 0.6, 1e-14);
  EXPECT_TRUE(rows[2].hypothesis_met);  // bracket row on the u side
}

TEST(ExpansionIdentities, RandomConfigurationsSatisfyIdentities) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 14;
    DenseMatrix basis = testutil::random_orthonormal(n, 4, rng);
    Vector star = jdsvd::random_unit(n, rng);
    Vector plus = normalized_perp(basis, jdsvd::random_unit(n, rng));
    std::uniform_real_distribution<double> epsd(1e-4, 0.4);
    double eps_side = epsd(rng);
    // inexact direction consistent with the declared relative error: the
    // projected exact vector is `plus` (unit norm), so an added complement
    // perturbation of norm eps_side realizes exactly that error level
    Vector err = normalized_perp(basis, jdsvd::random_unit(n, rng));
    Vector tilde(plus);
    jdsvd::axpy(eps_side, err, tilde);
    jdsvd::scale(tilde, 1.0 / jdsvd::norm2(tilde));

    jdsvd::ExpansionAngles angles;
    std::vector<jdsvd::VerificationRow> rows = jdsvd::subspace_expansion_identities(
        basis, basis, plus, plus, tilde, tilde, star, star, eps_side, eps_side, &angles);
    for (const jdsvd::VerificationRow& row : rows) {
      if (row.hypothesis_met) EXPECT_TRUE(row.pass) << row.name << " trial " << trial;
    }
    EXPECT_GE(angles.sin_uexp, 0.0);
    EXPECT_LE(angles.sin_uexp, 1.0 + 1e-12);
    EXPECT_LE(angles.sin_uplus_perp, 1.0 + 1e-12);
  }
}

TEST(KappaFormula, HandValuesAndEdgeCases) {
  Vector sigma = {1.0, 2.0, 3.0};
  EXPECT_NEAR(jdsvd::kappa_b_prime(sigma, 1.9, 0), 4.9 / 0.9, 1e-12);
  EXPECT_NEAR(jdsvd::kappa_b_prime(sigma, 1.9, 1), 4.9 / 1.1, 1e-12);

  Vector repeated = {2.0, 2.0, 1.0};
  EXPECT_TRUE(std::isinf(jdsvd::kappa_b_prime(repeated, 2.0, 0)));

  Vector two = {1.0, 2.0};
  EXPECT_THROW(jdsvd::kappa_b_prime(two, 1.5, 1), std::invalid_argument);
}

namespace {

jdsvd::SolverConfig small_verify_config(jdsvd::Variant variant, std::size_t num) {
  jdsvd::SolverConfig cfg;
  cfg.tau = 1.62;
  cfg.num_triplets = num;
  cfg.variant = variant;
  cfg.eps_tilde = 1e-3;
  cfg.max_dim = 10;
  cfg.restart_keep = 3;
  cfg.seed = 4242;
  return cfg;
}

testutil::SyntheticProblem small_verify_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Vector sigma;
  for (int i = 0; i < 12; ++i) sigma.push_back(0.5 + 0.2 * i);
  return testutil::synthetic_problem(24, 18, sigma, rng);
}

}  // namespace

TEST(VerifyRun, CleanOnSmallSyntheticBothVariants) {
  for (jdsvd::Variant variant :
       {jdsvd::Variant::Harmonic, jdsvd::Variant::RefinedHarmonic}) {
    testutil::SyntheticProblem prob = small_verify_problem(78);
    jdsvd::VerifyResult vr =
        jdsvd::verify_run(prob.a, small_verify_config(variant, 1));
    ASSERT_TRUE(vr.solve.converged);
    ASSERT_FALSE(vr.records.empty());

    std::optional<jdsvd::HardFailure> failure = jdsvd::first_hard_failure(vr.records);
    EXPECT_FALSE(failure.has_value())
        << (failure ? failure->name : "") << " at outer "
        << (failure ? failure->outer : 0);

    for (const jdsvd::DiagnosticsRecord& rec : vr.records) {
      EXPECT_EQ(rec.rows.size(), 22u);
      EXPECT_GT(rec.sigma_star, 0.0);
      EXPECT_GE(rec.sin_max, 0.0);
      EXPECT_LE(rec.sin_max, 1.0 + 1e-12);
      if (rec.err.defined && rec.err.eps > 0.0)
        EXPECT_NEAR(rec.err.gh_norm, 1.0, 1e-12);
      EXPECT_LE(rec.exact.solve_residual_rel, 1e-10);
    }
    EXPECT_EQ(jdsvd::collect_rows(vr.records).size(), 22u * vr.records.size());
  }
}

TEST(VerifyRun, DeflatedSecondTripletStaysClean) {
  testutil::SyntheticProblem prob = small_verify_problem(79);
  jdsvd::VerifyResult vr =
      jdsvd::verify_run(prob.a, small_verify_config(jdsvd::Variant::RefinedHarmonic, 2));
  ASSERT_TRUE(vr.solve.converged);

  bool saw_second = false;
  for (const jdsvd::DiagnosticsRecord& rec : vr.records)
    if (rec.triplet == 2) saw_second = true;
  EXPECT_TRUE(saw_second);

  std::optional<jdsvd::HardFailure> failure = jdsvd::first_hard_failure(vr.records);
  EXPECT_FALSE(failure.has_value())
      << (failure ? failure->name : "") << " at outer " << (failure ? failure->outer : 0);
}

TEST(VerifyRun, DeltaApproachesOneNearConvergence) {
  testutil::SyntheticProblem prob = small_verify_problem(80);
  jdsvd::VerifyResult vr =
      jdsvd::verify_run(prob.a, small_verify_config(jdsvd::Variant::RefinedHarmonic, 1));
  ASSERT_TRUE(vr.solve.converged);

  bool saw_tight = false;
  for (const jdsvd::DiagnosticsRecord& rec : vr.records) {
    if (rec.delta_defined && rec.sin_max < 0.02) {
      saw_tight = true;
      EXPECT_LE(std::abs(rec.delta - 1.0), 0.3) << "outer " << rec.outer;
    }
  }
  EXPECT_TRUE(saw_tight);
}
