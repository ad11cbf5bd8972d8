#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "jdsvd/dense_eig.hpp"
#include "test_util.hpp"

using jdsvd::DenseMatrix;
using jdsvd::Vector;

namespace {

// Extended-precision reference for the symmetric definite pencil: Cholesky
// reduction and cyclic Jacobi carried out entirely in long double. Used only
// as an oracle; shares no code with the library path.
std::vector<long double> pencil_eigs_ld(const DenseMatrix& f, const DenseMatrix& g) {
  const std::size_t n = f.rows();
  std::vector<std::vector<long double>> l(n, std::vector<long double>(n, 0.0L));
  for (std::size_t j = 0; j < n; ++j) {
    long double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l[j][k] * l[j][k];
    l[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      long double v = g(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= l[i][k] * l[j][k];
      l[i][j] = v / l[j][j];
    }
  }
  // E = L^-1 F L^-T
  std::vector<std::vector<long double>> e(n, std::vector<long double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<long double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = f(i, j);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) col[i] -= l[i][k] * col[k];
      col[i] /= l[i][i];
    }
    for (std::size_t i = 0; i < n; ++i) e[i][j] = col[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> row(n);
    for (std::size_t j = 0; j < n; ++j) row[j] = e[i][j];
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < j; ++k) row[j] -= l[j][k] * row[k];
      row[j] /= l[j][j];
    }
    for (std::size_t j = 0; j < n; ++j) e[i][j] = row[j];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) {
      long double v = 0.5L * (e[i][j] + e[j][i]);
      e[i][j] = e[j][i] = v;
    }
  // cyclic Jacobi on e
  for (int sweep = 0; sweep < 60; ++sweep) {
    long double off = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += e[i][j] * e[i][j];
    if (off < 1e-36L) break;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        long double apq = e[p][q];
        if (std::abs(apq) < 1e-40L) continue;
        long double tau = (e[q][q] - e[p][p]) / (2.0L * apq);
        long double t = tau >= 0.0L ? 1.0L / (tau + std::sqrt(1.0L + tau * tau))
                                    : 1.0L / (tau - std::sqrt(1.0L + tau * tau));
        long double c = 1.0L / std::sqrt(1.0L + t * t);
        long double s = t * c;
        long double app = e[p][p], aqq = e[q][q];
        e[p][p] = app - t * apq;
        e[q][q] = aqq + t * apq;
        e[p][q] = e[q][p] = 0.0L;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          long double ekp = e[k][p], ekq = e[k][q];
          e[k][p] = e[p][k] = c * ekp - s * ekq;
          e[k][q] = e[q][k] = s * ekp + c * ekq;
        }
      }
  }
  std::vector<long double> vals(n);
  for (std::size_t i = 0; i < n; ++i) vals[i] = e[i][i];
  std::sort(vals.begin(), vals.end());
  return vals;
}

}  // namespace

TEST(SymEig, DiagonalAndTwoByTwo) {
  DenseMatrix d(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = -1.0;
  d(2, 2) = 2.0;
  jdsvd::SymEig e = jdsvd::sym_eig(d);
  EXPECT_NEAR(e.values[0], -1.0, 1e-14);
  EXPECT_NEAR(e.values[1], 2.0, 1e-14);
  EXPECT_NEAR(e.values[2], 3.0, 1e-14);

  DenseMatrix t(2, 2);
  t(0, 0) = t(1, 1) = 2.0;
  t(0, 1) = t(1, 0) = 1.0;
  jdsvd::SymEig e2 = jdsvd::sym_eig(t);
  EXPECT_NEAR(e2.values[0], 1.0, 1e-14);
  EXPECT_NEAR(e2.values[1], 3.0, 1e-14);
  EXPECT_NEAR(std::abs(e2.vectors(0, 0) * e2.vectors(1, 0)), 0.5, 1e-13);
}

TEST(SymEig, RandomResidualAndOrthogonality) {
  std::mt19937_64 rng(201);
  DenseMatrix s = testutil::random_symmetric(40, rng);
  jdsvd::SymEig e = jdsvd::sym_eig(s);
  double norm = std::max(std::abs(e.values.front()), std::abs(e.values.back()));
  for (std::size_t j = 0; j + 1 < 40; ++j) EXPECT_LE(e.values[j], e.values[j + 1]);
  for (std::size_t j = 0; j < 40; ++j) {
    Vector sx = jdsvd::mul(s, e.vectors.col(j));
    jdsvd::axpy(-e.values[j], e.vectors.col(j), sx);
    EXPECT_LT(jdsvd::norm2(sx), 1e-12 * norm);
  }
  EXPECT_LT(jdsvd::orthonormality_defect(e.vectors), 1e-12);
}

TEST(SymEig, ZeroMatrix) {
  jdsvd::SymEig e = jdsvd::sym_eig(DenseMatrix(5, 5));
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, 0.0);
  EXPECT_LT(jdsvd::orthonormality_defect(e.vectors), 1e-14);
}

TEST(Cholesky, KnownFactorAndSemidefiniteDetection) {
  DenseMatrix g(2, 2);
  g(0, 0) = 4.0;
  g(0, 1) = g(1, 0) = 2.0;
  g(1, 1) = 5.0;
  DenseMatrix l;
  ASSERT_TRUE(jdsvd::cholesky(g, l));
  EXPECT_NEAR(l(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(l(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(l(1, 1), 2.0, 1e-15);

  DenseMatrix s(2, 2);  // rank one
  s(0, 0) = 1.0;
  s(0, 1) = s(1, 0) = 1.0;
  s(1, 1) = 1.0;
  EXPECT_FALSE(jdsvd::cholesky(s, l));
}

TEST(GenEig, IdentityGReducesToSymEig) {
  std::mt19937_64 rng(202);
  DenseMatrix f = testutil::random_symmetric(8, rng);
  auto pairs = jdsvd::sym_definite_gen_eig(f, DenseMatrix::identity(8));
  jdsvd::SymEig ref = jdsvd::sym_eig(f);
  ASSERT_EQ(pairs.size(), 8u);
  for (std::size_t i = 0; i + 1 < pairs.size(); ++i)
    EXPECT_GE(std::abs(pairs[i].mu), std::abs(pairs[i + 1].mu) - 1e-13);
  std::vector<double> got, want(ref.values.begin(), ref.values.end());
  for (const auto& p : pairs) got.push_back(p.mu);
  std::sort(got.begin(), got.end());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(GenEig, DiagonalPencil) {
  DenseMatrix f(3, 3), g(3, 3);
  f(0, 0) = 3.0;
  f(1, 1) = -5.0;
  f(2, 2) = 1.0;
  g(0, 0) = 1.0;
  g(1, 1) = 1.0;
  g(2, 2) = 4.0;
  auto pairs = jdsvd::sym_definite_gen_eig(f, g);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_NEAR(pairs[0].mu, -5.0, 1e-13);
  EXPECT_NEAR(pairs[1].mu, 3.0, 1e-13);
  EXPECT_NEAR(pairs[2].mu, 0.25, 1e-13);
}

TEST(GenEig, ResidualInvariantOnRandomPencils) {
  std::mt19937_64 rng(203);
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t n = 6 + 2 * trial;
    DenseMatrix f = testutil::random_symmetric(n, rng);
    DenseMatrix b = testutil::random_dense(n, n, rng);
    DenseMatrix g = jdsvd::mul_at_b(b, b);
    for (std::size_t i = 0; i < n; ++i) g(i, i) += 0.5;
    auto pairs = jdsvd::sym_definite_gen_eig(f, g);
    ASSERT_EQ(pairs.size(), n);
    double fn = testutil::spectral_norm(f);
    double gn = testutil::spectral_norm(g);
    for (const auto& pr : pairs) {
      Vector lhs = jdsvd::mul(f, pr.f);
      Vector rhs = jdsvd::mul(g, pr.f);
      jdsvd::axpy(-pr.mu, rhs, lhs);
      EXPECT_LT(jdsvd::norm2(lhs), 1e-10 * (fn + std::abs(pr.mu) * gn));
      EXPECT_NEAR(jdsvd::norm2(pr.f), 1.0, 1e-13);
    }
  }
}

TEST(GenEig, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(204);
  for (int trial = 0; trial < 6; ++trial) {
    std::size_t n = 4 + 2 * trial;
    DenseMatrix f = testutil::random_symmetric(n, rng);
    DenseMatrix b = testutil::random_dense(n, n, rng);
    DenseMatrix g = jdsvd::mul_at_b(b, b);
    for (std::size_t i = 0; i < n; ++i) g(i, i) += 1.0;
    auto pairs = jdsvd::sym_definite_gen_eig(f, g);
    std::vector<long double> ref = pencil_eigs_ld(f, g);
    std::vector<double> got;
    for (const auto& p : pairs) got.push_back(p.mu);
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got.size(), ref.size());
    double scale = std::max(std::abs(static_cast<double>(ref.front())),
                            std::abs(static_cast<double>(ref.back())));
    for (std::size_t i = 0; i < got.size(); ++i)
      EXPECT_NEAR(got[i], static_cast<double>(ref[i]), 1e-10 * std::max(1.0, scale));
  }
}

TEST(GenEig, EqualMagnitudeKeepsPositiveFirst) {
  DenseMatrix f(2, 2);
  f(0, 0) = -1.0;
  f(1, 1) = 1.0;
  auto pairs = jdsvd::sym_definite_gen_eig(f, DenseMatrix::identity(2));
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_DOUBLE_EQ(pairs[0].mu, 1.0);
  EXPECT_DOUBLE_EQ(pairs[1].mu, -1.0);
}

TEST(GenEig, SemidefiniteFallbackTruncates) {
  DenseMatrix f(3, 3), g(3, 3);
  f(0, 0) = 2.0;
  f(1, 1) = 5.0;
  f(2, 2) = 3.0;
  g(0, 0) = 1.0;
  g(1, 1) = 0.0;  // null direction
  g(2, 2) = 2.0;
  auto pairs = jdsvd::sym_definite_gen_eig(f, g);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_NEAR(pairs[0].mu, 2.0, 1e-12);
  EXPECT_NEAR(pairs[1].mu, 1.5, 1e-12);
}

TEST(GenEig, RejectsIndefiniteG) {
  DenseMatrix f = DenseMatrix::identity(2);
  DenseMatrix g(2, 2);
  g(0, 0) = 1.0;
  g(1, 1) = -1.0;
  EXPECT_THROW(jdsvd::sym_definite_gen_eig(f, g), std::invalid_argument);
}

TEST(DenseSvd, DiagonalValues) {
  DenseMatrix a(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = -2.0;  // singular value 2 with sign folded into vectors
  a(2, 2) = 3.0;
  jdsvd::Svd svd = jdsvd::dense_svd(a);
  EXPECT_NEAR(svd.sigma[0], 3.0, 1e-13);
  EXPECT_NEAR(svd.sigma[1], 2.0, 1e-13);
  EXPECT_NEAR(svd.sigma[2], 1.0, 1e-13);
}

TEST(DenseSvd, RankOneOuterProduct) {
  std::mt19937_64 rng(205);
  Vector u = jdsvd::random_unit(12, rng);
  Vector v = jdsvd::random_unit(7, rng);
  jdsvd::scale(u, 2.0);
  jdsvd::scale(v, 3.0);
  DenseMatrix a(12, 7);
  for (std::size_t j = 0; j < 7; ++j)
    for (std::size_t i = 0; i < 12; ++i) a(i, j) = u[i] * v[j];
  jdsvd::Svd svd = jdsvd::dense_svd(a);
  EXPECT_NEAR(svd.sigma[0], 6.0, 1e-12);
  for (std::size_t k = 1; k < svd.sigma.size(); ++k) EXPECT_NEAR(svd.sigma[k], 0.0, 1e-12);
  EXPECT_LT(jdsvd::orthonormality_defect(svd.u), 1e-12);
  EXPECT_LT(jdsvd::orthonormality_defect(svd.v), 1e-12);
}

namespace {

void check_svd_invariants(const DenseMatrix& a) {
  jdsvd::Svd svd = jdsvd::dense_svd(a);
  const std::size_t k = svd.sigma.size();
  ASSERT_EQ(k, std::min(a.rows(), a.cols()));
  double norm = svd.sigma[0];
  for (std::size_t i = 0; i + 1 < k; ++i) EXPECT_GE(svd.sigma[i], svd.sigma[i + 1]);
  EXPECT_LT(jdsvd::orthonormality_defect(svd.u), 1e-12);
  EXPECT_LT(jdsvd::orthonormality_defect(svd.v), 1e-12);
  for (std::size_t i = 0; i < k; ++i) {
    Vector av = jdsvd::mul(a, svd.v.col(i));
    jdsvd::axpy(-svd.sigma[i], svd.u.col(i), av);
    EXPECT_LT(jdsvd::norm2(av), 1e-12 * norm);
    Vector atu = jdsvd::mul_t(a, svd.u.col(i));
    jdsvd::axpy(-svd.sigma[i], svd.v.col(i), atu);
    EXPECT_LT(jdsvd::norm2(atu), 1e-12 * norm);
  }
  // reconstruction
  DenseMatrix rec(a.rows(), a.cols());
  for (std::size_t t = 0; t < k; ++t)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      double w = svd.sigma[t] * svd.v(j, t);
      for (std::size_t i = 0; i < a.rows(); ++i) rec(i, j) += svd.u(i, t) * w;
    }
  double err = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double d = rec(i, j) - a(i, j);
      err += d * d;
    }
  EXPECT_LT(std::sqrt(err), 1e-11 * norm);
}

}  // namespace

TEST(DenseSvd, RandomTallAndWide) {
  std::mt19937_64 rng(206);
  check_svd_invariants(testutil::random_dense(30, 20, rng));
  check_svd_invariants(testutil::random_dense(20, 30, rng));
  check_svd_invariants(testutil::random_dense(25, 25, rng));
}

TEST(DenseSvd, RefusesOversizeInput) {
  EXPECT_THROW(jdsvd::dense_svd(DenseMatrix(601, 10)), std::invalid_argument);
  EXPECT_THROW(jdsvd::dense_svd(DenseMatrix(10, 601)), std::invalid_argument);
}
