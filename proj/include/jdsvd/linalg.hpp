#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace jdsvd {

using Vector = std::vector<double>;

// Raised when a computation produced NaN/Inf or an iteration failed to
// converge within its hard cap.
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised on unreadable, unparsable, or unwritable files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

inline void scale(std::span<double> x, double a) {
  for (double& xi : x) xi *= a;
}

// y += a*x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vector concat(std::span<const double> a, std::span<const double> b) {
  Vector r(a.size() + b.size());
  std::copy(a.begin(), a.end(), r.begin());
  std::copy(b.begin(), b.end(), r.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return r;
}

inline bool all_finite(std::span<const double> x) {
  for (double xi : x)
    if (!std::isfinite(xi)) return false;
  return true;
}

// Dense column-major matrix. Appending a column is O(rows).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const {
    return {data_.data() + j * rows_, rows_};
  }

  void append_col(std::span<const double> v) {
    if (rows_ == 0) rows_ = v.size();
    if (v.size() != rows_) throw std::invalid_argument("append_col: size mismatch");
    data_.insert(data_.end(), v.begin(), v.end());
    ++cols_;
  }

  void set_col(std::size_t j, std::span<const double> v) {
    std::copy(v.begin(), v.end(), data_.begin() + static_cast<std::ptrdiff_t>(j * rows_));
  }

  bool empty() const { return cols_ == 0; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// y = A x
inline Vector mul(const DenseMatrix& a, std::span<const double> x) {
  Vector y(a.rows(), 0.0);
  for (std::size_t j = 0; j < a.cols(); ++j) axpy(x[j], a.col(j), y);
  return y;
}

// y = A^T x
inline Vector mul_t(const DenseMatrix& a, std::span<const double> x) {
  Vector y(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) y[j] = dot(a.col(j), x);
  return y;
}

inline DenseMatrix mul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("mul: shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    auto cj = c.col(j);
    for (std::size_t k = 0; k < a.cols(); ++k) axpy(b(k, j), a.col(k), cj);
  }
  return c;
}

// A^T B
inline DenseMatrix mul_at_b(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("mul_at_b: shape mismatch");
  DenseMatrix c(a.cols(), b.cols());
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t i = 0; i < a.cols(); ++i) c(i, j) = dot(a.col(i), b.col(j));
  return c;
}

inline DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (std::size_t i = 0; i < a.rows(); ++i) t(j, i) = a(i, j);
  return t;
}

inline DenseMatrix hcat(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.rows() != b.rows()) throw std::invalid_argument("hcat: row mismatch");
  DenseMatrix c(a.rows(), a.cols() + b.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) c.set_col(j, a.col(j));
  for (std::size_t j = 0; j < b.cols(); ++j) c.set_col(a.cols() + j, b.col(j));
  return c;
}

inline double frob_norm(const DenseMatrix& a) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (double v : a.col(j)) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const DenseMatrix& a) {
  double m = 0.0;
  for (std::size_t j = 0; j < a.cols(); ++j)
    for (double v : a.col(j)) m = std::max(m, std::abs(v));
  return m;
}

// Largest |B^T B - I| entry; 0 for an empty block.
inline double orthonormality_defect(const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t j = 0; j < b.cols(); ++j)
    for (std::size_t i = 0; i <= j; ++i) {
      double g = dot(b.col(i), b.col(j)) - (i == j ? 1.0 : 0.0);
      m = std::max(m, std::abs(g));
    }
  return m;
}

struct OrthoResult {
  Vector vector;        // unit length; empty when rejected
  double residual_norm; // norm of the projected v before normalization
  bool rejected;
};

// Projects v onto the orthogonal complement of the column spans of blocks,
// with one unconditional reorthogonalization pass, then normalizes.
// Rejects when the projected residual is at or below 1e-12 * ||v||: the
// input carries no usable new direction.
inline OrthoResult orthonormalize_against(std::span<const double> v,
                                          std::span<const DenseMatrix* const> blocks) {
  Vector w(v.begin(), v.end());
  const double vnorm = norm2(v);
  for (int pass = 0; pass < 2; ++pass) {
    for (const DenseMatrix* b : blocks) {
      if (b == nullptr || b->empty()) continue;
      for (std::size_t j = 0; j < b->cols(); ++j) {
        axpy(-dot(b->col(j), w), b->col(j), w);
      }
    }
  }
  OrthoResult res;
  res.residual_norm = norm2(w);
  res.rejected = res.residual_norm <= 1e-12 * vnorm;
  if (!res.rejected) {
    scale(w, 1.0 / res.residual_norm);
    res.vector = std::move(w);
  }
  return res;
}

inline OrthoResult orthonormalize_against(std::span<const double> v, const DenseMatrix& b) {
  const DenseMatrix* blocks[] = {&b};
  return orthonormalize_against(v, blocks);
}

// Orthonormal basis of the orthogonal complement of span(B), where B has
// orthonormal columns. Built from the trailing columns of the Householder
// QR factor of B, so the result is orthogonal to working precision.
inline DenseMatrix orthonormal_completion(const DenseMatrix& b) {
  const std::size_t n = b.rows();
  const std::size_t k = b.cols();
  if (k > n) throw std::invalid_argument("orthonormal_completion: too many columns");
  DenseMatrix r = b;
  std::vector<Vector> reflectors(k);
  for (std::size_t j = 0; j < k; ++j) {
    Vector w(n - j);
    for (std::size_t i = j; i < n; ++i) w[i - j] = r(i, j);
    double alpha = norm2(w);
    if (alpha == 0.0)
      throw std::invalid_argument("orthonormal_completion: rank deficient input");
    if (w[0] >= 0.0) alpha = -alpha;
    w[0] -= alpha;
    double wn = norm2(w);
    if (wn > 0.0) {
      scale(w, 1.0 / wn);
      for (std::size_t c = j; c < k; ++c) {
        double s = 0.0;
        for (std::size_t i = j; i < n; ++i) s += w[i - j] * r(i, c);
        for (std::size_t i = j; i < n; ++i) r(i, c) -= 2.0 * s * w[i - j];
      }
      reflectors[j] = std::move(w);
    }
  }
  DenseMatrix comp(n, n - k);
  Vector q(n);
  for (std::size_t c = k; c < n; ++c) {
    std::fill(q.begin(), q.end(), 0.0);
    q[c] = 1.0;
    for (std::size_t j = k; j-- > 0;) {
      const Vector& w = reflectors[j];
      if (w.empty()) continue;
      double s = 0.0;
      for (std::size_t i = j; i < n; ++i) s += w[i - j] * q[i];
      for (std::size_t i = j; i < n; ++i) q[i] -= 2.0 * s * w[i - j];
    }
    comp.set_col(c - k, q);
  }
  return comp;
}

inline Vector random_unit(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (int attempt = 0; attempt < 64; ++attempt) {
    for (double& vi : v) vi = gauss(rng);
    double nv = norm2(v);
    if (nv > 0.0) {
      scale(v, 1.0 / nv);
      return v;
    }
  }
  throw NumericFailure("random_unit: degenerate generator");
}

}  // namespace jdsvd
