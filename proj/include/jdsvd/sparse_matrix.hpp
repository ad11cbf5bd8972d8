#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "jdsvd/linalg.hpp"

namespace jdsvd {

// Sparse rectangular matrix stored in both CSR and CSC so that products with
// the matrix and with its transpose each stream one contiguous layout.
// Duplicate entries in the input are summed during assembly.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;

  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Entry> entries)
      : rows_(rows), cols_(cols) {
    for (const Entry& e : entries) {
      if (e.row >= rows_ || e.col >= cols_)
        throw std::out_of_range("SparseMatrix: entry index out of bounds");
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::vector<Entry> merged;
    merged.reserve(entries.size());
    for (const Entry& e : entries) {
      if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
        merged.back().value += e.value;
      else
        merged.push_back(e);
    }

    row_ptr_.assign(rows_ + 1, 0);
    csr_col_.resize(merged.size());
    csr_val_.resize(merged.size());
    for (const Entry& e : merged) ++row_ptr_[e.row + 1];
    for (std::size_t i = 0; i < rows_; ++i) row_ptr_[i + 1] += row_ptr_[i];
    for (std::size_t i = 0; i < merged.size(); ++i) {
      csr_col_[i] = merged[i].col;
      csr_val_[i] = merged[i].value;
    }

    col_ptr_.assign(cols_ + 1, 0);
    csc_row_.resize(merged.size());
    csc_val_.resize(merged.size());
    for (const Entry& e : merged) ++col_ptr_[e.col + 1];
    for (std::size_t j = 0; j < cols_; ++j) col_ptr_[j + 1] += col_ptr_[j];
    std::vector<std::size_t> next(col_ptr_.begin(), col_ptr_.end() - 1);
    for (const Entry& e : merged) {
      std::size_t slot = next[e.col]++;
      csc_row_[slot] = e.row;
      csc_val_[slot] = e.value;
    }

    one_norm_ = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      double s = 0.0;
      for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
        s += std::abs(csc_val_[p]);
      one_norm_ = std::max(one_norm_, s);
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return csr_val_.size(); }

  // Largest absolute column sum.
  double one_norm() const { return one_norm_; }

  // y = A x
  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        s += csr_val_[p] * x[csr_col_[p]];
      y[i] = s;
    }
  }

  // y = A^T x
  void apply_transpose(std::span<const double> x, std::span<double> y) const {
    for (std::size_t j = 0; j < cols_; ++j) {
      double s = 0.0;
      for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
        s += csc_val_[p] * x[csc_row_[p]];
      y[j] = s;
    }
  }

  Vector apply(std::span<const double> x) const {
    Vector y(rows_);
    apply(x, y);
    return y;
  }

  Vector apply_transpose(std::span<const double> x) const {
    Vector y(cols_);
    apply_transpose(x, y);
    return y;
  }

  DenseMatrix to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
        d(i, csr_col_[p]) += csr_val_[p];
    return d;
  }

  static SparseMatrix from_dense(const DenseMatrix& d) {
    std::vector<Entry> entries;
    for (std::size_t j = 0; j < d.cols(); ++j)
      for (std::size_t i = 0; i < d.rows(); ++i)
        if (d(i, j) != 0.0) entries.push_back({i, j, d(i, j)});
    return SparseMatrix(d.rows(), d.cols(), std::move(entries));
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  double one_norm_ = 0.0;
  std::vector<std::size_t> row_ptr_, csr_col_;
  std::vector<double> csr_val_;
  std::vector<std::size_t> col_ptr_, csc_row_;
  std::vector<double> csc_val_;
};

}  // namespace jdsvd
