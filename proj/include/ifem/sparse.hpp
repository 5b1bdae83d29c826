#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "ifem/errors.hpp"

namespace ifem {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Coordinate-form accumulator; duplicates are summed on compression.
class TripletList {
public:
  TripletList(int rows, int cols) : rows_(rows), cols_(cols) {}

  void add(int i, int j, double v) { entries_.push_back({i, j, v}); }
  void reserve(std::size_t n) { entries_.reserve(n); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const std::vector<Triplet>& entries() const { return entries_; }

private:
  int rows_, cols_;
  std::vector<Triplet> entries_;
};

/// Compressed sparse row matrix with sorted column indices. Structural zeros are kept, so the
/// pattern reflects the assembly graph and not the current values.
class SparseMatrix {
public:
  SparseMatrix() = default;

  explicit SparseMatrix(const TripletList& t) : rows_(t.rows()), cols_(t.cols()) {
    const auto& e = t.entries();
    for (const auto& x : e)
      if (x.row < 0 || x.row >= rows_ || x.col < 0 || x.col >= cols_)
        throw Error("triplet index out of range");
    std::vector<int> order(e.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return e[a].row != e[b].row ? e[a].row < e[b].row : e[a].col < e[b].col;
    });
    row_ptr_.assign(rows_ + 1, 0);
    for (std::size_t n = 0; n < order.size();) {
      const auto& first = e[order[n]];
      double sum = 0.0;
      std::size_t m = n;
      for (; m < order.size() && e[order[m]].row == first.row && e[order[m]].col == first.col; ++m)
        sum += e[order[m]].value;
      col_.push_back(first.col);
      val_.push_back(sum);
      ++row_ptr_[first.row + 1];
      n = m;
    }
    std::partial_sum(row_ptr_.begin(), row_ptr_.end(), row_ptr_.begin());
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t nnz() const { return val_.size(); }

  std::span<const int> row_cols(int i) const {
    return {col_.data() + row_ptr_[i], col_.data() + row_ptr_[i + 1]};
  }
  std::span<const double> row_values(int i) const {
    return {val_.data() + row_ptr_[i], val_.data() + row_ptr_[i + 1]};
  }
  std::span<double> row_values(int i) { return {val_.data() + row_ptr_[i], val_.data() + row_ptr_[i + 1]}; }

  /// Pointer to the stored entry, or nullptr when (i, j) is not in the pattern.
  const double* find(int i, int j) const {
    const auto cols = row_cols(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return nullptr;
    return val_.data() + row_ptr_[i] + (it - cols.begin());
  }
  double* find(int i, int j) { return const_cast<double*>(std::as_const(*this).find(i, j)); }

  bool has_entry(int i, int j) const { return find(i, j) != nullptr; }
  double at(int i, int j) const {
    const double* p = find(i, j);
    return p ? *p : 0.0;
  }

  /// y = A x
  void multiply(std::span<const double> x, std::span<double> y) const {
    for (int i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += val_[k] * x[col_[k]];
      y[i] = s;
    }
  }

  std::vector<double> operator*(std::span<const double> x) const {
    std::vector<double> y(rows_);
    multiply(x, y);
    return y;
  }

  /// y += A^T x
  void multiply_transpose_add(std::span<const double> x, std::span<double> y) const {
    for (int i = 0; i < rows_; ++i)
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) y[col_[k]] += val_[k] * x[i];
  }

  SparseMatrix transpose() const {
    TripletList t(cols_, rows_);
    t.reserve(nnz());
    for (int i = 0; i < rows_; ++i)
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.add(col_[k], i, val_[k]);
    return SparseMatrix(t);
  }

  /// max |A_ij - A_ji| over the stored pattern.
  double max_asymmetry() const {
    double d = 0.0;
    for (int i = 0; i < rows_; ++i)
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        d = std::max(d, std::abs(val_[k] - at(col_[k], i)));
    return d;
  }

  std::vector<double> diagonal() const {
    std::vector<double> d(std::min(rows_, cols_), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(static_cast<int>(i), static_cast<int>(i));
    return d;
  }

  template <class F>
  void for_each(F&& f) const {
    for (int i = 0; i < rows_; ++i)
      for (int k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) f(i, col_[k], val_[k]);
  }

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<int> row_ptr_{0};
  std::vector<int> col_;
  std::vector<double> val_;
};

}  // namespace ifem
