#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dgvae/error.hpp"

namespace dgvae {

// Dense row-major tensor of doubles. Most of the library works with rank-2
// tensors; a row vector is 1 x n and a column vector is n x 1.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    check_shape();
    data_.assign(count(shape_), fill);
  }

  DenseTensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    check_shape();
    if (data_.size() != count(shape_)) {
      throw ShapeError("DenseTensor: value count " + std::to_string(data_.size()) +
                       " does not match shape product " + std::to_string(count(shape_)));
    }
  }

  static DenseTensor zeros(std::size_t rows, std::size_t cols) { return DenseTensor({rows, cols}); }

  static DenseTensor filled(std::size_t rows, std::size_t cols, double v) {
    return DenseTensor({rows, cols}, v);
  }

  static DenseTensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> values;
    values.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("DenseTensor::from_rows: ragged rows");
      values.insert(values.end(), row.begin(), row.end());
    }
    return DenseTensor({r, c}, std::move(values));
  }

  static DenseTensor row_vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return DenseTensor({1, n}, std::move(values));
  }

  static DenseTensor scalar(double v) { return DenseTensor({1, 1}, v); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t rows() const {
    require_matrix();
    return shape_[0];
  }
  std::size_t cols() const {
    require_matrix();
    return shape_[1];
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * shape_[1], shape_[1]}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * shape_[1], shape_[1]};
  }

  double item() const {
    if (data_.size() != 1) throw ShapeError("DenseTensor::item on non-scalar tensor");
    return data_[0];
  }

  bool same_shape(const DenseTensor& o) const noexcept { return shape_ == o.shape_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << ']';
    return os.str();
  }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  void check_shape() const {
    for (auto e : shape_) {
      if (e == 0) throw ShapeError("DenseTensor: extents must be positive");
    }
  }

  void require_matrix() const {
    if (shape_.size() != 2) throw ShapeError("expected a rank-2 tensor, got " + shape_string());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct Triplet {
  std::uint32_t row;
  std::uint32_t col;
  double value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

// Compressed sparse row matrix. Entries inside a row are sorted by column,
// coordinates are unique and no explicit zeros are stored, so iterating
// rows in order yields the entries in lexicographic (row, col) order.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  // Duplicate coordinates are summed; resulting zeros are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t) {
    for (const auto& e : t) {
      if (e.row >= rows || e.col >= cols) {
        throw ShapeError("SparseMatrix: entry (" + std::to_string(e.row) + "," + std::to_string(e.col) +
                         ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
      }
    }
    std::stable_sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
      return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });
    SparseMatrix m(rows, cols);
    for (std::size_t i = 0; i < t.size();) {
      double v = t[i].value;
      std::size_t j = i + 1;
      while (j < t.size() && t[j].row == t[i].row && t[j].col == t[i].col) v += t[j++].value;
      if (v != 0.0) {
        m.col_idx_.push_back(t[i].col);
        m.values_.push_back(v);
        ++m.row_ptr_[t[i].row + 1];
      }
      i = j;
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
    return m;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), 1.0});
    return from_triplets(n, n, std::move(t));
  }

  static SparseMatrix from_dense(const DenseTensor& d) {
    std::vector<Triplet> t;
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c)
        if (d(r, c) != 0.0) t.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), d(r, c)});
    return from_triplets(d.rows(), d.cols(), std::move(t));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::size_t row_nnz(std::size_t r) const { return row_ptr_[r + 1] - row_ptr_[r]; }

  double at(std::size_t r, std::size_t c) const {
    auto cols = row_cols(r);
    auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(c));
    if (it == cols.end() || *it != c) return 0.0;
    return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p)
        out.push_back({static_cast<std::uint32_t>(r), col_idx_[p], values_[p]});
    return out;
  }

  DenseTensor to_dense() const {
    DenseTensor d = DenseTensor::zeros(rows_, cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) d(r, col_idx_[p]) = values_[p];
    return d;
  }

  // Dense copy of one row, length cols().
  std::vector<double> dense_row(std::size_t r) const {
    std::vector<double> out(cols_, 0.0);
    for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) out[col_idx_[p]] = values_[p];
    return out;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (const auto& e : triplets()) t.push_back({e.col, e.row, e.value});
    return from_triplets(cols_, rows_, std::move(t));
  }

  SparseMatrix scaled(double s) const {
    std::vector<Triplet> t = triplets();
    for (auto& e : t) e.value *= s;
    return from_triplets(rows_, cols_, std::move(t));
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> values_;
};

inline DenseTensor transpose(const DenseTensor& a) {
  DenseTensor t = DenseTensor::zeros(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// Dense-dense product with ascending-index sequential accumulation.
inline DenseTensor dense_matmul(const DenseTensor& a, const DenseTensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("dense_matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  DenseTensor out = DenseTensor::zeros(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(i, k);
      const double* br = b.row(k).data();
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

// out = s * x. Each output element accumulates its terms in ascending column
// order of s, which is the same order a dense ascending-k product would use
// (skipped terms are exact zeros), so the result equals the densified product
// bit for bit.
inline DenseTensor sparse_dense_matmul(const SparseMatrix& s, const DenseTensor& x) {
  if (s.cols() != x.rows()) {
    throw ShapeError("sparse_dense_matmul: sparse " + std::to_string(s.rows()) + "x" +
                     std::to_string(s.cols()) + " times " + x.shape_string());
  }
  DenseTensor out = DenseTensor::zeros(s.rows(), x.cols());
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto cols = s.row_cols(r);
    auto vals = s.row_values(r);
    double* o = out.row(r).data();
    for (std::size_t p = 0; p < cols.size(); ++p) {
      const double* xr = x.row(cols[p]).data();
      for (std::size_t j = 0; j < d; ++j) o[j] += vals[p] * xr[j];
    }
  }
  return out;
}

// out = x * s, accumulated in ascending row order of s for each output column.
inline DenseTensor dense_sparse_matmul(const DenseTensor& x, const SparseMatrix& s) {
  if (x.cols() != s.rows()) {
    throw ShapeError("dense_sparse_matmul: " + x.shape_string() + " times sparse " +
                     std::to_string(s.rows()) + "x" + std::to_string(s.cols()));
  }
  DenseTensor out = DenseTensor::zeros(x.rows(), s.cols());
  for (std::size_t b = 0; b < x.rows(); ++b) {
    double* o = out.row(b).data();
    for (std::size_t r = 0; r < s.rows(); ++r) {
      const double xv = x(b, r);
      if (xv == 0.0) continue;
      auto cols = s.row_cols(r);
      auto vals = s.row_values(r);
      for (std::size_t p = 0; p < cols.size(); ++p) o[cols[p]] += xv * vals[p];
    }
  }
  return out;
}

}  // namespace dgvae
