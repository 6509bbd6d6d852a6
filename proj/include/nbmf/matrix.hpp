#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nbmf/errors.hpp"

namespace nbmf {

/// Binary vector stored one value per byte; every entry is 0 or 1.
using BitVector = std::vector<std::uint8_t>;

namespace detail {

inline void require_positive_shape(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) {
    throw DimensionError("matrix dimensions must be positive, got " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline std::string shape_str(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols) {
    detail::require_positive_shape(rows, cols);
    data_.assign(rows * cols, fill);
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_positive_shape(rows, cols);
    if (data_.size() != rows * cols) {
      throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                           " does not match shape " +
                           detail::shape_str(rows, cols));
    }
  }

  static Matrix identity(std::size_t size) {
    Matrix m(size, size);
    for (std::size_t i = 0; i < size; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  double at(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) {
      throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) +
                       ") outside " + detail::shape_str(rows_, cols_));
    }
    return (*this)(r, c);
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  /// Copy of column `c` (columns are strided in row-major storage).
  std::vector<double> column(std::size_t c) const {
    if (c >= cols_) throw IndexError("column " + std::to_string(c) + " out of range");
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_column(std::size_t c, std::span<const double> values) {
    if (c >= cols_) throw IndexError("column " + std::to_string(c) + " out of range");
    if (values.size() != rows_) throw DimensionError("column length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const noexcept {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  bool all_nonnegative() const noexcept {
    for (double x : data_)
      if (!(x >= 0.0)) return false;
    return true;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

/// Dense row-major 0/1 matrix. Construction rejects any other value.
class BinaryMatrix {
 public:
  BinaryMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols) {
    detail::require_positive_shape(rows, cols);
    data_.assign(rows * cols, 0);
  }

  BinaryMatrix(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    detail::require_positive_shape(rows, cols);
    if (data_.size() != rows * cols) {
      throw DimensionError("binary matrix data length does not match shape " +
                           detail::shape_str(rows, cols));
    }
    for (auto b : data_)
      if (b > 1) throw DataError("binary matrix element outside {0,1}");
  }

  /// Converts a real matrix whose elements are exactly 0.0 or 1.0.
  static BinaryMatrix from_real(const Matrix& m) {
    std::vector<std::uint8_t> bits(m.size());
    auto src = m.data();
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (src[i] == 0.0) {
        bits[i] = 0;
      } else if (src[i] == 1.0) {
        bits[i] = 1;
      } else {
        throw DataError("binary matrix element outside {0,1}: " +
                        std::to_string(src[i]));
      }
    }
    return {m.rows(), m.cols(), std::move(bits)};
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  void set(std::size_t r, std::size_t c, bool value) {
    if (r >= rows_ || c >= cols_) throw IndexError("binary matrix index out of range");
    data_[r * cols_ + c] = value ? 1 : 0;
  }

  BitVector column(std::size_t c) const {
    if (c >= cols_) throw IndexError("column " + std::to_string(c) + " out of range");
    BitVector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_column(std::size_t c, std::span<const std::uint8_t> bits) {
    if (c >= cols_) throw IndexError("column " + std::to_string(c) + " out of range");
    if (bits.size() != rows_) throw DimensionError("column length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) {
      if (bits[r] > 1) throw DataError("binary column element outside {0,1}");
      data_[r * cols_ + c] = bits[r];
    }
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }

  Matrix to_real() const {
    std::vector<double> d(data_.begin(), data_.end());
    return {rows_, cols_, std::move(d)};
  }

  friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> data_;
};

inline double squared_frobenius_distance(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("frobenius_distance: shapes " +
                         detail::shape_str(a.rows(), a.cols()) + " and " +
                         detail::shape_str(b.rows(), b.cols()) + " differ");
  }
  double sum = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum;
}

/// sqrt(sum_ij (A_ij - B_ij)^2).
inline double frobenius_distance(const Matrix& a, const Matrix& b) {
  return std::sqrt(squared_frobenius_distance(a, b));
}

inline double squared_frobenius_norm(const Matrix& a) {
  double sum = 0.0;
  for (double x : a.data()) sum += x * x;
  return sum;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" +
                         detail::shape_str(a.rows(), a.cols()) + " * " +
                         detail::shape_str(b.rows(), b.cols()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous; the reduction order over k is
  // fixed so results do not depend on threading.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

inline Matrix matmul(const Matrix& a, const BinaryMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" +
                         detail::shape_str(a.rows(), a.cols()) + " * " +
                         detail::shape_str(b.rows(), b.cols()) + ")");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j)
        if (b(k, j)) out_row[j] += aik;
    }
  }
  return out;
}

/// A * B^T without materializing the transpose.
inline Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("matmul_transposed: inner dimensions differ");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < ar.size(); ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

/// Root mean squared pixel error of column `l`, averaged over the rows.
inline double column_rmse(const Matrix& v, const Matrix& r, std::size_t l) {
  if (!v.same_shape(r)) throw DimensionError("column_rmse: shapes differ");
  if (l >= v.cols()) {
    throw IndexError("column_rmse: column " + std::to_string(l) +
                     " out of range for " + std::to_string(v.cols()) + " columns");
  }
  double sum = 0.0;
  for (std::size_t row = 0; row < v.rows(); ++row) {
    const double d = v(row, l) - r(row, l);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(v.rows()));
}

inline double mean_rmse(const Matrix& v, const Matrix& r) {
  if (!v.same_shape(r)) throw DimensionError("mean_rmse: shapes differ");
  double sum = 0.0;
  for (std::size_t l = 0; l < v.cols(); ++l) sum += column_rmse(v, r, l);
  return sum / static_cast<double>(v.cols());
}

}  // namespace nbmf
