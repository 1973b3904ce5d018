#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace colberter {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row vector times matrix: x (1 x rows) * m (rows x cols). Sizes must agree.
Vector row_times(std::span<const double> x, const Matrix& m);
Vector row_times(std::span<const float> x, const Matrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double dot(std::span<const float> a, std::span<const float> b);

/// out += scale * x^T y  (outer product accumulation into a rows x cols matrix)
void add_outer(Matrix& out, std::span<const double> x, std::span<const double> y, double scale);

}  // namespace colberter
