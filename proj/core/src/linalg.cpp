#include "colberter/linalg.hpp"

#include <cassert>

namespace colberter {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

namespace {

template <typename T>
Vector row_times_impl(std::span<const T> x, const Matrix& m) {
  assert(x.size() == m.rows());
  Vector out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = static_cast<double>(x[r]);
    if (xr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += xr * row[c];
  }
  return out;
}

}  // namespace

Vector row_times(std::span<const double> x, const Matrix& m) { return row_times_impl(x, m); }
Vector row_times(std::span<const float> x, const Matrix& m) { return row_times_impl(x, m); }

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

void add_outer(Matrix& out, std::span<const double> x, std::span<const double> y, double scale) {
  assert(out.rows() == x.size() && out.cols() == y.size());
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double xr = scale * x[r];
    if (xr == 0.0) continue;
    auto row = out.row(r);
    for (std::size_t c = 0; c < y.size(); ++c) row[c] += xr * y[c];
  }
}

}  // namespace colberter
