// SPDX-License-Identifier: Apache-2.0
//
// Small dense helpers. Vocabularies and feature dimensions here are tiny, so
// plain std::vector storage is all we need.

#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace thrlab {

using Vec = std::vector<double>;

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// y = M x
inline Vec matvec(const Matrix& m, std::span<const double> x) {
  Vec y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

/// y = M^T x
inline Vec matvec_t(const Matrix& m, std::span<const double> x) {
  Vec y(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) y[c] += xr * row[c];
  }
  return y;
}

/// M += scale * u v^T
inline void add_outer(Matrix& m, double scale, std::span<const double> u,
                      std::span<const double> v) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ur = scale * u[r];
    if (ur == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += ur * v[c];
  }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace thrlab
