#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "uavsac/errors.hpp"

namespace uavsac {

// Dense row-major matrix with value semantics.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw TopologyError("Matrix: value count does not match shape");
  }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  static Matrix row_vector(std::span<const T> v) { return Matrix(1, v.size(), std::vector<T>(v.begin(), v.end())); }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// C = A * B
template <typename T>
void gemm(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  if (a.cols != b.rows) throw TopologyError("gemm: inner dimensions differ");
  c = Matrix<T>(a.rows, b.cols);
  const std::size_t n = b.cols;
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* ci = c.row(i);
    const T* ai = a.row(i);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const T aip = ai[p];
      if (aip == T(0)) continue;
      const T* bp = b.row(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A * B^T
template <typename T>
void gemm_nt_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (std::size_t p = 0; p < b.rows; ++p) {
      const T* bp = b.row(p);
      T s = 0;
      for (std::size_t j = 0; j < a.cols; ++j) s += ai[j] * bp[j];
      ci[p] += s;
    }
  }
}

// C += A^T * B
template <typename T>
void gemm_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* ai = a.row(i);
    const T* bi = b.row(i);
    for (std::size_t p = 0; p < a.cols; ++p) {
      const T aip = ai[p];
      if (aip == T(0)) continue;
      T* cp = c.row(p);
      for (std::size_t j = 0; j < b.cols; ++j) cp[j] += aip * bi[j];
    }
  }
}

}  // namespace uavsac
