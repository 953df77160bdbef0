// SPDX-License-Identifier: Apache-2.0
//
// Dense loops shared by the network, the quantized forward and the oracles.
// Every reduction runs in a fixed order so that two paths computing the same
// quantity produce bit-identical results.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "spiel/matrix.hpp"

namespace spiel::kernels {

// y = x * w, with w a row-major (d_in x d_out) matrix.
template <typename T>
void matmul(const Matrix<T>& x, std::span<const T> w, std::size_t d_out, Matrix<T>& y) {
  const std::size_t d_in = x.cols();
  y = Matrix<T>(x.rows(), d_out);
  for (std::size_t b = 0; b < x.rows(); ++b) {
    const T* xr = x.row(b);
    T* yr = y.row(b);
    for (std::size_t i = 0; i < d_in; ++i) {
      const T xi = xr[i];
      const T* wr = w.data() + i * d_out;
      for (std::size_t o = 0; o < d_out; ++o) yr[o] += xi * wr[o];
    }
  }
}

// dx = dy * w^T.
template <typename T>
void matmul_transposed(const Matrix<T>& dy, std::span<const T> w, std::size_t d_in,
                       Matrix<T>& dx) {
  const std::size_t d_out = dy.cols();
  dx = Matrix<T>(dy.rows(), d_in);
  for (std::size_t b = 0; b < dy.rows(); ++b) {
    const T* gr = dy.row(b);
    T* xr = dx.row(b);
    for (std::size_t i = 0; i < d_in; ++i) {
      const T* wr = w.data() + i * d_out;
      T acc = T(0);
      for (std::size_t o = 0; o < d_out; ++o) acc += gr[o] * wr[o];
      xr[i] = acc;
    }
  }
}

// (x^T dy)[r, c] = sum_b x[b, r] * dy[b, c], summed in batch order.
template <typename T>
T column_dot(const Matrix<T>& x, std::size_t r, const Matrix<T>& dy, std::size_t c) {
  T acc = T(0);
  for (std::size_t b = 0; b < x.rows(); ++b) acc += x(b, r) * dy(b, c);
  return acc;
}

// Full x^T dy into a row-major (d_in x d_out) buffer; each entry uses
// column_dot's summation order.
template <typename T>
void outer_grad(const Matrix<T>& x, const Matrix<T>& dy, std::span<T> out) {
  const std::size_t d_in = x.cols();
  const std::size_t d_out = dy.cols();
  for (std::size_t r = 0; r < d_in; ++r) {
    for (std::size_t c = 0; c < d_out; ++c) out[r * d_out + c] = column_dot(x, r, dy, c);
  }
}

}  // namespace spiel::kernels
