// SPDX-License-Identifier: Apache-2.0
//
// Low-rank adapter baseline.
//
// In the column-vector convention an adapted layer computes
//   y = W x + (alpha / r) B A x,  A: r x d_in, B: d_out x r.
// Our weights are stored as row-major (d_in x d_out) and applied as Y = X W,
// so the merged weight is W' = W + (alpha / r) (B A)^T.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "spiel/matrix.hpp"
#include "spiel/network.hpp"

namespace spiel {

template <typename T>
struct LoraFactors {
  Matrix<T> a;  // r x d_in
  Matrix<T> b;  // d_out x r
};

// W' = W + scaling * (B A)^T, W row-major (d_in x d_out).
template <typename T>
std::vector<T> lora_merge(const LoraFactors<T>& f, T scaling, std::span<const T> w);

// Unmerged forward without dropout: Y = X W + scaling * (X A^T) B^T.
template <typename T>
Matrix<T> lora_forward(const LoraFactors<T>& f, T scaling, std::span<const T> w,
                       const Matrix<T>& x);

// Trainable adapter on every layer of a network, with input dropout on the
// low-rank path during training.
template <typename T>
class LoraAdapter final : public LinearBranch<T> {
 public:
  // A is drawn uniformly from +-1/sqrt(d_in), B starts at zero.
  LoraAdapter(const MlpSpec& spec, std::size_t rank, double alpha, double dropout, uint64_t seed);

  std::size_t rank() const { return rank_; }
  T scaling() const { return scaling_; }
  void set_training(bool training) { training_ = training; }

  std::vector<LoraFactors<T>>& factors() { return factors_; }
  const std::vector<LoraFactors<T>>& factors() const { return factors_; }
  std::vector<LoraFactors<T>>& grads() { return grads_; }
  void zero_grad();

  uint64_t parameter_count() const;

  void forward(std::size_t layer, const Matrix<T>& x, Matrix<T>& z) override;
  void backward(std::size_t layer, const Matrix<T>& x, const Matrix<T>& dz,
                Matrix<T>* dx) override;

 private:
  std::size_t rank_;
  T scaling_;
  double dropout_;
  bool training_ = true;
  std::mt19937_64 rng_;
  std::vector<LoraFactors<T>> factors_;
  std::vector<LoraFactors<T>> grads_;
  // Per layer: dropout mask (already divided by the keep probability) and
  // U = dropout(X) A^T from the last forward.
  std::vector<Matrix<T>> mask_;
  std::vector<Matrix<T>> u_;
};

}  // namespace spiel
