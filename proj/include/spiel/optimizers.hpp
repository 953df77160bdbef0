// SPDX-License-Identifier: Apache-2.0
//
// Optimizers over the sparse delta values.
//
// Adam keeps m and v aligned with the slice entries and bias-corrects each
// entry with its own age, since entries are (re)grown at different times.
// SM3 keeps one accumulator per row and per column of the parameter matrix.
// Both apply decoupled weight decay to phi, which pulls the fine-tuned
// weights back toward their pretrained values.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spiel/delta_slice.hpp"

namespace spiel {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  AdamHyper hyper;

  static AdamState zeros(std::size_t n, AdamHyper hyper) {
    return {std::vector<T>(n, T(0)), std::vector<T>(n, T(0)), hyper};
  }
  uint64_t persistent_scalars() const { return m.size() + v.size(); }
};

// 1 / (1 - beta^age).
double bias_correction(double beta, uint32_t age);

// Increments every age, updates the moments and moves slice.values:
//   phi <- phi * (1 - lr * wd)
//   phi <- phi - lr * m_hat / (sqrt(v_hat) + eps)
// Throws on a non-finite gradient before touching any state.
template <typename T>
void adam_step(AdamState<T>& state, DeltaSlice<T>& slice, std::span<const T> grads);

// Seeds m, v and the age of freshly grown entries, identified by flat index.
template <typename T>
void seed_momenta(AdamState<T>& state, DeltaSlice<T>& slice, std::span<const uint64_t> grown,
                  std::span<const T> mean_grad, std::span<const T> mean_sq_grad, uint32_t age);

// Plain dense Adam with a single shared step counter, for full fine-tuning,
// pretraining and the LoRA baseline.
template <typename T>
class DenseAdam {
 public:
  DenseAdam(std::size_t n, AdamHyper hyper) : m_(n, T(0)), v_(n, T(0)), hyper_(hyper) {}
  // `t` is the 1-based step shared by all parameters of the model.
  void step(std::span<T> params, std::span<const T> grads, uint64_t t);
  uint64_t persistent_scalars() const { return m_.size() + v_.size(); }

 private:
  std::vector<T> m_;
  std::vector<T> v_;
  AdamHyper hyper_;
};

struct Sm3Hyper {
  double lr = 1e-2;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct Sm3State {
  uint64_t rows = 0;
  uint64_t cols = 0;
  std::vector<T> row_acc;
  std::vector<T> col_acc;
  Sm3Hyper hyper;

  static Sm3State zeros(uint64_t rows, uint64_t cols, Sm3Hyper hyper) {
    return {rows, cols, std::vector<T>(rows, T(0)), std::vector<T>(cols, T(0)), hyper};
  }
  uint64_t persistent_scalars() const { return row_acc.size() + col_acc.size(); }
};

// r[i] += max_j g[i,j]^2 and c[j] += max_i g[i,j]^2 over a dense row-major
// gradient. The gradient is only read.
template <typename T>
void sm3_accumulate(Sm3State<T>& state, std::span<const T> dense_grad);

// Same rule restricted to the active coordinates.
template <typename T>
void sm3_accumulate_active(Sm3State<T>& state, std::span<const uint64_t> indices,
                           std::span<const T> grads);

// For each active (i, j): nu = min(r[i], c[j]),
//   phi <- phi * (1 - lr * wd) - lr * g / (sqrt(nu) + eps).
// Ages are incremented as in adam_step.
template <typename T>
void sm3_step(Sm3State<T>& state, DeltaSlice<T>& slice, std::span<const T> grads);

// Implicit |m_hat|_{ij} = (r_i c_j)^{1/4}. Never materialized.
template <typename T>
class MomentumEstimate {
 public:
  explicit MomentumEstimate(const Sm3State<T>& state) : state_(state) {}
  uint64_t rows() const { return state_.rows; }
  uint64_t cols() const { return state_.cols; }
  double at(uint64_t i, uint64_t j) const;
  // r_i * c_j; ranks identically to at().
  double rank_key(uint64_t i, uint64_t j) const {
    return static_cast<double>(state_.row_acc[i]) * static_cast<double>(state_.col_acc[j]);
  }

 private:
  const Sm3State<T>& state_;
};

template <typename T>
MomentumEstimate<T> momentum_estimate(const Sm3State<T>& state) {
  return MomentumEstimate<T>(state);
}

}  // namespace spiel
