// SPDX-License-Identifier: Apache-2.0

#include "spiel/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spiel/error.hpp"

namespace spiel {
namespace {

template <typename T>
void check_grads(std::span<const T> grads, std::size_t expected, const char* who) {
  if (grads.size() != expected) {
    throw Error(std::string(who) + ": got " + std::to_string(grads.size()) + " gradients for " +
                std::to_string(expected) + " entries");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      throw Error(std::string(who) + ": non-finite gradient at entry " + std::to_string(k));
    }
  }
}

}  // namespace

double bias_correction(double beta, uint32_t age) {
  return 1.0 / (1.0 - std::pow(beta, static_cast<double>(age)));
}

template <typename T>
void adam_step(AdamState<T>& state, DeltaSlice<T>& slice, std::span<const T> grads) {
  const std::size_t n = slice.size();
  check_grads(grads, n, "adam_step");
  if (state.m.size() != n || state.v.size() != n) throw Error("adam_step: state size mismatch");
  const auto& h = state.hyper;
  const T beta1 = static_cast<T>(h.beta1);
  const T beta2 = static_cast<T>(h.beta2);
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  const T decay = static_cast<T>(1.0 - h.lr * h.weight_decay);
  for (std::size_t k = 0; k < n; ++k) {
    const uint32_t age = ++slice.ages[k];
    const T g = grads[k];
    if (h.weight_decay != 0.0) slice.values[k] *= decay;
    state.m[k] = beta1 * state.m[k] + (T(1) - beta1) * g;
    state.v[k] = beta2 * state.v[k] + (T(1) - beta2) * g * g;
    const T m_hat = state.m[k] * static_cast<T>(bias_correction(h.beta1, age));
    const T v_hat = state.v[k] * static_cast<T>(bias_correction(h.beta2, age));
    slice.values[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

template <typename T>
void seed_momenta(AdamState<T>& state, DeltaSlice<T>& slice, std::span<const uint64_t> grown,
                  std::span<const T> mean_grad, std::span<const T> mean_sq_grad, uint32_t age) {
  if (mean_grad.size() != grown.size() || mean_sq_grad.size() != grown.size()) {
    throw Error("seed_momenta: statistics length does not match grown positions");
  }
  for (std::size_t g = 0; g < grown.size(); ++g) {
    const auto it = std::lower_bound(slice.indices.begin(), slice.indices.end(), grown[g]);
    if (it == slice.indices.end() || *it != grown[g]) {
      throw Error("seed_momenta: index " + std::to_string(grown[g]) + " is not active");
    }
    if (mean_sq_grad[g] < T(0)) throw Error("seed_momenta: negative second moment");
    const auto k = static_cast<std::size_t>(it - slice.indices.begin());
    state.m[k] = mean_grad[g];
    state.v[k] = mean_sq_grad[g];
    slice.ages[k] = age;
  }
}

template <typename T>
void DenseAdam<T>::step(std::span<T> params, std::span<const T> grads, uint64_t t) {
  check_grads(grads, m_.size(), "dense adam");
  if (params.size() != m_.size()) throw Error("dense adam: parameter size mismatch");
  const T beta1 = static_cast<T>(hyper_.beta1);
  const T beta2 = static_cast<T>(hyper_.beta2);
  const T lr = static_cast<T>(hyper_.lr);
  const T eps = static_cast<T>(hyper_.eps);
  const T decay = static_cast<T>(1.0 - hyper_.lr * hyper_.weight_decay);
  const auto age = static_cast<uint32_t>(t);
  const T c1 = static_cast<T>(bias_correction(hyper_.beta1, age));
  const T c2 = static_cast<T>(bias_correction(hyper_.beta2, age));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const T g = grads[k];
    if (hyper_.weight_decay != 0.0) params[k] *= decay;
    m_[k] = beta1 * m_[k] + (T(1) - beta1) * g;
    v_[k] = beta2 * v_[k] + (T(1) - beta2) * g * g;
    params[k] -= lr * (m_[k] * c1) / (std::sqrt(v_[k] * c2) + eps);
  }
}

template <typename T>
void sm3_accumulate(Sm3State<T>& state, std::span<const T> dense_grad) {
  if (dense_grad.size() != state.rows * state.cols) {
    throw Error("sm3_accumulate: gradient has " + std::to_string(dense_grad.size()) +
                " entries, expected " + std::to_string(state.rows * state.cols));
  }
  // Row maxima in one pass; column maxima kept in a cols-sized scratch.
  std::vector<T> col_max(state.cols, T(0));
  for (uint64_t i = 0; i < state.rows; ++i) {
    T row_max = T(0);
    const T* g = dense_grad.data() + i * state.cols;
    for (uint64_t j = 0; j < state.cols; ++j) {
      const T sq = g[j] * g[j];
      row_max = std::max(row_max, sq);
      col_max[j] = std::max(col_max[j], sq);
    }
    state.row_acc[i] += row_max;
  }
  for (uint64_t j = 0; j < state.cols; ++j) state.col_acc[j] += col_max[j];
}

template <typename T>
void sm3_accumulate_active(Sm3State<T>& state, std::span<const uint64_t> indices,
                           std::span<const T> grads) {
  check_grads(grads, indices.size(), "sm3_accumulate_active");
  std::vector<T> row_max(state.rows, T(0));
  std::vector<T> col_max(state.cols, T(0));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const uint64_t i = indices[k] / state.cols;
    const uint64_t j = indices[k] % state.cols;
    if (i >= state.rows) throw Error("sm3_accumulate_active: index out of range");
    const T sq = grads[k] * grads[k];
    row_max[i] = std::max(row_max[i], sq);
    col_max[j] = std::max(col_max[j], sq);
  }
  for (uint64_t i = 0; i < state.rows; ++i) state.row_acc[i] += row_max[i];
  for (uint64_t j = 0; j < state.cols; ++j) state.col_acc[j] += col_max[j];
}

template <typename T>
void sm3_step(Sm3State<T>& state, DeltaSlice<T>& slice, std::span<const T> grads) {
  check_grads(grads, slice.size(), "sm3_step");
  const auto& h = state.hyper;
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  const T decay = static_cast<T>(1.0 - h.lr * h.weight_decay);
  for (std::size_t k = 0; k < slice.size(); ++k) {
    ++slice.ages[k];
    const uint64_t i = slice.indices[k] / state.cols;
    const uint64_t j = slice.indices[k] % state.cols;
    const T nu = std::min(state.row_acc[i], state.col_acc[j]);
    if (h.weight_decay != 0.0) slice.values[k] *= decay;
    slice.values[k] -= lr * grads[k] / (std::sqrt(nu) + eps);
  }
}

template <typename T>
double MomentumEstimate<T>::at(uint64_t i, uint64_t j) const {
  return std::pow(rank_key(i, j), 0.25);
}

#define SPIEL_INSTANTIATE(T)                                                                     \
  template void adam_step<T>(AdamState<T>&, DeltaSlice<T>&, std::span<const T>);                 \
  template void seed_momenta<T>(AdamState<T>&, DeltaSlice<T>&, std::span<const uint64_t>,        \
                                std::span<const T>, std::span<const T>, uint32_t);               \
  template class DenseAdam<T>;                                                                   \
  template void sm3_accumulate<T>(Sm3State<T>&, std::span<const T>);                             \
  template void sm3_accumulate_active<T>(Sm3State<T>&, std::span<const uint64_t>,                \
                                         std::span<const T>);                                    \
  template void sm3_step<T>(Sm3State<T>&, DeltaSlice<T>&, std::span<const T>);                   \
  template class MomentumEstimate<T>;

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
