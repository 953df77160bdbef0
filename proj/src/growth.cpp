// SPDX-License-Identifier: Apache-2.0

#include "spiel/growth.hpp"

#include <algorithm>
#include <cmath>

#include "spiel/error.hpp"

namespace spiel {

DropCriterion parse_drop_criterion(const std::string& name) {
  if (name == "delta-change" || name == "delta_change") return DropCriterion::kDeltaChange;
  if (name == "magnitude") return DropCriterion::kMagnitude;
  throw ConfigError("unknown drop criterion '" + name + "' (expected delta-change or magnitude)");
}

const char* to_string(DropCriterion c) {
  return c == DropCriterion::kDeltaChange ? "delta-change" : "magnitude";
}

std::vector<uint64_t> TopK::take_sorted_indices() {
  std::vector<uint64_t> out;
  out.reserve(heap_.size());
  while (!heap_.empty()) {
    out.push_back(heap_.top().index);
    heap_.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
std::vector<std::size_t> select_drop(const DeltaSlice<T>& slice, std::size_t k,
                                     DropCriterion criterion) {
  if (k > slice.size()) {
    throw Error("select_drop: k = " + std::to_string(k) + " exceeds " +
                std::to_string(slice.size()) + " active entries");
  }
  // Slice positions are ascending in flat index, so ranking by position
  // applies the lower-flat-index tie rule.
  TopK top(k);
  for (std::size_t p = 0; p < slice.size(); ++p) {
    const T phi = slice.values[p];
    const T score = criterion == DropCriterion::kMagnitude ? std::fabs(phi)
                                                           : std::fabs(phi - slice.phi0[p]);
    top.offer(-static_cast<double>(score), p);
  }
  const auto picked = top.take_sorted_indices();
  return {picked.begin(), picked.end()};
}

template <typename U>
void erase_positions(std::vector<U>& values, std::span<const std::size_t> sorted_positions) {
  std::size_t write = 0;
  std::size_t next = 0;
  for (std::size_t read = 0; read < values.size(); ++read) {
    if (next < sorted_positions.size() && sorted_positions[next] == read) {
      ++next;
      continue;
    }
    if (write != read) values[write] = std::move(values[read]);
    ++write;
  }
  values.resize(write);
}

template <typename T>
void apply_drop(DeltaSlice<T>& slice, std::span<const std::size_t> positions) {
  std::vector<std::size_t> sorted(positions.begin(), positions.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] >= slice.size()) {
      throw Error("apply_drop: position " + std::to_string(sorted[i]) + " out of range");
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw Error("apply_drop: position " + std::to_string(sorted[i]) + " listed twice");
    }
  }
  erase_positions(slice.indices, sorted);
  erase_positions(slice.values, sorted);
  erase_positions(slice.phi0, sorted);
  erase_positions(slice.ages, sorted);
}

template <typename T>
void ag_estimation_step(CandidateSet<T>& cands, std::span<const T> dense_grad,
                        std::span<const uint64_t> active, std::size_t capacity) {
  if (cands.batches_seen == 0) {
    TopK top(capacity);
    std::size_t a = 0;
    for (uint64_t j = 0; j < dense_grad.size(); ++j) {
      while (a < active.size() && active[a] < j) ++a;
      if (a < active.size() && active[a] == j) continue;
      top.offer(std::fabs(static_cast<double>(dense_grad[j])), j);
    }
    cands.indices = top.take_sorted_indices();
    cands.grad_sum.assign(cands.indices.size(), T(0));
    cands.grad_sq_sum.assign(cands.indices.size(), T(0));
  }
  for (std::size_t k = 0; k < cands.indices.size(); ++k) {
    const T g = dense_grad[cands.indices[k]];
    cands.grad_sum[k] += g;
    cands.grad_sq_sum[k] += g * g;
  }
  ++cands.batches_seen;
}

template <typename T>
GrowthSelection<T> select_grow_ag(const CandidateSet<T>& cands, std::size_t k) {
  GrowthSelection<T> out;
  if (k == 0 || cands.indices.empty()) return out;
  const T inv = T(1) / static_cast<T>(cands.batches_seen);
  TopK top(k);
  for (std::size_t c = 0; c < cands.indices.size(); ++c) {
    top.offer(std::fabs(static_cast<double>(cands.grad_sum[c] * inv)), cands.indices[c]);
  }
  out.indices = top.take_sorted_indices();
  out.mean_grad.reserve(out.indices.size());
  out.mean_sq_grad.reserve(out.indices.size());
  for (uint64_t idx : out.indices) {
    const auto c = static_cast<std::size_t>(
        std::lower_bound(cands.indices.begin(), cands.indices.end(), idx) - cands.indices.begin());
    out.mean_grad.push_back(cands.grad_sum[c] * inv);
    out.mean_sq_grad.push_back(cands.grad_sq_sum[c] * inv);
  }
  return out;
}

template <typename T>
std::vector<uint64_t> select_grow_ma(const Sm3State<T>& sm3, std::span<const uint64_t> active,
                                     std::size_t k) {
  const auto estimate = momentum_estimate(sm3);
  TopK top(k);
  std::size_t a = 0;
  for (uint64_t i = 0; i < sm3.rows; ++i) {
    for (uint64_t j = 0; j < sm3.cols; ++j) {
      const uint64_t flat = i * sm3.cols + j;
      while (a < active.size() && active[a] < flat) ++a;
      if (a < active.size() && active[a] == flat) continue;
      top.offer(estimate.rank_key(i, j), flat);
    }
  }
  return top.take_sorted_indices();
}

template void erase_positions<uint64_t>(std::vector<uint64_t>&, std::span<const std::size_t>);
template void erase_positions<uint32_t>(std::vector<uint32_t>&, std::span<const std::size_t>);
template void erase_positions<int64_t>(std::vector<int64_t>&, std::span<const std::size_t>);

#define SPIEL_INSTANTIATE(T)                                                                   \
  template std::vector<std::size_t> select_drop<T>(const DeltaSlice<T>&, std::size_t,          \
                                                   DropCriterion);                             \
  template void apply_drop<T>(DeltaSlice<T>&, std::span<const std::size_t>);                   \
  template void erase_positions<T>(std::vector<T>&, std::span<const std::size_t>);             \
  template void ag_estimation_step<T>(CandidateSet<T>&, std::span<const T>,                    \
                                      std::span<const uint64_t>, std::size_t);                 \
  template GrowthSelection<T> select_grow_ag<T>(const CandidateSet<T>&, std::size_t);          \
  template std::vector<uint64_t> select_grow_ma<T>(const Sm3State<T>&,                         \
                                                   std::span<const uint64_t>, std::size_t);

SPIEL_INSTANTIATE(float)
SPIEL_INSTANTIATE(double)
#undef SPIEL_INSTANTIATE

}  // namespace spiel
